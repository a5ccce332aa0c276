#include "djf/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <stdexcept>

namespace djf {

namespace {

std::string lower_ext(const std::string& path) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext;
}

int read_pnm_token(std::istream& in) {
    // skips whitespace and '#' comments
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
        } else if (!std::isspace(c)) {
            in.unget();
            break;
        }
    }
    int value;
    if (!(in >> value)) throw std::runtime_error("PGM: malformed header");
    return value;
}

Patch load_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[2];
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5')
        throw std::runtime_error(path + ": not a binary P5 PGM");
    int cols = read_pnm_token(in);
    int rows = read_pnm_token(in);
    int maxval = read_pnm_token(in);
    if (maxval != 255)
        throw std::runtime_error(path + ": only 8-bit PGM supported (maxval " +
                                 std::to_string(maxval) + ")");
    in.get();  // single whitespace after header
    Patch img(rows, cols);
    in.read(reinterpret_cast<char*>(img.pix.data()),
            static_cast<std::streamsize>(img.pix.size()));
    if (!in) throw std::runtime_error(path + ": truncated PGM data");
    return img;
}

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};

Patch load_png(const std::string& path) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw std::runtime_error("cannot open " + path);
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error(path + ": PNG decode failed");
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    const int color_type = png_get_color_type(png, info);
    if (color_type & PNG_COLOR_MASK_COLOR)
        png_set_rgb_to_gray(png, 1, -1, -1);  // default ITU-R 709 weights
    png_read_update_info(png, info);

    const int rows = static_cast<int>(png_get_image_height(png, info));
    const int cols = static_cast<int>(png_get_image_width(png, info));
    Patch img(rows, cols);
    std::vector<png_bytep> row_ptrs(rows);
    for (int r = 0; r < rows; ++r)
        row_ptrs[r] = img.pix.data() + static_cast<std::size_t>(r) * cols;
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::string& path, int rows, int cols, int color_type,
               int bytes_per_pixel, const std::uint8_t* data) {
    std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot write " + path);
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (!png || !info) throw std::runtime_error("libpng init failed");
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error(path + ": PNG encode failed");
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, cols, rows, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> row_ptrs(rows);
    for (int r = 0; r < rows; ++r)
        row_ptrs[r] = const_cast<png_bytep>(
            data + static_cast<std::size_t>(r) * cols * bytes_per_pixel);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

bool is_supported_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    return ext == "pgm" || ext == "png";
}

Patch load_image(const std::string& path) {
    const std::string ext = lower_ext(path);
    if (ext == "pgm") return load_pgm(path);
    if (ext == "png") return load_png(path);
    throw std::runtime_error(path + ": unsupported image format (want .pgm or .png)");
}

void save_pgm(const std::string& path, const Patch& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P5\n" << image.cols << " " << image.rows << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pix.data()),
              static_cast<std::streamsize>(image.pix.size()));
}

void save_png_gray(const std::string& path, const Patch& image) {
    write_png(path, image.rows, image.cols, PNG_COLOR_TYPE_GRAY, 1,
              image.pix.data());
}

void save_png_rgb(const std::string& path, int rows, int cols,
                  const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != static_cast<std::size_t>(rows) * cols * 3)
        throw std::invalid_argument("save_png_rgb: buffer size mismatch");
    write_png(path, rows, cols, PNG_COLOR_TYPE_RGB, 3, rgb.data());
}

}  // namespace djf
