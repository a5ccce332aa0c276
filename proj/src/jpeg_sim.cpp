#include "djf/jpeg_sim.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "djf/layers.hpp"  // dct8_basis_flat

namespace djf {

const std::array<int, 64>& base_luminance_table() {
    static const std::array<int, 64> base = {
        16, 11, 10, 16, 24,  40,  51,  61,   //
        12, 12, 14, 19, 26,  58,  60,  55,   //
        14, 13, 16, 24, 40,  57,  69,  56,   //
        14, 17, 22, 29, 51,  87,  80,  62,   //
        18, 22, 37, 56, 68,  109, 103, 77,   //
        24, 35, 55, 64, 81,  104, 113, 92,   //
        49, 64, 78, 87, 103, 121, 120, 101,  //
        72, 92, 95, 98, 112, 100, 103, 99};
    return base;
}

QuantTable quant_table_for(int qf) {
    if (qf < 1 || qf > 100)
        throw std::invalid_argument("quality factor must be in [1,100], got " +
                                    std::to_string(qf));
    const int scale = (qf < 50) ? 5000 / qf : 200 - 2 * qf;
    QuantTable t;
    const auto& base = base_luminance_table();
    for (int i = 0; i < 64; ++i) {
        int v = (base[i] * scale + 50) / 100;
        t.q[i] = std::min(255, std::max(1, v));
    }
    return t;
}

static void check_block_divisible(int rows, int cols) {
    if (rows % 8 != 0 || cols % 8 != 0 || rows == 0 || cols == 0)
        throw std::invalid_argument("patch extents must be positive multiples of 8, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
}

// Separable 8-point orthonormal DCT-II matrix: M[c][i].
static const double* dct8_matrix() {
    static const std::array<double, 64> m = [] {
        std::array<double, 64> out{};
        const double pi = 3.14159265358979323846;
        for (int c = 0; c < 8; ++c) {
            double a = (c == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int i = 0; i < 8; ++i)
                out[c * 8 + i] = a * std::cos((2 * i + 1) * c * pi / 16.0);
        }
        return out;
    }();
    return m.data();
}

Tensor<double> dct8_blocks(const Patch& image) {
    check_block_divisible(image.rows, image.cols);
    const int bh = image.rows / 8, bw = image.cols / 8;
    Tensor<double> out({bh, bw, 64});
    const double* M = dct8_matrix();
    double blk[64], tmp[64];
    for (int by = 0; by < bh; ++by)
        for (int bx = 0; bx < bw; ++bx) {
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    blk[i * 8 + j] = image.at(by * 8 + i, bx * 8 + j) - 128.0;
            // rows: tmp = blk * M^T
            for (int i = 0; i < 8; ++i)
                for (int c = 0; c < 8; ++c) {
                    double s = 0;
                    for (int j = 0; j < 8; ++j) s += blk[i * 8 + j] * M[c * 8 + j];
                    tmp[i * 8 + c] = s;
                }
            // cols: coeff = M * tmp
            for (int c1 = 0; c1 < 8; ++c1)
                for (int c2 = 0; c2 < 8; ++c2) {
                    double s = 0;
                    for (int i = 0; i < 8; ++i) s += M[c1 * 8 + i] * tmp[i * 8 + c2];
                    out.at3(by, bx, c1 * 8 + c2) = s;
                }
        }
    return out;
}

Tensor<double> idct8_blocks(const Tensor<double>& coeffs) {
    if (coeffs.rank() != 3 || coeffs.shape[2] != 64)
        throw std::invalid_argument("idct8_blocks: expected (bh, bw, 64) tensor, got " +
                                    shape_str(coeffs.shape));
    const int bh = coeffs.shape[0], bw = coeffs.shape[1];
    Tensor<double> out({bh * 8, bw * 8, 1});
    const double* M = dct8_matrix();
    double tmp[64], blk[64];
    for (int by = 0; by < bh; ++by)
        for (int bx = 0; bx < bw; ++bx) {
            const double* cf = &coeffs.at3(by, bx, 0);
            // cols: tmp = M^T * cf
            for (int i = 0; i < 8; ++i)
                for (int c2 = 0; c2 < 8; ++c2) {
                    double s = 0;
                    for (int c1 = 0; c1 < 8; ++c1) s += M[c1 * 8 + i] * cf[c1 * 8 + c2];
                    tmp[i * 8 + c2] = s;
                }
            // rows: blk = tmp * M
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j) {
                    double s = 0;
                    for (int c2 = 0; c2 < 8; ++c2) s += tmp[i * 8 + c2] * M[c2 * 8 + j];
                    blk[i * 8 + j] = s + 128.0;
                }
            for (int i = 0; i < 8; ++i)
                for (int j = 0; j < 8; ++j)
                    out.at3(by * 8 + i, bx * 8 + j, 0) = blk[i * 8 + j];
        }
    return out;
}

void quantize_dequantize(Tensor<double>& coeffs, const QuantTable& table) {
    const std::size_t n = coeffs.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double q = static_cast<double>(table.q[i % 64]);
        coeffs.data[i] = std::round(coeffs.data[i] / q) * q;
    }
}

static std::uint8_t round_clamp_pixel(double v) {
    // half-away-from-zero, then clamp to [0, 255]
    double r = (v >= 0.0) ? std::floor(v + 0.5) : std::ceil(v - 0.5);
    if (r < 0.0) return 0;
    if (r > 255.0) return 255;
    return static_cast<std::uint8_t>(r);
}

Patch compress_decompress(const Patch& image, int qf) {
    QuantTable table = quant_table_for(qf);
    Tensor<double> coeffs = dct8_blocks(image);
    quantize_dequantize(coeffs, table);
    Tensor<double> rec = idct8_blocks(coeffs);
    Patch out(image.rows, image.cols);
    for (std::size_t i = 0; i < out.pix.size(); ++i)
        out.pix[i] = round_clamp_pixel(rec.data[i]);
    return out;
}

// Edge-replicating pad up to the next block multiple, as JPEG encoders do
// for images whose extents are not multiples of 8.
static Patch pad_to_blocks(const Patch& src) {
    const int rows = (src.rows + 7) / 8 * 8, cols = (src.cols + 7) / 8 * 8;
    if (rows == src.rows && cols == src.cols) return src;
    Patch out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            out.at(r, c) = src.at(std::min(r, src.rows - 1), std::min(c, src.cols - 1));
    return out;
}

static Patch crop(const Patch& src, int r0, int c0, int rows, int cols) {
    if (r0 < 0 || c0 < 0 || r0 + rows > src.rows || c0 + cols > src.cols)
        throw std::invalid_argument("crop out of bounds");
    Patch out(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out.at(r, c) = src.at(r0 + r, c0 + c);
    return out;
}

DoubleCompressResult double_compress(const Patch& source, const QFPair& pair,
                                     int B, Rng& rng) {
    if (!pair.qf1.has_value())
        throw std::invalid_argument("double_compress: QF1 missing");
    DoubleCompressResult res;
    res.qf1 = *pair.qf1;
    res.qf2 = pair.qf2;
    if (!pair.shifted) {
        if (source.rows != B || source.cols != B)
            throw std::invalid_argument("double_compress aligned: source must be " +
                                        std::to_string(B) + "x" + std::to_string(B));
        res.r = res.c = 0;
        Patch first = compress_decompress(source, res.qf1);
        res.patch = compress_decompress(first, res.qf2);
    } else {
        if (source.rows < B + 7 || source.cols < B + 7)
            throw std::invalid_argument(
                "double_compress shifted: source must be at least " +
                std::to_string(B + 7) + " square, got " + std::to_string(source.rows) +
                "x" + std::to_string(source.cols));
        res.r = (pair.r >= 1 && pair.r <= 6) ? pair.r : rng.uniform_int(1, 6);
        res.c = (pair.c >= 1 && pair.c <= 6) ? pair.c : rng.uniform_int(1, 6);
        // First pass covers the whole (padded) source; the crop at (r, c)
        // misaligns the second pass grid by exactly that shift.
        Patch first = compress_decompress(pad_to_blocks(source), res.qf1);
        Patch shifted = crop(first, res.r, res.c, B, B);
        res.patch = compress_decompress(shifted, res.qf2);
    }
    return res;
}

double psnr(const Patch& a, const Patch& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("psnr: size mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < a.pix.size(); ++i) {
        double d = static_cast<double>(a.pix[i]) - b.pix[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.pix.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(255.0 * 255.0 / mse);
}

}  // namespace djf
