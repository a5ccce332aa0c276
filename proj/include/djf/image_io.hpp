#pragma once

#include <string>
#include <vector>

#include "djf/jpeg_sim.hpp"

namespace djf {

/// Loads an 8-bit grayscale image from a binary PGM (P5) or PNG file.
/// PNG inputs with color or 16-bit depth are converted to 8-bit grayscale.
Patch load_image(const std::string& path);

void save_pgm(const std::string& path, const Patch& image);

/// Grayscale PNG writer (one byte per pixel).
void save_png_gray(const std::string& path, const Patch& image);

/// RGB PNG writer; rgb is row-major, 3 bytes per pixel.
void save_png_rgb(const std::string& path, int rows, int cols,
                  const std::vector<std::uint8_t>& rgb);

/// Case-insensitive extension check for corpus scanning.
bool is_supported_image(const std::string& path);

}  // namespace djf
