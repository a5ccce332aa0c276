#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "djf/rng.hpp"
#include "djf/tensor.hpp"

namespace djf {

/// 8-bit grayscale image patch.
struct Patch {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> pix;

    Patch() = default;
    Patch(int r, int c) : rows(r), cols(c), pix(static_cast<std::size_t>(r) * c, 0) {}

    std::uint8_t& at(int r, int c) { return pix[static_cast<std::size_t>(r) * cols + c]; }
    std::uint8_t at(int r, int c) const {
        return pix[static_cast<std::size_t>(r) * cols + c];
    }
};

/// 8x8 luminance quantization table (entries in [1, 255]).
struct QuantTable {
    std::array<int, 64> q{};
    int at(int i, int j) const { return q[i * 8 + j]; }
};

struct QFPair {
    std::optional<int> qf1;  // absent for single compression
    int qf2 = 0;
    bool shifted = false;
    int r = 0, c = 0;  // grid shift, 1..6 each when shifted
};

/// The ITU-T T.81 Annex K base luminance table.
const std::array<int, 64>& base_luminance_table();

/// IJG quality scaling: scale = 5000/qf (qf < 50) else 200 - 2*qf;
/// entry = clamp(floor((base*scale + 50)/100), 1, 255).
QuantTable quant_table_for(int qf);

/// Blockwise orthonormal 2-D DCT-II of the level-shifted (-128) patch.
/// Output shape (rows/8, cols/8, 64), channel = c1*8 + c2.
Tensor<double> dct8_blocks(const Patch& image);

/// Inverse of dct8_blocks; returns real-valued pixels (128 added back,
/// no rounding or clamping).
Tensor<double> idct8_blocks(const Tensor<double>& coeffs);

/// Quantize/dequantize DCT coefficients in place: c -> round(c/q)*q.
void quantize_dequantize(Tensor<double>& coeffs, const QuantTable& table);

/// One JPEG compress/decompress round at the given quality factor
/// (entropy coding omitted; it is lossless). Pixel rounding is
/// half-away-from-zero; output clamped to [0, 255].
Patch compress_decompress(const Patch& image, int qf);

/// Double compression. Aligned: source must be B x B. Shifted: source must
/// be at least (B+7) x (B+7); the crop offset (r, c) is drawn from {1..6}^2
/// unless already fixed in `pair`.
struct DoubleCompressResult {
    Patch patch;
    int qf1, qf2;
    int r, c;  // (0,0) for aligned
};
DoubleCompressResult double_compress(const Patch& source, const QFPair& pair,
                                     int B, Rng& rng);

double psnr(const Patch& a, const Patch& b);

}  // namespace djf
