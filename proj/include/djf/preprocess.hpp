#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "djf/jpeg_sim.hpp"
#include "djf/tensor.hpp"

namespace djf {

/// Per-pixel mean over the training split, subtracted before the pixel CNN.
struct MeanImage {
    int rows = 0, cols = 0;
    std::vector<float> mean;
    std::uint64_t count = 0;
};

MeanImage compute_mean_image(const std::vector<const Patch*>& images);
void accumulate_mean(MeanImage& acc, const Patch& image);  // streaming variant
void finalize_mean(MeanImage& acc);

/// Real-valued, unclamped subtraction: image - mean, shaped (B, B, 1).
Tensor<float> subtract_mean(const Patch& image, const MeanImage& mean);

struct DenoiserConfig {
    int levels = 4;
    std::string wavelet = "db4";  // 8-tap orthogonal
    double noise_variance = 9.0;
    std::vector<int> window_sizes = {3, 5, 7, 9};

    void validate() const;
};

/// 2-D matrix of doubles used by the wavelet transform internals.
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;
    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

/// One level of the expansive (symmetric-extension) 2-D DWT.
struct WaveletLevel {
    Mat lh, hl, hh;
    int orig_rows = 0, orig_cols = 0;  // size of the band this level analyzed
};

struct WaveletPyramid {
    std::vector<WaveletLevel> levels;
    Mat approx;  // LL band of the deepest level
};

WaveletPyramid dwt2(const Mat& x, int levels);
Mat idwt2(const WaveletPyramid& pyr);

/// MMSE (Wiener-style) shrinkage denoiser: multi-level DWT, per-coefficient
/// variance estimated as the minimum over sliding-window local means of w^2
/// minus the noise variance, then w *= var/(var + noise_variance). The
/// approximation band is untouched. Returns the unclamped real-valued
/// estimate, shaped (rows, cols, 1).
Tensor<double> wavelet_denoise(const Patch& image, const DenoiserConfig& cfg);

/// image - wavelet_denoise(image), shaped (rows, cols, 1).
Tensor<float> noise_residual(const Patch& image, const DenoiserConfig& cfg);

}  // namespace djf
