#pragma once

#include <cstdint>
#include <string>

#include "djf/dataset.hpp"
#include "djf/hist_frontend.hpp"
#include "djf/network.hpp"
#include "djf/preprocess.hpp"

namespace djf {

enum class DetectorType : std::uint8_t { Pix = 0, Noise = 1, Hist = 2 };

const char* detector_type_name(DetectorType t);
DetectorType detector_type_from_name(const std::string& s);

/// One of the three double-compression detectors. The network always ends in
/// SoftMax; for hist, the first `frontend_layers` layers are the DCT-histogram
/// front end and the per-detector preprocessing handle is empty.
struct Detector {
    DetectorType kind = DetectorType::Pix;
    int B = 64;
    std::size_t frontend_layers = 0;
    Network<float> net;

    MeanImage mean;           // pix
    DenoiserConfig denoiser;  // noise
    HistConfig hist;          // hist

    bool has_mean() const { return mean.count > 0; }
};

/// Builds the reference architecture for the given kind and patch size:
/// Conv(5,1,30)-Pool(2,2)-Conv(5,1,30)-Pool(2,2)-Conv(5,1,30)-Pool(2,2)-
/// IP(500)-ReLU-IP(2)-SoftMax, with 3x3 conv kernels (and the histogram
/// front end prepended) for hist.
Detector build_detector(DetectorType kind, int B, std::uint64_t init_seed,
                        const HistConfig& hist = HistConfig::defaults(),
                        const DenoiserConfig& denoiser = DenoiserConfig{});

/// The tensor fed to the network's first layer (after per-kind preprocessing;
/// raw pixels for hist, whose front end is part of the graph).
Tensor<float> detector_input(const Detector& det, const Patch& image);

/// Probability of H1 (double compression) for one patch.
double predict(Detector& det, const Patch& image);

/// Layer-by-layer output shapes for the detector's CNN given its input.
std::vector<std::vector<int>> detector_shape_trace(const Detector& det);

// --- checkpoint I/O ---------------------------------------------------------
// Binary format: magic "DJF1", version, detector kind, B, preprocessing
// artifacts (mean image / denoiser config / histogram config), then per-layer
// (kind tag, shape, float32 little-endian weights).

void save_checkpoint(const Detector& det, const std::string& path);
Detector load_checkpoint(const std::string& path);

}  // namespace djf
