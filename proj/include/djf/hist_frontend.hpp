#pragma once

#include <utility>
#include <vector>

#include "djf/jpeg_sim.hpp"
#include "djf/network.hpp"

namespace djf {

struct HistConfig {
    std::vector<std::pair<int, int>> frequencies;  // default: all 63 AC pairs
    std::vector<double> bin_boundaries;            // default: -50..50 (101 values)
    bool trainable_bins = false;
    double gain = 1e6;

    static HistConfig defaults();
    void validate() const;
    int num_bins() const { return static_cast<int>(bin_boundaries.size()) - 1; }
    int num_frequencies() const { return static_cast<int>(frequencies.size()); }
};

/// All 63 AC frequency pairs in (c1, c2) raster order, (0,0) excluded.
std::vector<std::pair<int, int>> all_ac_frequencies();

/// Appends the three front-end layers (DCT filterbank, soft counting,
/// differencing) to `net`; returns the number of layers appended.
template <class T>
std::size_t append_hist_frontend(Network<T>& net, const HistConfig& cfg) {
    cfg.validate();
    net.template add<DctFilterbank<T>>(cfg.frequencies);
    net.template add<SoftCount<T>>(cfg.bin_boundaries, cfg.gain, cfg.trainable_bins);
    net.template add<DiffConv<T>>();
    return 3;
}

/// Per-frequency stride-8 DCT coefficient planes, shape (B/8, B/8, F).
/// No level shift; AC channels are shift-invariant.
Tensor<float> dct_filterbank(const Patch& image, const HistConfig& cfg);

/// Soft cumulative counts, shape (num boundaries, F, 1).
Tensor<float> soft_cumulative(const Tensor<float>& coeff_planes,
                              const HistConfig& cfg);

/// Per-bin soft histogram from the cumulative counts.
Tensor<float> diff_histogram(const Tensor<float>& cumulative);

/// Full feature image: (num_bins, num_frequencies, 1).
Tensor<float> extract_features(const Patch& image, const HistConfig& cfg);

/// Converts a patch to the float (B, B, 1) tensor the hist network consumes.
Tensor<float> patch_to_tensor(const Patch& image);

}  // namespace djf
