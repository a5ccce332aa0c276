#include "djf/hist_frontend.hpp"

#include <stdexcept>

namespace djf {

std::vector<std::pair<int, int>> all_ac_frequencies() {
    std::vector<std::pair<int, int>> out;
    out.reserve(63);
    for (int c1 = 0; c1 < 8; ++c1)
        for (int c2 = 0; c2 < 8; ++c2)
            if (c1 != 0 || c2 != 0) out.emplace_back(c1, c2);
    return out;
}

HistConfig HistConfig::defaults() {
    HistConfig cfg;
    cfg.frequencies = all_ac_frequencies();
    cfg.bin_boundaries.reserve(101);
    for (int b = -50; b <= 50; ++b) cfg.bin_boundaries.push_back(double(b));
    return cfg;
}

void HistConfig::validate() const {
    if (frequencies.empty())
        throw std::invalid_argument("hist config: no frequencies");
    for (auto [c1, c2] : frequencies)
        if (c1 < 0 || c1 > 7 || c2 < 0 || c2 > 7)
            throw std::invalid_argument("hist config: frequency out of range");
    if (bin_boundaries.size() < 2)
        throw std::invalid_argument("hist config: need at least 2 bin boundaries");
    for (std::size_t i = 1; i < bin_boundaries.size(); ++i)
        if (bin_boundaries[i] <= bin_boundaries[i - 1])
            throw std::invalid_argument(
                "hist config: boundaries must be strictly increasing");
    if (gain <= 0.0) throw std::invalid_argument("hist config: gain must be > 0");
}

Tensor<float> patch_to_tensor(const Patch& image) {
    Tensor<float> t({image.rows, image.cols, 1});
    for (std::size_t i = 0; i < image.pix.size(); ++i)
        t.data[i] = static_cast<float>(image.pix[i]);
    return t;
}

Tensor<float> dct_filterbank(const Patch& image, const HistConfig& cfg) {
    cfg.validate();
    DctFilterbank<float> layer(cfg.frequencies);
    return layer.forward(patch_to_tensor(image));
}

Tensor<float> soft_cumulative(const Tensor<float>& coeff_planes,
                              const HistConfig& cfg) {
    cfg.validate();
    SoftCount<float> layer(cfg.bin_boundaries, cfg.gain, false);
    return layer.forward(coeff_planes);
}

Tensor<float> diff_histogram(const Tensor<float>& cumulative) {
    DiffConv<float> layer;
    return layer.forward(cumulative);
}

Tensor<float> extract_features(const Patch& image, const HistConfig& cfg) {
    return diff_histogram(soft_cumulative(dct_filterbank(image, cfg), cfg));
}

}  // namespace djf
