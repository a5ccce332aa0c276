#include "djf/detectors.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace djf {

const char* detector_type_name(DetectorType t) {
    switch (t) {
        case DetectorType::Pix: return "pix";
        case DetectorType::Noise: return "noise";
        case DetectorType::Hist: return "hist";
    }
    return "?";
}

DetectorType detector_type_from_name(const std::string& s) {
    if (s == "pix") return DetectorType::Pix;
    if (s == "noise") return DetectorType::Noise;
    if (s == "hist") return DetectorType::Hist;
    throw std::invalid_argument("unknown detector kind '" + s + "'");
}

static std::vector<int> cnn_input_shape(DetectorType kind, int B,
                                        const HistConfig& hist) {
    if (kind == DetectorType::Hist) return {hist.num_bins(), hist.num_frequencies(), 1};
    return {B, B, 1};
}

Detector build_detector(DetectorType kind, int B, std::uint64_t init_seed,
                        const HistConfig& hist, const DenoiserConfig& denoiser) {
    if (B < 8 || B % 8 != 0)
        throw std::invalid_argument("detector: B must be a positive multiple of 8");
    Detector det;
    det.kind = kind;
    det.B = B;
    det.hist = hist;
    det.denoiser = denoiser;
    Rng rng(init_seed);

    if (kind == DetectorType::Hist) {
        det.frontend_layers = append_hist_frontend(det.net, hist);
        // normalize counts to per-block frequencies so the CNN input scale is
        // independent of the patch size (and well-conditioned for SGD)
        const int nblocks = (B / 8) * (B / 8);
        det.net.add<Scale<float>>(1.0f / static_cast<float>(nblocks));
        det.frontend_layers += 1;
    }
    const int k = (kind == DetectorType::Hist) ? 3 : 5;
    std::vector<int> shape = cnn_input_shape(kind, B, hist);

    auto* c1 = det.net.add<Conv2d<float>>(k, 1, 30, 1);
    c1->init_weights(rng);
    shape = c1->output_shape(shape);
    det.net.add<MaxPool<float>>(2, 2);
    shape = {pool_out_extent(shape[0], 2, 2), pool_out_extent(shape[1], 2, 2), 30};
    auto* c2 = det.net.add<Conv2d<float>>(k, 30, 30, 1);
    c2->init_weights(rng);
    shape = c2->output_shape(shape);
    det.net.add<MaxPool<float>>(2, 2);
    shape = {pool_out_extent(shape[0], 2, 2), pool_out_extent(shape[1], 2, 2), 30};
    auto* c3 = det.net.add<Conv2d<float>>(k, 30, 30, 1);
    c3->init_weights(rng);
    shape = c3->output_shape(shape);
    det.net.add<MaxPool<float>>(2, 2);
    shape = {pool_out_extent(shape[0], 2, 2), pool_out_extent(shape[1], 2, 2), 30};
    const int flat = shape[0] * shape[1] * shape[2];
    auto* ip1 = det.net.add<InnerProduct<float>>(flat, 500);
    ip1->init_weights(rng);
    det.net.add<ReLU<float>>();
    auto* ip2 = det.net.add<InnerProduct<float>>(500, 2);
    ip2->init_weights(rng);
    det.net.add<SoftMax<float>>();
    return det;
}

Tensor<float> detector_input(const Detector& det, const Patch& image) {
    if (image.rows != det.B || image.cols != det.B)
        throw std::invalid_argument("detector expects " + std::to_string(det.B) +
                                    "x" + std::to_string(det.B) + " patches, got " +
                                    std::to_string(image.rows) + "x" +
                                    std::to_string(image.cols));
    switch (det.kind) {
        case DetectorType::Pix:
            if (!det.has_mean())
                throw std::logic_error("pix detector: mean image not set");
            return subtract_mean(image, det.mean);
        case DetectorType::Noise:
            return noise_residual(image, det.denoiser);
        case DetectorType::Hist:
            return patch_to_tensor(image);
    }
    throw std::logic_error("unreachable");
}

double predict(Detector& det, const Patch& image) {
    Tensor<float> probs = det.net.forward(detector_input(det, image));
    return static_cast<double>(probs.data[1]);
}

std::vector<std::vector<int>> detector_shape_trace(const Detector& det) {
    return det.net.shape_trace({det.B, det.B, 1});
}

// --- checkpoint I/O ---------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'D', 'J', 'F', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_string(std::ostream& out, const std::string& s) {
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in) {
    auto n = read_pod<std::uint32_t>(in);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return s;
}

void write_floats(std::ostream& out, const std::vector<float>& v) {
    write_pod<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_floats(std::istream& in) {
    auto n = read_pod<std::uint64_t>(in);
    std::vector<float> v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& v) {
    write_pod<std::uint64_t>(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in) {
    auto n = read_pod<std::uint64_t>(in);
    std::vector<double> v(n);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated file");
    return v;
}

}  // namespace

void save_checkpoint(const Detector& det, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.write(kMagic, 4);
    write_pod(out, kVersion);
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(det.kind));
    write_pod<std::int32_t>(out, det.B);

    // preprocessing artifacts
    if (det.kind == DetectorType::Pix) {
        write_pod<std::int32_t>(out, det.mean.rows);
        write_pod<std::int32_t>(out, det.mean.cols);
        write_pod<std::uint64_t>(out, det.mean.count);
        write_floats(out, det.mean.mean);
    } else if (det.kind == DetectorType::Noise) {
        write_pod<std::int32_t>(out, det.denoiser.levels);
        write_string(out, det.denoiser.wavelet);
        write_pod<double>(out, det.denoiser.noise_variance);
        write_pod<std::uint32_t>(out,
                                 static_cast<std::uint32_t>(det.denoiser.window_sizes.size()));
        for (int w : det.denoiser.window_sizes) write_pod<std::int32_t>(out, w);
    } else {
        write_pod<double>(out, det.hist.gain);
        write_pod<std::uint8_t>(out, det.hist.trainable_bins ? 1 : 0);
        write_doubles(out, det.hist.bin_boundaries);
        write_pod<std::uint32_t>(out,
                                 static_cast<std::uint32_t>(det.hist.frequencies.size()));
        for (auto [c1, c2] : det.hist.frequencies) {
            write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(c1));
            write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(c2));
        }
    }

    // per-layer kind tags, parameter shapes and weights
    auto& net = const_cast<Network<float>&>(det.net);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(net.size()));
    for (std::size_t i = 0; i < net.size(); ++i) {
        write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(net.layer(i).kind()));
        auto params = net.layer(i).params();
        write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
        for (auto* p : params) {
            write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(p->shape.size()));
            for (int e : p->shape) write_pod<std::int32_t>(out, e);
            write_floats(out, p->data);
        }
    }
}

Detector load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error(path + ": not a DJF1 checkpoint");
    auto version = read_pod<std::uint32_t>(in);
    if (version != kVersion)
        throw std::runtime_error(path + ": unsupported checkpoint version " +
                                 std::to_string(version));
    auto kind = static_cast<DetectorType>(read_pod<std::uint8_t>(in));
    int B = read_pod<std::int32_t>(in);

    MeanImage mean;
    DenoiserConfig denoiser;
    HistConfig hist = HistConfig::defaults();
    if (kind == DetectorType::Pix) {
        mean.rows = read_pod<std::int32_t>(in);
        mean.cols = read_pod<std::int32_t>(in);
        mean.count = read_pod<std::uint64_t>(in);
        mean.mean = read_floats(in);
    } else if (kind == DetectorType::Noise) {
        denoiser.levels = read_pod<std::int32_t>(in);
        denoiser.wavelet = read_string(in);
        denoiser.noise_variance = read_pod<double>(in);
        auto n = read_pod<std::uint32_t>(in);
        denoiser.window_sizes.clear();
        for (std::uint32_t i = 0; i < n; ++i)
            denoiser.window_sizes.push_back(read_pod<std::int32_t>(in));
    } else {
        hist.gain = read_pod<double>(in);
        hist.trainable_bins = read_pod<std::uint8_t>(in) != 0;
        hist.bin_boundaries = read_doubles(in);
        auto n = read_pod<std::uint32_t>(in);
        hist.frequencies.clear();
        for (std::uint32_t i = 0; i < n; ++i) {
            int c1 = read_pod<std::uint8_t>(in);
            int c2 = read_pod<std::uint8_t>(in);
            hist.frequencies.emplace_back(c1, c2);
        }
    }

    Detector det = build_detector(kind, B, /*init_seed=*/0, hist, denoiser);
    det.mean = std::move(mean);

    auto layer_count = read_pod<std::uint32_t>(in);
    if (layer_count != det.net.size())
        throw std::runtime_error(path + ": layer count mismatch");
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        auto tag = static_cast<LayerKind>(read_pod<std::uint8_t>(in));
        if (tag != det.net.layer(i).kind())
            throw std::runtime_error(path + ": layer kind mismatch at index " +
                                     std::to_string(i));
        auto n_params = read_pod<std::uint32_t>(in);
        auto params = det.net.layer(i).params();
        if (n_params != params.size())
            throw std::runtime_error(path + ": parameter count mismatch at layer " +
                                     std::to_string(i));
        for (auto* p : params) {
            auto rank = read_pod<std::uint32_t>(in);
            std::vector<int> shape(rank);
            for (auto& e : shape) e = read_pod<std::int32_t>(in);
            if (shape != p->shape)
                throw std::runtime_error(path + ": parameter shape mismatch at layer " +
                                         std::to_string(i));
            p->data = read_floats(in);
            if (p->data.size() != p->numel())
                throw std::runtime_error(path + ": parameter size mismatch");
        }
    }
    return det;
}

}  // namespace djf
