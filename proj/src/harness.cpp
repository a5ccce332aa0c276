#include "djf/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "djf/image_io.hpp"

namespace djf {

namespace {

/// Preprocessed network inputs for a list of records, computed once.
/// For hist detectors with frozen bin boundaries the (deterministic)
/// front-end output is cached instead of the raw pixels, and training
/// starts after the front end.
struct CachedInputs {
    std::vector<Tensor<float>> tensors;
    std::size_t start_layer = 0;  // first layer to run during training
};

CachedInputs cache_inputs(Detector& det, const Dataset& ds,
                          const std::vector<std::size_t>& indices) {
    CachedInputs out;
    const bool cache_features =
        det.kind == DetectorType::Hist && !det.hist.trainable_bins;
    out.start_layer = cache_features ? det.frontend_layers : 0;
    out.tensors.reserve(indices.size());
    for (std::size_t idx : indices) {
        Tensor<float> x = detector_input(det, ds.patch(idx));
        if (cache_features) x = det.net.forward(std::move(x), 0, det.frontend_layers);
        out.tensors.push_back(std::move(x));
    }
    return out;
}

std::vector<std::vector<float>> snapshot_params(Network<float>& net) {
    std::vector<std::vector<float>> snap;
    for (auto* p : net.params()) snap.push_back(p->data);
    return snap;
}

void restore_params(Network<float>& net, const std::vector<std::vector<float>>& snap) {
    auto params = net.params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->data = snap[i];
}

}  // namespace

TrainReport train_detector(Detector& det, const Dataset& ds, const SgdConfig& cfg,
                           bool verbose) {
    auto train_idx = ds.split_indices(Split::Train);
    auto val_idx = ds.split_indices(Split::Val);
    if (train_idx.empty() || val_idx.empty())
        throw std::invalid_argument("train_detector: dataset needs both splits");

    if (det.kind == DetectorType::Pix) {
        MeanImage acc;
        for (std::size_t idx : train_idx) accumulate_mean(acc, ds.patch(idx));
        finalize_mean(acc);
        det.mean = std::move(acc);
    }

    if (verbose) std::fprintf(stderr, "caching %zu train inputs...\n", train_idx.size());
    CachedInputs train_in = cache_inputs(det, ds, train_idx);
    if (verbose) std::fprintf(stderr, "caching %zu val inputs...\n", val_idx.size());
    CachedInputs val_in = cache_inputs(det, ds, val_idx);

    std::vector<int> train_labels(train_idx.size()), val_labels(val_idx.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i)
        train_labels[i] = ds.record(train_idx[i]).label;
    for (std::size_t i = 0; i < val_idx.size(); ++i)
        val_labels[i] = ds.record(val_idx[i]).label;

    const std::size_t from = train_in.start_layer;
    SgdOptimizer<float> opt(det.net.trainable_params(), cfg);

    TrainReport report;
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(train_idx.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::vector<std::vector<float>> best = snapshot_params(det.net);
    double best_val = std::numeric_limits<double>::max();
    int since_best = 0;
    long iteration = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        bool finite = true;
        for (std::size_t b = 0; b < order.size() && finite; b += cfg.batch_size) {
            const std::size_t bend = std::min(order.size(), b + cfg.batch_size);
            det.net.zero_grads();
            double batch_loss = 0.0;
            try {
                for (std::size_t i = b; i < bend; ++i) {
                    auto [probs, loss] = forward_backward(
                        det.net, train_in.tensors[order[i]], train_labels[order[i]],
                        from, from);
                    (void)probs;
                    batch_loss += loss;
                }
                const float inv = 1.0f / static_cast<float>(bend - b);
                for (auto* p : det.net.trainable_params())
                    for (auto& g : p->grad) g *= inv;
                if (!std::isfinite(batch_loss)) {
                    finite = false;
                    break;
                }
                opt.step(iteration++, &det.net);
            } catch (const std::runtime_error&) {
                // non-finite activation or gradient: divergence
                finite = false;
                break;
            }
            epoch_loss += batch_loss;
        }
        epoch_loss /= static_cast<double>(order.size());

        if (!finite) {
            report.diverged = true;
            if (verbose) std::fprintf(stderr, "epoch %d: diverged, restoring best\n", epoch);
            break;
        }

        double val_loss = 0.0;
        std::size_t correct = 0;
        for (std::size_t i = 0; i < val_in.tensors.size(); ++i) {
            Tensor<float> logits =
                det.net.forward(val_in.tensors[i], from, det.net.size() - 1);
            auto [probs, loss] = softmax_xent(logits, val_labels[i]);
            val_loss += loss;
            const int pred = probs.data[1] >= probs.data[0] ? 1 : 0;
            if (pred == val_labels[i]) ++correct;
        }
        val_loss /= static_cast<double>(val_in.tensors.size());
        const double val_acc = double(correct) / val_in.tensors.size();

        report.epochs.push_back({epoch, epoch_loss, val_loss, val_acc});
        if (verbose)
            std::fprintf(stderr, "epoch %d: train loss %.4f, val loss %.4f, val acc %.4f\n",
                         epoch, epoch_loss, val_loss, val_acc);

        if (val_loss < best_val) {
            best_val = val_loss;
            best = snapshot_params(det.net);
            report.best_epoch = epoch;
            since_best = 0;
        } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
            if (verbose)
                std::fprintf(stderr, "no improvement for %d epochs, stopping\n",
                             cfg.patience);
            break;
        }
    }

    restore_params(det.net, best);
    // NaN when no epoch finished (diverged immediately): no loss was measured
    report.best_val_loss = report.epochs.empty()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : best_val;
    report.iterations = iteration;
    return report;
}

AccuracyGrid evaluate_detector(Detector& det, const Dataset& ds, Split split) {
    AccuracyGrid grid;
    grid.qf2 = ds.manifest().spec.qf2;
    auto groups = ds.pair_groups(split);

    // true-negative rate over the single-compressed group at QF2
    const auto single_key = std::make_pair(0, grid.qf2);
    auto single_it = groups.find(single_key);
    if (single_it == groups.end() || single_it->second.empty())
        throw std::invalid_argument("evaluate_detector: no single-compressed patches");
    std::size_t tn = 0;
    for (std::size_t idx : single_it->second)
        if (predict(det, ds.patch(idx)) < 0.5) ++tn;
    const double tnr = double(tn) / single_it->second.size();

    std::size_t correct = tn, total = single_it->second.size();
    for (const auto& [key, indices] : groups) {
        if (key == single_key) continue;
        std::size_t tp = 0;
        for (std::size_t idx : indices)
            if (predict(det, ds.patch(idx)) >= 0.5) ++tp;
        grid.cell[key.first] = 0.5 * (double(tp) / indices.size() + tnr);
        correct += tp;
        total += indices.size();
    }
    if (grid.cell.empty())
        throw std::invalid_argument("evaluate_detector: no double-compressed patches");

    double sum = 0.0;
    for (const auto& [qf1, acc] : grid.cell) sum += acc;
    grid.macro = sum / grid.cell.size();
    grid.overall = double(correct) / total;
    grid.count = total;
    return grid;
}

std::string format_grid(const AccuracyGrid& grid) {
    std::string out = "qf1 vs qf2=" + std::to_string(grid.qf2) + "\n";
    char buf[64];
    for (const auto& [qf1, acc] : grid.cell) {
        std::snprintf(buf, sizeof(buf), "  %3d: %.4f\n", qf1, acc);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "  macro: %.4f  overall: %.4f (n=%zu)\n",
                  grid.macro, grid.overall, grid.count);
    out += buf;
    return out;
}

// --- localization -------------------------------------------------------

Heatmap localize(Detector& det, const Patch& image, int window, int stride) {
    if (window != det.B)
        throw std::invalid_argument("localize: window must match detector patch size");
    if (image.rows < window || image.cols < window)
        throw std::invalid_argument("localize: image smaller than the window");
    Heatmap hm;
    hm.window = window;
    hm.stride = stride;
    hm.grid_rows = (image.rows - window) / stride + 1;
    hm.grid_cols = (image.cols - window) / stride + 1;
    hm.score.resize(static_cast<std::size_t>(hm.grid_rows) * hm.grid_cols);
    Patch win(window, window);
    for (int gr = 0; gr < hm.grid_rows; ++gr)
        for (int gc = 0; gc < hm.grid_cols; ++gc) {
            const int r0 = gr * stride, c0 = gc * stride;
            for (int r = 0; r < window; ++r)
                for (int c = 0; c < window; ++c)
                    win.at(r, c) = image.at(r0 + r, c0 + c);
            hm.score[static_cast<std::size_t>(gr) * hm.grid_cols + gc] =
                static_cast<float>(predict(det, win));
        }
    return hm;
}

void save_heatmap_csv(const Heatmap& hm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out.precision(6);
    for (int r = 0; r < hm.grid_rows; ++r) {
        for (int c = 0; c < hm.grid_cols; ++c) {
            if (c) out << ",";
            out << hm.at(r, c);
        }
        out << "\n";
    }
}

void save_heatmap_png(const Heatmap& hm, const std::string& path) {
    Patch img(hm.grid_rows, hm.grid_cols);
    for (int r = 0; r < hm.grid_rows; ++r)
        for (int c = 0; c < hm.grid_cols; ++c) {
            const float s = std::clamp(hm.at(r, c), 0.0f, 1.0f);
            img.at(r, c) = static_cast<std::uint8_t>(std::lround(s * 255.0f));
        }
    save_png_gray(path, img);
}

void save_overlay_png(const Patch& image, const Heatmap& hm,
                      const std::string& path) {
    // per-pixel mean score of the windows covering the pixel
    std::vector<float> sum(static_cast<std::size_t>(image.rows) * image.cols, 0.0f);
    std::vector<int> cover(sum.size(), 0);
    for (int gr = 0; gr < hm.grid_rows; ++gr)
        for (int gc = 0; gc < hm.grid_cols; ++gc) {
            const float s = hm.at(gr, gc);
            for (int r = gr * hm.stride; r < gr * hm.stride + hm.window; ++r)
                for (int c = gc * hm.stride; c < gc * hm.stride + hm.window; ++c) {
                    const std::size_t i = static_cast<std::size_t>(r) * image.cols + c;
                    sum[i] += s;
                    cover[i] += 1;
                }
        }
    std::vector<std::uint8_t> rgb(sum.size() * 3);
    for (std::size_t i = 0; i < sum.size(); ++i) {
        const float a = cover[i] ? std::clamp(sum[i] / cover[i], 0.0f, 1.0f) : 0.0f;
        const float g = static_cast<float>(image.pix[i]);
        rgb[i * 3 + 0] = static_cast<std::uint8_t>(std::lround(g + a * (255.0f - g)));
        rgb[i * 3 + 1] = static_cast<std::uint8_t>(std::lround(g * (1.0f - a)));
        rgb[i * 3 + 2] = static_cast<std::uint8_t>(std::lround(g * (1.0f - a)));
    }
    save_png_rgb(path, image.rows, image.cols, rgb);
}

// --- score fusion ---------------------------------------------------------

std::pair<std::vector<std::vector<double>>, std::vector<int>> fusion_features(
    std::vector<Detector*>& detectors, const Dataset& ds, Split split) {
    if (detectors.empty())
        throw std::invalid_argument("fusion_features: no detectors");
    auto indices = ds.split_indices(split);
    std::vector<std::vector<double>> features;
    std::vector<int> labels;
    features.reserve(indices.size());
    labels.reserve(indices.size());
    for (std::size_t idx : indices) {
        Patch p = ds.patch(idx);
        std::vector<double> f;
        f.reserve(detectors.size());
        for (auto* det : detectors) f.push_back(predict(*det, p));
        features.push_back(std::move(f));
        labels.push_back(ds.record(idx).label);
    }
    return {std::move(features), std::move(labels)};
}

double evaluate_fusion(const RandomForest& forest,
                       std::vector<Detector*>& detectors, const Dataset& ds,
                       Split split) {
    auto [features, labels] = fusion_features(detectors, ds, split);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < features.size(); ++i)
        if (forest.predict(features[i]) == labels[i]) ++correct;
    return double(correct) / features.size();
}

}  // namespace djf
