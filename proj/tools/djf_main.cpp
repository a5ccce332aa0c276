// djf: double JPEG compression detection toolkit.
//
// Subcommands: dataset-gen, train, eval, cross-eval, localize, fuse,
// inspect-features. Every run writes the fully resolved configuration next
// to its outputs. Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "djf/config.hpp"
#include "djf/dataset.hpp"
#include "djf/detectors.hpp"
#include "djf/harness.hpp"
#include "djf/hist_frontend.hpp"
#include "djf/image_io.hpp"
#include "djf/random_forest.hpp"

namespace {

using namespace djf;

/// Seed precedence: explicit flag > config file > DJF_SEED env > 1.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag,
                           const Config& cfg) {
    if (flag) return *flag;
    if (cfg.has("seed")) return cfg.get_u64("seed", 1);
    if (const char* env = std::getenv("DJF_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw std::runtime_error("DJF_SEED is not an unsigned integer: " +
                                     std::string(env));
        }
    }
    return 1;
}

Config load_config(const std::string& path) {
    if (path.empty()) return Config{};
    return Config::parse_file(path);
}

Split split_from_name(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    throw std::runtime_error("unknown split '" + s + "' (expected train or val)");
}

void write_grid_csv(const AccuracyGrid& grid, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "qf1,qf2,accuracy\n");
    for (const auto& [qf1, acc] : grid.cell)
        std::fprintf(f, "%d,%d,%.6f\n", qf1, grid.qf2, acc);
    std::fprintf(f, "macro,%d,%.6f\n", grid.qf2, grid.macro);
    std::fclose(f);
}

void write_report_csv(const TrainReport& report, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + path);
    std::fprintf(f, "epoch,train_loss,val_loss,val_accuracy\n");
    for (const auto& e : report.epochs)
        std::fprintf(f, "%d,%.6f,%.6f,%.6f\n", e.epoch, e.train_loss, e.val_loss,
                     e.val_accuracy);
    std::fprintf(f, "best_epoch,%d,,\n", report.best_epoch);
    std::fclose(f);
}

// --- dataset-gen ------------------------------------------------------------

struct DatasetGenArgs {
    std::string corpus, out, config_path;
    std::optional<int> B, qf2, train_count, val_count;
    std::vector<int> qf1_set;
    std::string alignment;
    std::optional<std::uint64_t> seed;
};

int cmd_dataset_gen(const DatasetGenArgs& a) {
    Config cfg = load_config(a.config_path);
    DatasetSpec spec;
    spec.B = a.B.value_or(cfg.get_int("B", 64));
    spec.qf2 = a.qf2.value_or(cfg.get_int("qf2", 95));
    spec.qf1_set = a.qf1_set.empty() ? cfg.get_int_list("qf1_set", {}) : a.qf1_set;
    spec.alignment = alignment_from_name(
        a.alignment.empty() ? cfg.get_string("alignment", "aligned") : a.alignment);
    spec.train_count = a.train_count.value_or(cfg.get_int("train_count", 20000));
    spec.val_count = a.val_count.value_or(cfg.get_int("val_count", 6000));
    spec.seed = resolve_seed(a.seed, cfg);
    spec.validate();

    Dataset ds = build_dataset(spec, a.corpus);
    write_dataset(ds, a.out);

    Config resolved;
    resolved.set("command", "dataset-gen");
    resolved.set("corpus", a.corpus);
    resolved.set_int("B", spec.B);
    resolved.set_int("qf2", spec.qf2);
    resolved.set_int_list("qf1_set", spec.effective_qf1_set());
    resolved.set("alignment", alignment_name(spec.alignment));
    resolved.set_int("train_count", spec.train_count);
    resolved.set_int("val_count", spec.val_count);
    resolved.set_int("seed", static_cast<long long>(spec.seed));
    resolved.write_file(a.out + ".config");

    std::printf("wrote %zu patches to %s (+ .blob, .config)\n", ds.size(),
                a.out.c_str());
    if (ds.manifest().skipped_small_images > 0)
        std::printf("note: %d corpus images were too small and skipped\n",
                    ds.manifest().skipped_small_images);
    return 0;
}

// --- train --------------------------------------------------------------

struct TrainArgs {
    std::string dataset, detector, out, config_path;
    std::optional<double> lr, momentum, decay, gain;
    std::optional<int> epochs, batch, patience;
    std::optional<std::uint64_t> seed;
    bool trainable_bins = false;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
    Config cfg = load_config(a.config_path);
    Dataset ds = load_dataset(a.dataset);
    const int B = ds.manifest().spec.B;

    DetectorType kind = detector_type_from_name(a.detector);

    SgdConfig sgd;
    sgd.batch_size = a.batch.value_or(cfg.get_int("batch_size", 128));
    sgd.momentum = a.momentum.value_or(cfg.get_double("momentum", 0.9));
    // learning rate defaults by patch size: 0.01 at B=64, 0.001 at B=256
    const double default_lr = B >= 256 ? 0.001 : 0.01;
    sgd.lr0 = a.lr.value_or(cfg.get_double("lr", default_lr));
    sgd.decay_per_iteration = a.decay.value_or(cfg.get_double("lr_decay", 0.9999));
    sgd.max_epochs = a.epochs.value_or(cfg.get_int("epochs", 30));
    sgd.patience = a.patience.value_or(cfg.get_int("patience", 0));
    sgd.seed = resolve_seed(a.seed, cfg);

    HistConfig hist = HistConfig::defaults();
    hist.gain = a.gain.value_or(cfg.get_double("hist_gain", hist.gain));
    hist.trainable_bins = a.trainable_bins || cfg.get_bool("trainable_bins", false);

    Detector det = build_detector(kind, B, sgd.seed, hist);
    TrainReport report = train_detector(det, ds, sgd, !a.quiet);
    save_checkpoint(det, a.out);
    write_report_csv(report, a.out + ".report.csv");

    Config resolved;
    resolved.set("command", "train");
    resolved.set("dataset", a.dataset);
    resolved.set("detector", detector_type_name(kind));
    resolved.set_int("B", B);
    resolved.set_int("batch_size", sgd.batch_size);
    resolved.set_double("momentum", sgd.momentum);
    resolved.set_double("lr", sgd.lr0);
    resolved.set_double("lr_decay", sgd.decay_per_iteration);
    resolved.set_int("epochs", sgd.max_epochs);
    resolved.set_int("patience", sgd.patience);
    resolved.set_int("seed", static_cast<long long>(sgd.seed));
    if (kind == DetectorType::Hist) {
        resolved.set_double("hist_gain", hist.gain);
        resolved.set_bool("trainable_bins", hist.trainable_bins);
    }
    resolved.write_file(a.out + ".config");

    if (report.diverged)
        std::fprintf(stderr, "warning: training diverged; best finite weights kept\n");
    std::printf("best epoch %d, val loss %.4f; checkpoint %s\n", report.best_epoch,
                report.best_val_loss, a.out.c_str());
    return 0;
}

// --- eval / cross-eval ----------------------------------------------------

struct EvalArgs {
    std::string checkpoint, dataset, out, split = "val";
};

int cmd_eval(const EvalArgs& a, const char* command) {
    Detector det = load_checkpoint(a.checkpoint);
    Dataset ds = load_dataset(a.dataset);
    if (ds.manifest().spec.B != det.B)
        throw std::runtime_error("dataset patch size " +
                                 std::to_string(ds.manifest().spec.B) +
                                 " does not match detector " + std::to_string(det.B));
    AccuracyGrid grid = evaluate_detector(det, ds, split_from_name(a.split));
    std::printf("%s", format_grid(grid).c_str());
    if (!a.out.empty()) {
        write_grid_csv(grid, a.out);
        Config resolved;
        resolved.set("command", command);
        resolved.set("checkpoint", a.checkpoint);
        resolved.set("dataset", a.dataset);
        resolved.set("split", a.split);
        resolved.write_file(a.out + ".config");
    }
    return 0;
}

// --- localize -------------------------------------------------------------

struct LocalizeArgs {
    std::string checkpoint, image, out;
    int window = 64, stride = 16;
};

int cmd_localize(const LocalizeArgs& a) {
    Detector det = load_checkpoint(a.checkpoint);
    Patch image = load_image(a.image);
    Heatmap hm = localize(det, image, a.window, a.stride);
    save_heatmap_csv(hm, a.out + ".csv");
    save_heatmap_png(hm, a.out + ".png");
    save_overlay_png(image, hm, a.out + ".overlay.png");

    Config resolved;
    resolved.set("command", "localize");
    resolved.set("checkpoint", a.checkpoint);
    resolved.set("image", a.image);
    resolved.set_int("window", a.window);
    resolved.set_int("stride", a.stride);
    resolved.write_file(a.out + ".config");

    std::printf("heatmap %dx%d written to %s.{csv,png,overlay.png}\n", hm.grid_rows,
                hm.grid_cols, a.out.c_str());
    return 0;
}

// --- fuse ---------------------------------------------------------------

struct FuseArgs {
    std::vector<std::string> checkpoints;
    std::string dataset, out;
    std::optional<int> trees, depth;
    std::optional<std::uint64_t> seed;
};

int cmd_fuse(const FuseArgs& a) {
    Dataset ds = load_dataset(a.dataset);
    std::vector<Detector> dets;
    for (const auto& path : a.checkpoints) dets.push_back(load_checkpoint(path));
    std::vector<Detector*> ptrs;
    for (auto& d : dets) ptrs.push_back(&d);

    RandomForestConfig fc;
    fc.n_trees = a.trees.value_or(50);
    fc.max_depth = a.depth.value_or(4);
    fc.seed = resolve_seed(a.seed, Config{});

    auto [features, labels] = fusion_features(ptrs, ds, Split::Train);
    RandomForest forest;
    forest.train(features, labels, fc);
    forest.save(a.out);

    const double fused = evaluate_fusion(forest, ptrs, ds, Split::Val);
    std::printf("fused val accuracy: %.4f\n", fused);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        AccuracyGrid grid = evaluate_detector(dets[i], ds, Split::Val);
        std::printf("  %s (%s): overall %.4f\n", a.checkpoints[i].c_str(),
                    detector_type_name(dets[i].kind), grid.overall);
    }

    Config resolved;
    resolved.set("command", "fuse");
    resolved.set("dataset", a.dataset);
    for (std::size_t i = 0; i < a.checkpoints.size(); ++i)
        resolved.set("checkpoint_" + std::to_string(i), a.checkpoints[i]);
    resolved.set_int("trees", fc.n_trees);
    resolved.set_int("depth", fc.max_depth);
    resolved.set_int("seed", static_cast<long long>(fc.seed));
    resolved.set_double("fused_val_accuracy", fused);
    resolved.write_file(a.out + ".config");
    return 0;
}

// --- inspect-features -------------------------------------------------------

struct InspectArgs {
    std::string image, out;
    double gain = 1e6;
};

int cmd_inspect_features(const InspectArgs& a) {
    Patch image = load_image(a.image);
    HistConfig cfg = HistConfig::defaults();
    cfg.gain = a.gain;
    Tensor<float> feat = extract_features(image, cfg);
    const int K = feat.shape[0], F = feat.shape[1];

    std::FILE* f = std::fopen(a.out.c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + a.out);
    std::fprintf(f, "bin");
    for (int j = 0; j < F; ++j)
        std::fprintf(f, ",c%d_%d", cfg.frequencies[j].first, cfg.frequencies[j].second);
    std::fprintf(f, "\n");
    for (int k = 0; k < K; ++k) {
        std::fprintf(f, "%d", static_cast<int>(cfg.bin_boundaries[k] + 0.5));
        for (int j = 0; j < F; ++j)
            std::fprintf(f, ",%.6f", feat.data[static_cast<std::size_t>(k) * F + j]);
        std::fprintf(f, "\n");
    }
    std::fclose(f);
    std::printf("wrote %dx%d feature matrix to %s\n", K, F, a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"double JPEG compression detection toolkit"};
    app.require_subcommand(1);

    DatasetGenArgs dg;
    auto* sc_dg = app.add_subcommand("dataset-gen",
                                     "generate a labeled patch dataset from a corpus");
    sc_dg->add_option("--corpus", dg.corpus, "directory of source images")->required();
    sc_dg->add_option("--out", dg.out, "manifest output path")->required();
    sc_dg->add_option("--B", dg.B, "patch size (multiple of 8)");
    sc_dg->add_option("--qf2", dg.qf2, "second compression quality factor");
    sc_dg->add_option("--qf1", dg.qf1_set, "first quality factors (repeatable)");
    sc_dg->add_option("--alignment", dg.alignment, "aligned | shifted | mixed");
    sc_dg->add_option("--train", dg.train_count, "train patch count (even)");
    sc_dg->add_option("--val", dg.val_count, "val patch count (even)");
    sc_dg->add_option("--seed", dg.seed, "generation seed");
    sc_dg->add_option("--config", dg.config_path, "config file with defaults");

    TrainArgs tr;
    auto* sc_tr = app.add_subcommand("train", "train a detector on a dataset");
    sc_tr->add_option("--dataset", tr.dataset, "dataset manifest path")->required();
    sc_tr->add_option("--detector", tr.detector, "pix | noise | hist")->required();
    sc_tr->add_option("--out", tr.out, "checkpoint output path")->required();
    sc_tr->add_option("--epochs", tr.epochs, "max training epochs");
    sc_tr->add_option("--batch", tr.batch, "batch size");
    sc_tr->add_option("--lr", tr.lr, "initial learning rate");
    sc_tr->add_option("--momentum", tr.momentum, "SGD momentum");
    sc_tr->add_option("--decay", tr.decay, "per-iteration learning-rate decay");
    sc_tr->add_option("--patience", tr.patience, "early-stop patience (0 = off)");
    sc_tr->add_option("--seed", tr.seed, "training seed");
    sc_tr->add_option("--gain", tr.gain, "soft-count sigmoid gain (hist)");
    sc_tr->add_flag("--trainable-bins", tr.trainable_bins,
                    "learn histogram bin boundaries (hist)");
    sc_tr->add_flag("--quiet", tr.quiet, "suppress per-epoch progress");
    sc_tr->add_option("--config", tr.config_path, "config file with defaults");

    EvalArgs ev;
    auto* sc_ev = app.add_subcommand("eval", "per-(QF1,QF2) accuracy grid");
    sc_ev->add_option("--checkpoint", ev.checkpoint, "detector checkpoint")->required();
    sc_ev->add_option("--dataset", ev.dataset, "dataset manifest path")->required();
    sc_ev->add_option("--split", ev.split, "train | val (default val)");
    sc_ev->add_option("--out", ev.out, "CSV output path");

    EvalArgs xe;
    auto* sc_xe = app.add_subcommand(
        "cross-eval", "evaluate a checkpoint on a mismatched scenario's dataset");
    sc_xe->add_option("--checkpoint", xe.checkpoint, "detector checkpoint")->required();
    sc_xe->add_option("--dataset", xe.dataset, "dataset manifest path")->required();
    sc_xe->add_option("--split", xe.split, "train | val (default val)");
    sc_xe->add_option("--out", xe.out, "CSV output path");

    LocalizeArgs lo;
    auto* sc_lo = app.add_subcommand("localize",
                                     "sliding-window double-compression heatmap");
    sc_lo->add_option("--checkpoint", lo.checkpoint, "detector checkpoint")->required();
    sc_lo->add_option("--image", lo.image, "PNG or PGM input image")->required();
    sc_lo->add_option("--out", lo.out, "output path prefix")->required();
    sc_lo->add_option("--window", lo.window, "window size (default 64)");
    sc_lo->add_option("--stride", lo.stride, "window stride (default 16)");

    FuseArgs fu;
    auto* sc_fu = app.add_subcommand("fuse",
                                     "train a random-forest fusion of detectors");
    sc_fu->add_option("--checkpoint", fu.checkpoints, "detector checkpoints")
        ->required()
        ->expected(-1);
    sc_fu->add_option("--dataset", fu.dataset, "dataset manifest path")->required();
    sc_fu->add_option("--out", fu.out, "forest output path")->required();
    sc_fu->add_option("--trees", fu.trees, "number of trees (default 50)");
    sc_fu->add_option("--depth", fu.depth, "max tree depth (default 4)");
    sc_fu->add_option("--seed", fu.seed, "forest seed");

    InspectArgs in;
    auto* sc_in = app.add_subcommand("inspect-features",
                                     "export an image's DCT histogram features");
    sc_in->add_option("--image", in.image, "PNG or PGM input image")->required();
    sc_in->add_option("--out", in.out, "CSV output path")->required();
    sc_in->add_option("--gain", in.gain, "soft-count sigmoid gain");

    // Accepted on the fan-out-friendly subcommands for interface stability;
    // this build always executes serially and deterministically.
    int workers = 1;
    for (auto* sc : {sc_dg, sc_ev, sc_xe, sc_lo, sc_fu})
        sc->add_option("--workers", workers,
                       "worker hint (execution is serial and deterministic)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n\n%s\n", e.what(), app.help().c_str());
        return 2;
    }

    try {
        if (sc_dg->parsed()) return cmd_dataset_gen(dg);
        if (sc_tr->parsed()) return cmd_train(tr);
        if (sc_ev->parsed()) return cmd_eval(ev, "eval");
        if (sc_xe->parsed()) return cmd_eval(xe, "cross-eval");
        if (sc_lo->parsed()) return cmd_localize(lo);
        if (sc_fu->parsed()) return cmd_fuse(fu);
        if (sc_in->parsed()) return cmd_inspect_features(in);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
