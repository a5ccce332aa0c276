#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "djf/harness.hpp"
#include "test_support.hpp"

using namespace djf;
using namespace djf::testing;

namespace {

const std::string& corpus_dir() {
    static const std::string dir = make_corpus(temp_dir("harness") + "/corpus", 20, 55);
    return dir;
}

/// Detector whose softmax input is fixed, so it always answers `label`.
Detector constant_detector(int label) {
    Detector det = build_detector(DetectorType::Hist, 64, 1);
    auto params = det.net.params();
    // last two params are the final InnerProduct's weights and bias
    Tensor<float>* w = params[params.size() - 2];
    Tensor<float>* b = params[params.size() - 1];
    std::fill(w->data.begin(), w->data.end(), 0.0f);
    b->data[label] = 50.0f;
    b->data[1 - label] = -50.0f;
    return det;
}

}  // namespace

TEST_CASE("constant predictor scores exactly 0.5 on balanced cells") {
    DatasetSpec spec;
    spec.B = 64;
    spec.qf2 = 95;
    spec.alignment = Alignment::Aligned;
    spec.train_count = 40;
    spec.val_count = 40;
    spec.seed = 2;
    Dataset ds = build_dataset(spec, corpus_dir());

    for (int label : {0, 1}) {
        Detector det = constant_detector(label);
        AccuracyGrid grid = evaluate_detector(det, ds, Split::Val);
        CHECK(grid.qf2 == 95);
        CHECK(grid.cell.size() == 5);
        for (const auto& [qf1, acc] : grid.cell) CHECK(acc == doctest::Approx(0.5));
        CHECK(grid.macro == doctest::Approx(0.5));
        CHECK(grid.overall == doctest::Approx(0.5));
    }
}

TEST_CASE("evaluation is pure") {
    DatasetSpec spec;
    spec.B = 64;
    spec.qf2 = 75;
    spec.alignment = Alignment::Aligned;
    spec.train_count = 20;
    spec.val_count = 20;
    spec.seed = 3;
    Dataset ds = build_dataset(spec, corpus_dir());
    Detector det = build_detector(DetectorType::Hist, 64, 9);
    AccuracyGrid a = evaluate_detector(det, ds, Split::Val);
    AccuracyGrid b = evaluate_detector(det, ds, Split::Val);
    CHECK(a.macro == b.macro);
    CHECK(a.overall == b.overall);
    CHECK(a.cell == b.cell);
}

TEST_CASE("training on an easy pair learns and selects the best epoch") {
    DatasetSpec spec;
    spec.B = 64;
    spec.qf2 = 95;
    spec.qf1_set = {60};
    spec.alignment = Alignment::Aligned;
    spec.train_count = 400;
    spec.val_count = 120;
    spec.seed = 4;
    Dataset ds = build_dataset(spec, corpus_dir());

    Detector det = build_detector(DetectorType::Hist, 64, 4);
    SgdConfig cfg;
    cfg.max_epochs = 3;
    cfg.batch_size = 32;
    cfg.seed = 4;
    TrainReport report = train_detector(det, ds, cfg);

    REQUIRE(report.epochs.size() == 3);  // patience off: all epochs run
    CHECK(!report.diverged);
    CHECK(report.best_epoch >= 0);
    // model selection invariant: kept weights minimize validation loss
    for (const auto& e : report.epochs) CHECK(report.best_val_loss <= e.val_loss);
    CHECK(report.best_val_loss ==
          report.epochs[report.best_epoch].val_loss);

    AccuracyGrid grid = evaluate_detector(det, ds, Split::Val);
    CHECK(grid.macro >= 0.9);  // (60, 95) histograms are nearly separable
}

TEST_CASE("training is deterministic under a fixed seed") {
    DatasetSpec spec;
    spec.B = 64;
    spec.qf2 = 95;
    spec.qf1_set = {60};
    spec.alignment = Alignment::Aligned;
    spec.train_count = 60;
    spec.val_count = 20;
    spec.seed = 5;
    Dataset ds = build_dataset(spec, corpus_dir());

    SgdConfig cfg;
    cfg.max_epochs = 1;
    cfg.batch_size = 16;
    cfg.seed = 11;

    Detector a = build_detector(DetectorType::Hist, 64, 11);
    Detector b = build_detector(DetectorType::Hist, 64, 11);
    train_detector(a, ds, cfg);
    train_detector(b, ds, cfg);
    auto pa = a.net.params(), pb = b.net.params();
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);
}

TEST_CASE("pix training computes the mean from the train split") {
    DatasetSpec spec;
    spec.B = 64;
    spec.qf2 = 75;
    spec.alignment = Alignment::Aligned;
    spec.train_count = 20;
    spec.val_count = 20;
    spec.seed = 6;
    Dataset ds = build_dataset(spec, corpus_dir());

    Detector det = build_detector(DetectorType::Pix, 64, 3);
    SgdConfig cfg;
    cfg.max_epochs = 1;
    cfg.batch_size = 10;
    train_detector(det, ds, cfg);
    REQUIRE(det.has_mean());
    CHECK(det.mean.count == 20);

    MeanImage expect;
    for (std::size_t i : ds.split_indices(Split::Train)) {
        Patch p = ds.patch(i);
        accumulate_mean(expect, p);
    }
    finalize_mean(expect);
    CHECK(det.mean.mean == expect.mean);
}

TEST_CASE("heatmap geometry follows the stride formula") {
    Detector det = constant_detector(1);

    Rng rng(8);
    Patch img = synth_image(rng, 256, 256);
    Heatmap hm = localize(det, img, 64, 16);
    CHECK(hm.grid_rows == 13);
    CHECK(hm.grid_cols == 13);
    for (float v : hm.score) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
    }

    Patch rect = synth_image(rng, 128, 96);
    Heatmap hr = localize(det, rect, 64, 16);
    CHECK(hr.grid_rows == 5);
    CHECK(hr.grid_cols == 3);

    Patch tiny = synth_image(rng, 63, 64);
    CHECK_THROWS(localize(det, tiny, 64, 16));
    CHECK_THROWS(localize(det, img, 32, 16));  // window must match detector B
}

TEST_CASE("heatmap artifacts are written") {
    Detector det = constant_detector(1);
    Rng rng(9);
    Patch img = synth_image(rng, 96, 96);
    Heatmap hm = localize(det, img, 64, 16);
    REQUIRE(hm.grid_rows == 3);

    const std::string dir = temp_dir("harness");
    save_heatmap_csv(hm, dir + "/hm.csv");
    save_heatmap_png(hm, dir + "/hm.png");
    save_overlay_png(img, hm, dir + "/hm_overlay.png");

    std::ifstream csv(dir + "/hm.csv");
    std::string line;
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == hm.grid_cols - 1);
    }
    CHECK(rows == hm.grid_rows);
    CHECK(std::filesystem::file_size(dir + "/hm.png") > 0);
    CHECK(std::filesystem::file_size(dir + "/hm_overlay.png") > 0);
}

TEST_CASE("random forest separates simple data and round trips") {
    Rng rng(10);
    std::vector<std::vector<double>> xs;
    std::vector<int> ys;
    for (int i = 0; i < 400; ++i) {
        // XOR-style pattern: needs depth 2, solvable well within depth 4
        const double a = rng.uniform01(), b = rng.uniform01();
        xs.push_back({a, b});
        ys.push_back((a > 0.5) != (b > 0.5) ? 1 : 0);
    }
    RandomForest forest;
    RandomForestConfig cfg;
    cfg.seed = 3;
    forest.train(xs, ys, cfg);

    int correct = 0;
    for (std::size_t i = 0; i < xs.size(); ++i)
        if (forest.predict(xs[i]) == ys[i]) ++correct;
    CHECK(correct >= 380);

    const std::string path = temp_dir("harness") + "/forest.txt";
    forest.save(path);
    RandomForest back = RandomForest::load(path);
    for (std::size_t i = 0; i < xs.size(); i += 17)
        CHECK(forest.predict_proba(xs[i]) == back.predict_proba(xs[i]));

    RandomForest empty;
    CHECK_THROWS_AS(empty.predict({0.1, 0.2}), std::logic_error);
}

TEST_CASE("fusion features carry one probability per detector") {
    DatasetSpec spec;
    spec.B = 64;
    spec.qf2 = 95;
    spec.alignment = Alignment::Aligned;
    spec.train_count = 8;
    spec.val_count = 8;
    spec.seed = 12;
    Dataset ds = build_dataset(spec, corpus_dir());

    Detector d0 = constant_detector(0);
    Detector d1 = constant_detector(1);
    std::vector<Detector*> dets{&d0, &d1};
    auto [features, labels] = fusion_features(dets, ds, Split::Val);
    REQUIRE(features.size() == 8);
    REQUIRE(labels.size() == 8);
    for (const auto& f : features) {
        REQUIRE(f.size() == 2);
        CHECK(f[0] < 0.01);   // always-0 detector: P(H1) ~ 0
        CHECK(f[1] > 0.99);   // always-1 detector: P(H1) ~ 1
    }
}
