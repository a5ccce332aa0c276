#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "djf/detectors.hpp"
#include "test_support.hpp"

using namespace djf;
using namespace djf::testing;

namespace {

using Shape = std::vector<int>;

void set_flat_mean(Detector& det) {
    det.mean.rows = det.B;
    det.mean.cols = det.B;
    det.mean.count = 1;
    det.mean.mean.assign(static_cast<std::size_t>(det.B) * det.B, 128.0f);
}

}  // namespace

TEST_CASE("pixel CNN layer trace at B = 64") {
    Detector det = build_detector(DetectorType::Pix, 64, 1);
    auto trace = detector_shape_trace(det);
    REQUIRE(trace.size() == 10);
    CHECK(trace[0] == Shape{60, 60, 30});  // conv 5x5
    CHECK(trace[1] == Shape{30, 30, 30});  // pool
    CHECK(trace[2] == Shape{26, 26, 30});  // conv
    CHECK(trace[3] == Shape{13, 13, 30});  // pool
    CHECK(trace[4] == Shape{9, 9, 30});    // conv
    CHECK(trace[5] == Shape{5, 5, 30});    // pool (ceil: border window)
    CHECK(trace[6] == Shape{500});
    CHECK(trace[7] == Shape{500});
    CHECK(trace[8] == Shape{2});
    CHECK(trace[9] == Shape{2});
}

TEST_CASE("pixel CNN layer trace at B = 256") {
    Detector det = build_detector(DetectorType::Noise, 256, 1);
    auto trace = detector_shape_trace(det);
    REQUIRE(trace.size() == 10);
    CHECK(trace[0] == Shape{252, 252, 30});
    CHECK(trace[1] == Shape{126, 126, 30});
    CHECK(trace[2] == Shape{122, 122, 30});
    CHECK(trace[3] == Shape{61, 61, 30});
    CHECK(trace[4] == Shape{57, 57, 30});
    CHECK(trace[5] == Shape{29, 29, 30});
    CHECK(trace[6] == Shape{500});
    CHECK(trace[8] == Shape{2});
}

TEST_CASE("histogram CNN layer trace") {
    Detector det = build_detector(DetectorType::Hist, 64, 1);
    auto trace = detector_shape_trace(det);
    REQUIRE(trace.size() == 14);  // 4 front-end + 10 CNN layers
    CHECK(det.frontend_layers == 4);
    CHECK(trace[2] == Shape{100, 63, 1});   // histogram feature image
    CHECK(trace[3] == Shape{100, 63, 1});   // count normalization
    CHECK(trace[4] == Shape{98, 61, 30});   // conv 3x3
    CHECK(trace[5] == Shape{49, 31, 30});
    CHECK(trace[6] == Shape{47, 29, 30});
    CHECK(trace[7] == Shape{24, 15, 30});
    CHECK(trace[8] == Shape{22, 13, 30});
    CHECK(trace[9] == Shape{11, 7, 30});
    CHECK(trace[10] == Shape{500});
    CHECK(trace[12] == Shape{2});

    // the trace is independent of the patch size feeding the front end
    Detector det256 = build_detector(DetectorType::Hist, 256, 1);
    CHECK(detector_shape_trace(det256)[2] == Shape{100, 63, 1});
}

TEST_CASE("detector input preprocessing per kind") {
    Rng rng(3);
    Patch p = synth_image(rng, 64, 64);

    Detector pix = build_detector(DetectorType::Pix, 64, 1);
    CHECK_THROWS_AS(detector_input(pix, p), std::logic_error);  // mean unset
    set_flat_mean(pix);
    Tensor<float> xp = detector_input(pix, p);
    CHECK(xp.shape == Shape{64, 64, 1});
    CHECK(xp.data[0] == doctest::Approx(double(p.pix[0]) - 128.0));

    Detector hist = build_detector(DetectorType::Hist, 64, 1);
    Tensor<float> xh = detector_input(hist, p);
    CHECK(xh.data[0] == float(p.pix[0]));  // raw pixels; front end is in-graph

    Detector noise = build_detector(DetectorType::Noise, 64, 1);
    Tensor<float> xn = detector_input(noise, p);
    CHECK(xn.shape == Shape{64, 64, 1});

    Patch wrong = synth_image(rng, 72, 64);
    CHECK_THROWS_AS(detector_input(hist, wrong), std::invalid_argument);
}

TEST_CASE("prediction is a probability and deterministic") {
    Rng rng(5);
    Patch p = synth_image(rng, 64, 64);
    Detector det = build_detector(DetectorType::Hist, 64, 42);
    const double a = predict(det, p);
    const double b = predict(det, p);
    CHECK(a == b);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
}

TEST_CASE("checkpoint round trip preserves predictions bit-exactly") {
    Rng rng(7);
    const std::string dir = temp_dir("detectors");

    for (auto kind : {DetectorType::Pix, DetectorType::Noise, DetectorType::Hist}) {
        Detector det = build_detector(kind, 64, 1234);
        if (kind == DetectorType::Pix) set_flat_mean(det);
        const std::string path =
            dir + "/" + detector_type_name(kind) + ".ckpt";
        save_checkpoint(det, path);
        Detector back = load_checkpoint(path);

        CHECK(back.kind == kind);
        CHECK(back.B == 64);
        for (int i = 0; i < 5; ++i) {
            Patch p = synth_image(rng, 64, 64);
            CHECK(predict(det, p) == predict(back, p));
        }
    }
}

TEST_CASE("checkpoint preserves preprocessing configuration") {
    const std::string dir = temp_dir("detectors");

    Detector noise = build_detector(DetectorType::Noise, 64, 1);
    noise.denoiser.window_sizes = {3, 5};
    noise.denoiser.noise_variance = 4.0;
    save_checkpoint(noise, dir + "/noise_cfg.ckpt");
    Detector nb = load_checkpoint(dir + "/noise_cfg.ckpt");
    CHECK(nb.denoiser.window_sizes == std::vector<int>{3, 5});
    CHECK(nb.denoiser.noise_variance == 4.0);

    HistConfig hcfg = HistConfig::defaults();
    hcfg.gain = 1e4;
    hcfg.trainable_bins = true;
    Detector hist = build_detector(DetectorType::Hist, 64, 1, hcfg);
    save_checkpoint(hist, dir + "/hist_cfg.ckpt");
    Detector hb = load_checkpoint(dir + "/hist_cfg.ckpt");
    CHECK(hb.hist.gain == 1e4);
    CHECK(hb.hist.trainable_bins);
    CHECK(hb.hist.bin_boundaries == hcfg.bin_boundaries);
}

TEST_CASE("identical seeds build identical detectors") {
    Detector a = build_detector(DetectorType::Pix, 64, 99);
    Detector b = build_detector(DetectorType::Pix, 64, 99);
    auto pa = a.net.params(), pb = b.net.params();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) CHECK(pa[i]->data == pb[i]->data);

    Detector c = build_detector(DetectorType::Pix, 64, 100);
    bool same = true;
    auto pc = c.net.params();
    for (std::size_t i = 0; i < pa.size(); ++i)
        if (pa[i]->data != pc[i]->data) same = false;
    CHECK(!same);
}

TEST_CASE("loader rejects foreign and truncated files") {
    const std::string dir = temp_dir("detectors");
    const std::string bad = dir + "/not_a_checkpoint";
    std::ofstream(bad, std::ios::binary) << "PNG\x01 junk";
    CHECK_THROWS(load_checkpoint(bad));

    Detector det = build_detector(DetectorType::Hist, 64, 1);
    const std::string path = dir + "/trunc.ckpt";
    save_checkpoint(det, path);
    // truncate the weights
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("detector kind names round trip") {
    for (auto kind : {DetectorType::Pix, DetectorType::Noise, DetectorType::Hist})
        CHECK(detector_type_from_name(detector_type_name(kind)) == kind);
    CHECK_THROWS(detector_type_from_name("spectral"));
}
