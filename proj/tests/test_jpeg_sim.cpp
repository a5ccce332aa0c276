#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <csetjmp>
#include <cstdio>

#include <jpeglib.h>

#include "djf/jpeg_sim.hpp"
#include "test_support.hpp"

using namespace djf;
using namespace djf::testing;

namespace {

// Reference quantization table computed by libjpeg for a quality factor.
QuantTable libjpeg_table(int qf) {
    jpeg_compress_struct cinfo;
    jpeg_error_mgr jerr;
    cinfo.err = jpeg_std_error(&jerr);
    jpeg_create_compress(&cinfo);
    cinfo.image_width = 8;
    cinfo.image_height = 8;
    cinfo.input_components = 1;
    cinfo.in_color_space = JCS_GRAYSCALE;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, qf, TRUE);
    QuantTable t;
    for (int i = 0; i < 64; ++i) t.q[i] = cinfo.quant_tbl_ptrs[0]->quantval[i];
    jpeg_destroy_compress(&cinfo);
    return t;
}

// One grayscale compress/decompress round through libjpeg (in memory).
Patch libjpeg_round(const Patch& img, int qf) {
    unsigned char* buf = nullptr;
    unsigned long buf_size = 0;
    {
        jpeg_compress_struct cinfo;
        jpeg_error_mgr jerr;
        cinfo.err = jpeg_std_error(&jerr);
        jpeg_create_compress(&cinfo);
        jpeg_mem_dest(&cinfo, &buf, &buf_size);
        cinfo.image_width = img.cols;
        cinfo.image_height = img.rows;
        cinfo.input_components = 1;
        cinfo.in_color_space = JCS_GRAYSCALE;
        jpeg_set_defaults(&cinfo);
        jpeg_set_quality(&cinfo, qf, TRUE);
        cinfo.dct_method = JDCT_FLOAT;
        jpeg_start_compress(&cinfo, TRUE);
        while (cinfo.next_scanline < cinfo.image_height) {
            JSAMPROW row = const_cast<JSAMPROW>(
                &img.pix[static_cast<std::size_t>(cinfo.next_scanline) * img.cols]);
            jpeg_write_scanlines(&cinfo, &row, 1);
        }
        jpeg_finish_compress(&cinfo);
        jpeg_destroy_compress(&cinfo);
    }
    Patch out(img.rows, img.cols);
    {
        jpeg_decompress_struct dinfo;
        jpeg_error_mgr jerr;
        dinfo.err = jpeg_std_error(&jerr);
        jpeg_create_decompress(&dinfo);
        jpeg_mem_src(&dinfo, buf, buf_size);
        jpeg_read_header(&dinfo, TRUE);
        dinfo.dct_method = JDCT_FLOAT;
        jpeg_start_decompress(&dinfo);
        while (dinfo.output_scanline < dinfo.output_height) {
            JSAMPROW row =
                &out.pix[static_cast<std::size_t>(dinfo.output_scanline) * out.cols];
            jpeg_read_scanlines(&dinfo, &row, 1);
        }
        jpeg_finish_decompress(&dinfo);
        jpeg_destroy_decompress(&dinfo);
    }
    std::free(buf);
    return out;
}

}  // namespace

TEST_CASE("base luminance table spot values") {
    const auto& b = base_luminance_table();
    CHECK(b[0] == 16);
    CHECK(b[1] == 11);
    CHECK(b[7] == 61);
    CHECK(b[63] == 99);
}

TEST_CASE("quality scaling matches libjpeg exactly") {
    for (int qf : {5, 10, 25, 50, 60, 75, 85, 90, 95, 98, 100}) {
        QuantTable ours = quant_table_for(qf);
        QuantTable ref = libjpeg_table(qf);
        for (int i = 0; i < 64; ++i) {
            INFO("qf=", qf, " entry ", i);
            CHECK(ours.q[i] == ref.q[i]);
        }
    }
}

TEST_CASE("quant table properties") {
    // QF = 50 is the unscaled base table; QF = 100 is all ones
    CHECK(quant_table_for(50).q == base_luminance_table());
    for (int e : quant_table_for(100).q) CHECK(e == 1);
    // entries never leave [1, 255] and are entrywise non-increasing in QF
    for (int qf = 1; qf < 100; ++qf) {
        QuantTable lo = quant_table_for(qf), hi = quant_table_for(qf + 1);
        for (int i = 0; i < 64; ++i) {
            CHECK(lo.q[i] >= 1);
            CHECK(lo.q[i] <= 255);
            CHECK(hi.q[i] <= lo.q[i]);
        }
    }
}

TEST_CASE("blockwise DCT round trip and Parseval") {
    Rng rng(5);
    Patch p = synth_image(rng, 32, 48);
    Tensor<double> coeffs = dct8_blocks(p);
    CHECK(coeffs.shape == std::vector<int>{4, 6, 64});
    Tensor<double> back = idct8_blocks(coeffs);
    double max_err = 0.0, energy_pix = 0.0, energy_coef = 0.0;
    for (int r = 0; r < p.rows; ++r)
        for (int c = 0; c < p.cols; ++c) {
            max_err = std::max(max_err,
                               std::abs(back.data[static_cast<std::size_t>(r) * p.cols + c] -
                                        double(p.at(r, c))));
            const double v = double(p.at(r, c)) - 128.0;
            energy_pix += v * v;
        }
    for (double v : coeffs.data) energy_coef += v * v;
    CHECK(max_err < 1e-4);
    CHECK(energy_coef == doctest::Approx(energy_pix).epsilon(1e-10));
}

TEST_CASE("DCT agrees with the naive cosine-sum oracle") {
    Rng rng(6);
    Patch p = synth_image(rng, 16, 16);
    Tensor<double> coeffs = dct8_blocks(p);
    for (int c1 = 0; c1 < 8; ++c1)
        for (int c2 = 0; c2 < 8; ++c2) {
            // oracle has no level shift; it only changes the DC coefficient
            double expect = naive_dct_coeff(p, 1, 1, c1, c2);
            if (c1 == 0 && c2 == 0) expect -= 128.0 * 8.0;
            CHECK(coeffs.at3(1, 1, c1 * 8 + c2) == doctest::Approx(expect).epsilon(1e-9));
        }
}

TEST_CASE("same-table re-quantization is the identity at coefficient level") {
    Rng rng(9);
    Patch p = synth_image(rng, 64, 64);
    QuantTable t = quant_table_for(75);
    Tensor<double> coeffs = dct8_blocks(p);
    quantize_dequantize(coeffs, t);
    Tensor<double> once = coeffs;
    quantize_dequantize(coeffs, t);
    for (std::size_t i = 0; i < coeffs.numel(); ++i)
        CHECK(coeffs.data[i] == once.data[i]);
    // dequantized values are exact multiples of the table entry
    for (std::size_t i = 0; i < once.numel(); ++i) {
        const int q = t.q[i % 64];
        CHECK(std::abs(once.data[i] / q - std::round(once.data[i] / q)) < 1e-12);
    }
}

TEST_CASE("compress_decompress tracks libjpeg within 1 dB") {
    Rng rng(17);
    for (int qf : {60, 75, 90, 95}) {
        Patch p = synth_image(rng, 128, 128);
        Patch ours = compress_decompress(p, qf);
        Patch ref = libjpeg_round(p, qf);
        const double d = psnr(p, ours), dref = psnr(p, ref);
        INFO("qf=", qf, " ours=", d, " libjpeg=", dref);
        CHECK(std::abs(d - dref) < 1.0);
        CHECK(d > 25.0);  // sanity: the round trip is lossy but close
    }
}

TEST_CASE("higher quality factor gives higher fidelity") {
    Rng rng(21);
    Patch p = synth_image(rng, 96, 96);
    double prev = 0.0;
    for (int qf : {50, 70, 90, 100}) {
        double d = psnr(p, compress_decompress(p, qf));
        CHECK(d > prev);
        prev = d;
    }
}

TEST_CASE("double compression geometry") {
    Rng rng(31);
    const int B = 64;

    SUBCASE("aligned uses the source as-is and records (0,0)") {
        Patch src = synth_image(rng, B, B);
        QFPair pair;
        pair.qf1 = 60;
        pair.qf2 = 95;
        auto res = double_compress(src, pair, B, rng);
        CHECK(res.patch.rows == B);
        CHECK(res.patch.cols == B);
        CHECK(res.r == 0);
        CHECK(res.c == 0);
        CHECK(res.qf1 == 60);
        CHECK(res.qf2 == 95);
    }
    SUBCASE("aligned result equals two plain compression rounds") {
        Patch src = synth_image(rng, B, B);
        QFPair pair;
        pair.qf1 = 70;
        pair.qf2 = 85;
        auto res = double_compress(src, pair, B, rng);
        Patch ref = compress_decompress(compress_decompress(src, 70), 85);
        CHECK(res.patch.pix == ref.pix);
    }
    SUBCASE("shifted draws a nonzero grid offset and crops to B x B") {
        Patch src = synth_image(rng, B + 7, B + 7);
        QFPair pair;
        pair.qf1 = 60;
        pair.qf2 = 95;
        pair.shifted = true;
        for (int i = 0; i < 10; ++i) {
            auto res = double_compress(src, pair, B, rng);
            CHECK(res.patch.rows == B);
            CHECK(res.patch.cols == B);
            CHECK(res.r >= 1);
            CHECK(res.r <= 6);
            CHECK(res.c >= 1);
            CHECK(res.c <= 6);
        }
    }
    SUBCASE("source size preconditions") {
        Patch small = synth_image(rng, B - 8, B);
        QFPair pair;
        pair.qf1 = 60;
        pair.qf2 = 95;
        CHECK_THROWS(double_compress(small, pair, B, rng));
        pair.shifted = true;
        Patch not_enough = synth_image(rng, B + 6, B + 7);
        CHECK_THROWS(double_compress(not_enough, pair, B, rng));
    }
}

TEST_CASE("aligned re-compression leaves a periodicity trace") {
    // A double-compressed (qf1 < qf2) patch keeps its coefficients clustered
    // on the coarser qf1 grid; a single-compressed one does not.
    Rng rng(41);
    const QuantTable q1 = quant_table_for(60);
    int doubles_on_grid = 0, singles_on_grid = 0, total = 0;
    for (int trial = 0; trial < 8; ++trial) {
        Patch src = synth_image(rng, 64, 64);
        QFPair pair;
        pair.qf1 = 60;
        pair.qf2 = 95;
        Patch dd = double_compress(src, pair, 64, rng).patch;
        Patch ss = compress_decompress(src, 95);
        Tensor<double> cd = dct8_blocks(dd), cs = dct8_blocks(ss);
        for (std::size_t i = 0; i < cd.numel(); ++i) {
            const int q = q1.q[i % 64];
            if (q < 2) continue;
            ++total;
            if (std::abs(cd.data[i] / q - std::round(cd.data[i] / q)) < 0.15)
                ++doubles_on_grid;
            if (std::abs(cs.data[i] / q - std::round(cs.data[i] / q)) < 0.15)
                ++singles_on_grid;
        }
    }
    // the double-compressed coefficients sit near the qf1 lattice far more often
    CHECK(doubles_on_grid > singles_on_grid + total / 10);
}
