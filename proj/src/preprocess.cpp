#include "djf/preprocess.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace djf {

void accumulate_mean(MeanImage& acc, const Patch& image) {
    if (acc.count == 0) {
        acc.rows = image.rows;
        acc.cols = image.cols;
        acc.mean.assign(image.pix.size(), 0.0f);
    }
    if (image.rows != acc.rows || image.cols != acc.cols)
        throw std::invalid_argument("mean image: patch size mismatch");
    for (std::size_t i = 0; i < image.pix.size(); ++i)
        acc.mean[i] += static_cast<float>(image.pix[i]);
    ++acc.count;
}

void finalize_mean(MeanImage& acc) {
    if (acc.count == 0) throw std::invalid_argument("mean image: no images");
    const float inv = 1.0f / static_cast<float>(acc.count);
    for (auto& v : acc.mean) v *= inv;
}

MeanImage compute_mean_image(const std::vector<const Patch*>& images) {
    MeanImage acc;
    for (const Patch* p : images) accumulate_mean(acc, *p);
    finalize_mean(acc);
    return acc;
}

Tensor<float> subtract_mean(const Patch& image, const MeanImage& mean) {
    if (image.rows != mean.rows || image.cols != mean.cols)
        throw std::invalid_argument("subtract_mean: shape mismatch, image " +
                                    std::to_string(image.rows) + "x" +
                                    std::to_string(image.cols) + " vs mean " +
                                    std::to_string(mean.rows) + "x" +
                                    std::to_string(mean.cols));
    Tensor<float> out({image.rows, image.cols, 1});
    for (std::size_t i = 0; i < image.pix.size(); ++i)
        out.data[i] = static_cast<float>(image.pix[i]) - mean.mean[i];
    return out;
}

void DenoiserConfig::validate() const {
    if (levels < 1) throw std::invalid_argument("denoiser: levels must be >= 1");
    if (wavelet != "db4")
        throw std::invalid_argument("denoiser: unsupported wavelet '" + wavelet + "'");
    if (noise_variance <= 0.0)
        throw std::invalid_argument("denoiser: noise variance must be > 0");
    if (window_sizes.empty())
        throw std::invalid_argument("denoiser: need at least one window size");
    int prev = 0;
    for (int w : window_sizes) {
        if (w % 2 == 0 || w <= prev)
            throw std::invalid_argument("denoiser: windows must be odd and increasing");
        prev = w;
    }
}

// --- db4 filter bank --------------------------------------------------------

namespace {

constexpr int kTaps = 8;

const double* db4_lo() {
    static const double lo[kTaps] = {
        0.23037781330885523,  0.7148465705525415,   0.6308807679295904,
        -0.02798376941698385, -0.18703481171888114, 0.030841381835986965,
        0.032883011666982945, -0.010597401784997278};
    return lo;
}

const double* db4_hi() {
    static const std::array<double, kTaps> hi = [] {
        std::array<double, kTaps> h{};
        const double* lo = db4_lo();
        for (int j = 0; j < kTaps; ++j)
            h[j] = ((j % 2) ? -1.0 : 1.0) * lo[kTaps - 1 - j];
        return h;
    }();
    return hi.data();
}

}  // namespace

// --- 1-D analysis / synthesis -----------------------------------------------

namespace {

// Half-point symmetric extension index: ... x1 x0 | x0 x1 ... x(n-1) | x(n-1) ...
inline int sym_index(int k, int n) {
    while (k < 0 || k >= n) {
        if (k < 0) k = -k - 1;
        if (k >= n) k = 2 * n - 1 - k;
    }
    return k;
}

inline int analysis_len(int n) { return (n + kTaps - 1) / 2; }

// ca[o] = sum_j lo[j] x[e(2o+1-j)], likewise cd with hi.
void dwt1(const double* x, int n, double* ca, double* cd) {
    const double* lo = db4_lo();
    const double* hi = db4_hi();
    const int na = analysis_len(n);
    for (int o = 0; o < na; ++o) {
        double a = 0.0, d = 0.0;
        for (int j = 0; j < kTaps; ++j) {
            const double v = x[sym_index(2 * o + 1 - j, n)];
            a += lo[j] * v;
            d += hi[j] * v;
        }
        ca[o] = a;
        cd[o] = d;
    }
}

// x[t] = sum_o ca[o] lo[2o+1-t] + cd[o] hi[2o+1-t], t in [0, n).
void idwt1(const double* ca, const double* cd, int na, double* x, int n) {
    const double* lo = db4_lo();
    const double* hi = db4_hi();
    for (int t = 0; t < n; ++t) {
        double s = 0.0;
        // j = 2o+1-t in [0, kTaps) -> o in [ceil((t+1-kTaps+1)/2)... just scan.
        int o0 = (t + 2 - kTaps);
        o0 = (o0 <= 0) ? 0 : (o0 + 1) / 2;
        for (int o = o0; o < na; ++o) {
            const int j = 2 * o + 1 - t;
            if (j < 0) continue;
            if (j >= kTaps) break;
            s += ca[o] * lo[j] + cd[o] * hi[j];
        }
        x[t] = s;
    }
}

}  // namespace

// --- 2-D transform -----------------------------------------------------------

WaveletPyramid dwt2(const Mat& x, int levels) {
    if (levels < 1) throw std::invalid_argument("dwt2: levels must be >= 1");
    if (x.rows < kTaps || x.cols < kTaps)
        throw std::invalid_argument("dwt2: image smaller than transform support");
    WaveletPyramid pyr;
    Mat cur = x;
    for (int lvl = 0; lvl < levels; ++lvl) {
        const int n_r = cur.rows, n_c = cur.cols;
        if (n_r < kTaps || n_c < kTaps)
            throw std::invalid_argument("dwt2: band too small at level " +
                                        std::to_string(lvl));
        const int ar = analysis_len(n_r), ac = analysis_len(n_c);
        // rows first: each row of length n_c -> (lo | hi) halves of length ac
        Mat rl(n_r, ac), rh(n_r, ac);
        std::vector<double> ca(ac), cd(ac);
        for (int r = 0; r < n_r; ++r) {
            dwt1(&cur.v[static_cast<std::size_t>(r) * n_c], n_c, ca.data(), cd.data());
            for (int c = 0; c < ac; ++c) {
                rl.at(r, c) = ca[c];
                rh.at(r, c) = cd[c];
            }
        }
        // then columns
        WaveletLevel out;
        out.orig_rows = n_r;
        out.orig_cols = n_c;
        Mat ll(ar, ac);
        out.lh = Mat(ar, ac);
        out.hl = Mat(ar, ac);
        out.hh = Mat(ar, ac);
        std::vector<double> col(n_r), cca(ar), ccd(ar);
        for (int c = 0; c < ac; ++c) {
            for (int r = 0; r < n_r; ++r) col[r] = rl.at(r, c);
            dwt1(col.data(), n_r, cca.data(), ccd.data());
            for (int r = 0; r < ar; ++r) {
                ll.at(r, c) = cca[r];
                out.lh.at(r, c) = ccd[r];
            }
            for (int r = 0; r < n_r; ++r) col[r] = rh.at(r, c);
            dwt1(col.data(), n_r, cca.data(), ccd.data());
            for (int r = 0; r < ar; ++r) {
                out.hl.at(r, c) = cca[r];
                out.hh.at(r, c) = ccd[r];
            }
        }
        pyr.levels.push_back(std::move(out));
        cur = std::move(ll);
    }
    pyr.approx = std::move(cur);
    return pyr;
}

Mat idwt2(const WaveletPyramid& pyr) {
    Mat cur = pyr.approx;
    for (std::size_t li = pyr.levels.size(); li-- > 0;) {
        const WaveletLevel& lvl = pyr.levels[li];
        const int n_r = lvl.orig_rows, n_c = lvl.orig_cols;
        const int ar = lvl.lh.rows, ac = lvl.lh.cols;
        // columns first (inverse of the forward order)
        Mat rl(n_r, ac), rh(n_r, ac);
        std::vector<double> cca(ar), ccd(ar), col(n_r);
        for (int c = 0; c < ac; ++c) {
            for (int r = 0; r < ar; ++r) {
                cca[r] = cur.at(r, c);
                ccd[r] = lvl.lh.at(r, c);
            }
            idwt1(cca.data(), ccd.data(), ar, col.data(), n_r);
            for (int r = 0; r < n_r; ++r) rl.at(r, c) = col[r];
            for (int r = 0; r < ar; ++r) {
                cca[r] = lvl.hl.at(r, c);
                ccd[r] = lvl.hh.at(r, c);
            }
            idwt1(cca.data(), ccd.data(), ar, col.data(), n_r);
            for (int r = 0; r < n_r; ++r) rh.at(r, c) = col[r];
        }
        // then rows
        Mat out(n_r, n_c);
        std::vector<double> ra(ac), rd(ac);
        for (int r = 0; r < n_r; ++r) {
            for (int c = 0; c < ac; ++c) {
                ra[c] = rl.at(r, c);
                rd[c] = rh.at(r, c);
            }
            idwt1(ra.data(), rd.data(), ac, &out.v[static_cast<std::size_t>(r) * n_c],
                  n_c);
        }
        cur = std::move(out);
    }
    return cur;
}

// --- MMSE shrinkage -----------------------------------------------------------

namespace {

// Local mean of w^2 over a (win x win) window clipped at the borders.
Mat local_mean_sq(const Mat& band, int win) {
    const int R = band.rows, C = band.cols, h = win / 2;
    // summed-area table of squares
    std::vector<double> sat(static_cast<std::size_t>(R + 1) * (C + 1), 0.0);
    auto S = [&](int r, int c) -> double& {
        return sat[static_cast<std::size_t>(r) * (C + 1) + c];
    };
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) {
            const double v = band.at(r, c);
            S(r + 1, c + 1) = v * v + S(r, c + 1) + S(r + 1, c) - S(r, c);
        }
    Mat out(R, C);
    for (int r = 0; r < R; ++r) {
        const int r0 = std::max(0, r - h), r1 = std::min(R - 1, r + h);
        for (int c = 0; c < C; ++c) {
            const int c0 = std::max(0, c - h), c1 = std::min(C - 1, c + h);
            const double sum =
                S(r1 + 1, c1 + 1) - S(r0, c1 + 1) - S(r1 + 1, c0) + S(r0, c0);
            out.at(r, c) = sum / ((r1 - r0 + 1) * (c1 - c0 + 1));
        }
    }
    return out;
}

void shrink_band(Mat& band, const DenoiserConfig& cfg) {
    const double nv = cfg.noise_variance;
    Mat min_mean;
    bool first = true;
    for (int w : cfg.window_sizes) {
        Mat m = local_mean_sq(band, w);
        if (first) {
            min_mean = std::move(m);
            first = false;
        } else {
            for (std::size_t i = 0; i < min_mean.v.size(); ++i)
                min_mean.v[i] = std::min(min_mean.v[i], m.v[i]);
        }
    }
    for (std::size_t i = 0; i < band.v.size(); ++i) {
        const double var = std::max(0.0, min_mean.v[i] - nv);
        band.v[i] *= var / (var + nv);
    }
}

}  // namespace

Tensor<double> wavelet_denoise(const Patch& image, const DenoiserConfig& cfg) {
    cfg.validate();
    if (image.rows < (1 << cfg.levels) || image.cols < (1 << cfg.levels))
        throw std::invalid_argument("wavelet_denoise: image smaller than 2^levels");
    Mat x(image.rows, image.cols);
    for (std::size_t i = 0; i < image.pix.size(); ++i)
        x.v[i] = static_cast<double>(image.pix[i]);
    WaveletPyramid pyr = dwt2(x, cfg.levels);
    for (auto& lvl : pyr.levels) {
        shrink_band(lvl.lh, cfg);
        shrink_band(lvl.hl, cfg);
        shrink_band(lvl.hh, cfg);
    }
    Mat rec = idwt2(pyr);
    Tensor<double> out({image.rows, image.cols, 1});
    out.data = std::move(rec.v);
    return out;
}

Tensor<float> noise_residual(const Patch& image, const DenoiserConfig& cfg) {
    Tensor<double> den = wavelet_denoise(image, cfg);
    Tensor<float> out({image.rows, image.cols, 1});
    for (std::size_t i = 0; i < image.pix.size(); ++i)
        out.data[i] = static_cast<float>(static_cast<double>(image.pix[i]) - den.data[i]);
    return out;
}

}  // namespace djf
