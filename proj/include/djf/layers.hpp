#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "djf/rng.hpp"
#include "djf/tensor.hpp"

namespace djf {

enum class LayerKind : std::uint8_t {
    Conv = 0,
    MaxPool = 1,
    AvgPool = 2,
    ReLU = 3,
    Sigmoid = 4,
    Bias = 5,
    InnerProduct = 6,
    SoftMax = 7,
    DCTFilterbank = 8,
    Scale = 9,
    DiffConv = 10,
    SoftCount = 11,  // fused bias/sigmoid/avg-pool/scale soft-counting stage
};

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv: return "Conv";
        case LayerKind::MaxPool: return "MaxPool";
        case LayerKind::AvgPool: return "AvgPool";
        case LayerKind::ReLU: return "ReLU";
        case LayerKind::Sigmoid: return "Sigmoid";
        case LayerKind::Bias: return "Bias";
        case LayerKind::InnerProduct: return "InnerProduct";
        case LayerKind::SoftMax: return "SoftMax";
        case LayerKind::DCTFilterbank: return "DCTFilterbank";
        case LayerKind::Scale: return "Scale";
        case LayerKind::DiffConv: return "DiffConv";
        case LayerKind::SoftCount: return "SoftCount";
    }
    return "?";
}

/// Ceil output arithmetic for pooling: windows may shrink at the border.
inline int pool_out_extent(int in, int kernel, int stride) {
    int num = in - kernel;
    if (num < 0)
        throw std::invalid_argument("pool kernel " + std::to_string(kernel) +
                                    " exceeds input extent " + std::to_string(in));
    return (num + stride - 1) / stride + 1;
}

inline int conv_out_extent(int in, int kernel, int stride) {
    if (kernel > in)
        throw std::invalid_argument("conv kernel " + std::to_string(kernel) +
                                    " exceeds input extent " + std::to_string(in));
    return (in - kernel) / stride + 1;
}

/// Numerically stable logistic, saturating to exactly 0/1 in the tails.
inline double stable_sigmoid(double z) {
    if (z >= 40.0) return 1.0;
    if (z <= -40.0) return 0.0;
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    double e = std::exp(z);
    return e / (1.0 + e);
}

template <class T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual LayerKind kind() const = 0;
    virtual Tensor<T> forward(const Tensor<T>& in) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual std::vector<Tensor<T>*> params() { return {}; }
    virtual std::vector<int> output_shape(const std::vector<int>& in) const = 0;

protected:
    void require_forward(const char* who) const {
        if (!has_forward_)
            throw std::logic_error(std::string(who) +
                                   ": backward called before forward");
    }
    bool has_forward_ = false;
};

// ---------------------------------------------------------------------------
// Conv2d: valid cross-correlation on H x W x C input with k x k x C x F
// filters and a per-filter scalar bias.
// ---------------------------------------------------------------------------
template <class T>
class Conv2d final : public Layer<T> {
public:
    Conv2d(int kernel, int in_channels, int num_filters, int stride,
           bool trainable = true)
        : k_(kernel), c_(in_channels), f_(num_filters), stride_(stride) {
        if (kernel < 1 || stride < 1 || in_channels < 1 || num_filters < 1)
            throw std::invalid_argument("Conv2d: kernel/stride/channels must be positive");
        weights_ = Tensor<T>({k_, k_, c_, f_}, trainable);
        bias_ = Tensor<T>({f_}, trainable);
    }

    void init_weights(Rng& rng) {
        double fan_in = static_cast<double>(k_) * k_ * c_;
        double a = std::sqrt(3.0 / fan_in);
        for (auto& w : weights_.data) w = static_cast<T>(rng.uniform(-a, a));
        std::fill(bias_.data.begin(), bias_.data.end(), T(0));
    }

    LayerKind kind() const override { return LayerKind::Conv; }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        if (in.size() != 3 || in[2] != c_)
            throw std::invalid_argument("Conv2d: expected HxWx" + std::to_string(c_) +
                                        " input, got " + shape_str(in));
        return {conv_out_extent(in[0], k_, stride_),
                conv_out_extent(in[1], k_, stride_), f_};
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        auto os = output_shape(in.shape);
        input_ = in;
        Tensor<T> out(os);
        const int oh = os[0], ow = os[1];
        const int W = in.shape[1];
        const T* id = in.data.data();
        const T* wd = weights_.data.data();
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                T* acc = &out.at3(oy, ox, 0);
                for (int f = 0; f < f_; ++f) acc[f] = bias_[f];
                const int y0 = oy * stride_, x0 = ox * stride_;
                for (int ky = 0; ky < k_; ++ky) {
                    const T* row = id + (static_cast<std::size_t>(y0 + ky) * W + x0) * c_;
                    const T* wrow = wd + static_cast<std::size_t>(ky) * k_ * c_ * f_;
                    for (int kxc = 0; kxc < k_ * c_; ++kxc) {
                        const T v = row[kxc];
                        const T* wf = wrow + static_cast<std::size_t>(kxc) * f_;
                        for (int f = 0; f < f_; ++f) acc[f] += v * wf[f];
                    }
                }
            }
        }
        this->has_forward_ = true;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("Conv2d");
        auto os = output_shape(input_.shape);
        check_shape(grad_out, os, "Conv2d grad");
        Tensor<T> gin(input_.shape);
        weights_.ensure_grad();
        bias_.ensure_grad();
        const int oh = os[0], ow = os[1];
        const int W = input_.shape[1];
        const T* id = input_.data.data();
        const T* wd = weights_.data.data();
        T* gid = gin.data.data();
        T* gwd = weights_.grad.data();
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const T* go = &grad_out.at3(oy, ox, 0);
                for (int f = 0; f < f_; ++f) bias_.grad[f] += go[f];
                const int y0 = oy * stride_, x0 = ox * stride_;
                for (int ky = 0; ky < k_; ++ky) {
                    const std::size_t base = (static_cast<std::size_t>(y0 + ky) * W + x0) * c_;
                    const std::size_t wbase = static_cast<std::size_t>(ky) * k_ * c_ * f_;
                    for (int kxc = 0; kxc < k_ * c_; ++kxc) {
                        const T v = id[base + kxc];
                        const T* wf = wd + wbase + static_cast<std::size_t>(kxc) * f_;
                        T* gwf = gwd + wbase + static_cast<std::size_t>(kxc) * f_;
                        T acc = T(0);
                        for (int f = 0; f < f_; ++f) {
                            acc += go[f] * wf[f];
                            gwf[f] += v * go[f];
                        }
                        gid[base + kxc] += acc;
                    }
                }
            }
        }
        return gin;
    }

    std::vector<Tensor<T>*> params() override { return {&weights_, &bias_}; }

    Tensor<T>& weights() { return weights_; }
    Tensor<T>& bias() { return bias_; }
    int kernel() const { return k_; }
    int stride() const { return stride_; }
    int num_filters() const { return f_; }
    int in_channels() const { return c_; }

private:
    int k_, c_, f_, stride_;
    Tensor<T> weights_, bias_, input_;
};

// ---------------------------------------------------------------------------
// Pooling with ceil output arithmetic; windows shrink at the border.
// ---------------------------------------------------------------------------
template <class T>
class MaxPool final : public Layer<T> {
public:
    MaxPool(int kernel, int stride) : k_(kernel), stride_(stride) {
        if (kernel < 1 || stride < 1)
            throw std::invalid_argument("MaxPool: kernel/stride must be positive");
    }

    LayerKind kind() const override { return LayerKind::MaxPool; }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        if (in.size() != 3)
            throw std::invalid_argument("MaxPool: expected rank-3 input, got " +
                                        shape_str(in));
        return {pool_out_extent(in[0], k_, stride_),
                pool_out_extent(in[1], k_, stride_), in[2]};
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        auto os = output_shape(in.shape);
        in_shape_ = in.shape;
        Tensor<T> out(os);
        argmax_.assign(out.numel(), 0);
        const int H = in.shape[0], W = in.shape[1], C = in.shape[2];
        std::size_t oi = 0;
        for (int oy = 0; oy < os[0]; ++oy) {
            const int y0 = oy * stride_, y1 = std::min(y0 + k_, H);
            for (int ox = 0; ox < os[1]; ++ox) {
                const int x0 = ox * stride_, x1 = std::min(x0 + k_, W);
                for (int c = 0; c < C; ++c, ++oi) {
                    T best = in.at3(y0, x0, c);
                    std::size_t bidx = (static_cast<std::size_t>(y0) * W + x0) * C + c;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) {
                            std::size_t idx = (static_cast<std::size_t>(y) * W + x) * C + c;
                            if (in.data[idx] > best) {
                                best = in.data[idx];
                                bidx = idx;
                            }
                        }
                    out.data[oi] = best;
                    argmax_[oi] = bidx;
                }
            }
        }
        this->has_forward_ = true;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("MaxPool");
        Tensor<T> gin(in_shape_);
        for (std::size_t i = 0; i < grad_out.numel(); ++i)
            gin.data[argmax_[i]] += grad_out.data[i];
        return gin;
    }

    int kernel() const { return k_; }
    int stride() const { return stride_; }

private:
    int k_, stride_;
    std::vector<int> in_shape_;
    std::vector<std::size_t> argmax_;
};

template <class T>
class AvgPool final : public Layer<T> {
public:
    AvgPool(int kernel, int stride) : k_(kernel), stride_(stride) {
        if (kernel < 1 || stride < 1)
            throw std::invalid_argument("AvgPool: kernel/stride must be positive");
    }

    LayerKind kind() const override { return LayerKind::AvgPool; }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        if (in.size() != 3)
            throw std::invalid_argument("AvgPool: expected rank-3 input, got " +
                                        shape_str(in));
        return {pool_out_extent(in[0], k_, stride_),
                pool_out_extent(in[1], k_, stride_), in[2]};
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        auto os = output_shape(in.shape);
        in_shape_ = in.shape;
        Tensor<T> out(os);
        const int H = in.shape[0], W = in.shape[1], C = in.shape[2];
        std::size_t oi = 0;
        for (int oy = 0; oy < os[0]; ++oy) {
            const int y0 = oy * stride_, y1 = std::min(y0 + k_, H);
            for (int ox = 0; ox < os[1]; ++ox) {
                const int x0 = ox * stride_, x1 = std::min(x0 + k_, W);
                const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
                for (int c = 0; c < C; ++c, ++oi) {
                    T sum = T(0);
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) sum += in.at3(y, x, c);
                    out.data[oi] = sum * inv;
                }
            }
        }
        this->has_forward_ = true;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("AvgPool");
        Tensor<T> gin(in_shape_);
        auto os = output_shape(in_shape_);
        const int H = in_shape_[0], W = in_shape_[1], C = in_shape_[2];
        std::size_t oi = 0;
        for (int oy = 0; oy < os[0]; ++oy) {
            const int y0 = oy * stride_, y1 = std::min(y0 + k_, H);
            for (int ox = 0; ox < os[1]; ++ox) {
                const int x0 = ox * stride_, x1 = std::min(x0 + k_, W);
                const T inv = T(1) / static_cast<T>((y1 - y0) * (x1 - x0));
                for (int c = 0; c < C; ++c, ++oi) {
                    const T g = grad_out.data[oi] * inv;
                    for (int y = y0; y < y1; ++y)
                        for (int x = x0; x < x1; ++x) gin.at3(y, x, c) += g;
                }
            }
        }
        return gin;
    }

    int kernel() const { return k_; }
    int stride() const { return stride_; }

private:
    int k_, stride_;
    std::vector<int> in_shape_;
};

template <class T>
class ReLU final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::ReLU; }
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        return in;
    }
    Tensor<T> forward(const Tensor<T>& in) override {
        mask_.assign(in.numel(), false);
        Tensor<T> out(in.shape);
        for (std::size_t i = 0; i < in.numel(); ++i) {
            if (in.data[i] > T(0)) {
                out.data[i] = in.data[i];
                mask_[i] = true;
            }
        }
        in_shape_ = in.shape;
        this->has_forward_ = true;
        return out;
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("ReLU");
        Tensor<T> gin(in_shape_);
        for (std::size_t i = 0; i < grad_out.numel(); ++i)
            if (mask_[i]) gin.data[i] = grad_out.data[i];
        return gin;
    }

private:
    std::vector<int> in_shape_;
    std::vector<bool> mask_;
};

template <class T>
class Sigmoid final : public Layer<T> {
public:
    explicit Sigmoid(double gain = 1.0) : gain_(gain) {}
    LayerKind kind() const override { return LayerKind::Sigmoid; }
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        return in;
    }
    Tensor<T> forward(const Tensor<T>& in) override {
        Tensor<T> out(in.shape);
        for (std::size_t i = 0; i < in.numel(); ++i)
            out.data[i] = static_cast<T>(
                stable_sigmoid(gain_ * static_cast<double>(in.data[i])));
        out_ = out;
        this->has_forward_ = true;
        return out;
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("Sigmoid");
        Tensor<T> gin(out_.shape);
        for (std::size_t i = 0; i < grad_out.numel(); ++i) {
            const double s = static_cast<double>(out_.data[i]);
            gin.data[i] = static_cast<T>(static_cast<double>(grad_out.data[i]) *
                                         gain_ * s * (1.0 - s));
        }
        return gin;
    }
    double gain() const { return gain_; }

private:
    double gain_;
    Tensor<T> out_;
};

/// Additive per-channel bias over the last axis.
template <class T>
class Bias final : public Layer<T> {
public:
    explicit Bias(int channels, bool trainable = true) : c_(channels) {
        bias_ = Tensor<T>({c_}, trainable);
    }
    LayerKind kind() const override { return LayerKind::Bias; }
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        if (in.empty() || in.back() != c_)
            throw std::invalid_argument("Bias: last axis must be " +
                                        std::to_string(c_) + ", got " + shape_str(in));
        return in;
    }
    Tensor<T> forward(const Tensor<T>& in) override {
        output_shape(in.shape);
        Tensor<T> out = in;
        for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += bias_[i % c_];
        in_shape_ = in.shape;
        this->has_forward_ = true;
        return out;
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("Bias");
        bias_.ensure_grad();
        for (std::size_t i = 0; i < grad_out.numel(); ++i)
            bias_.grad[i % c_] += grad_out.data[i];
        return grad_out;
    }
    std::vector<Tensor<T>*> params() override { return {&bias_}; }
    Tensor<T>& bias() { return bias_; }

private:
    int c_;
    std::vector<int> in_shape_;
    Tensor<T> bias_;
};

/// Multiplication by a single scalar.
template <class T>
class Scale final : public Layer<T> {
public:
    explicit Scale(T value, bool trainable = false) {
        scale_ = Tensor<T>({1}, trainable);
        scale_[0] = value;
    }
    LayerKind kind() const override { return LayerKind::Scale; }
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        return in;
    }
    Tensor<T> forward(const Tensor<T>& in) override {
        input_ = in;
        Tensor<T> out(in.shape);
        for (std::size_t i = 0; i < in.numel(); ++i) out.data[i] = in.data[i] * scale_[0];
        this->has_forward_ = true;
        return out;
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("Scale");
        scale_.ensure_grad();
        Tensor<T> gin(input_.shape);
        for (std::size_t i = 0; i < grad_out.numel(); ++i) {
            gin.data[i] = grad_out.data[i] * scale_[0];
            scale_.grad[0] += grad_out.data[i] * input_.data[i];
        }
        return gin;
    }
    std::vector<Tensor<T>*> params() override { return {&scale_}; }
    Tensor<T>& scale() { return scale_; }

private:
    Tensor<T> scale_, input_;
};

template <class T>
class InnerProduct final : public Layer<T> {
public:
    InnerProduct(int in_dim, int out_dim, bool trainable = true)
        : in_dim_(in_dim), out_dim_(out_dim) {
        if (in_dim < 1 || out_dim < 1)
            throw std::invalid_argument("InnerProduct: dims must be positive");
        weights_ = Tensor<T>({in_dim_, out_dim_}, trainable);
        bias_ = Tensor<T>({out_dim_}, trainable);
    }

    void init_weights(Rng& rng) {
        double a = std::sqrt(3.0 / in_dim_);
        for (auto& w : weights_.data) w = static_cast<T>(rng.uniform(-a, a));
        std::fill(bias_.data.begin(), bias_.data.end(), T(0));
    }

    LayerKind kind() const override { return LayerKind::InnerProduct; }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        std::size_t n = 1;
        for (int e : in) n *= static_cast<std::size_t>(e);
        if (n != static_cast<std::size_t>(in_dim_))
            throw std::invalid_argument("InnerProduct: flattened input size " +
                                        std::to_string(n) + " != " +
                                        std::to_string(in_dim_));
        return {out_dim_};
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        output_shape(in.shape);
        input_ = in;
        Tensor<T> out({out_dim_});
        for (int o = 0; o < out_dim_; ++o) out[o] = bias_[o];
        const T* wd = weights_.data.data();
        for (int i = 0; i < in_dim_; ++i) {
            const T v = in.data[i];
            const T* wrow = wd + static_cast<std::size_t>(i) * out_dim_;
            for (int o = 0; o < out_dim_; ++o) out[o] += v * wrow[o];
        }
        this->has_forward_ = true;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("InnerProduct");
        weights_.ensure_grad();
        bias_.ensure_grad();
        Tensor<T> gin(input_.shape);
        for (int o = 0; o < out_dim_; ++o) bias_.grad[o] += grad_out[o];
        const T* wd = weights_.data.data();
        T* gwd = weights_.grad.data();
        for (int i = 0; i < in_dim_; ++i) {
            const T v = input_.data[i];
            const T* wrow = wd + static_cast<std::size_t>(i) * out_dim_;
            T* gwrow = gwd + static_cast<std::size_t>(i) * out_dim_;
            T acc = T(0);
            for (int o = 0; o < out_dim_; ++o) {
                acc += grad_out[o] * wrow[o];
                gwrow[o] += v * grad_out[o];
            }
            gin.data[i] = acc;
        }
        return gin;
    }

    std::vector<Tensor<T>*> params() override { return {&weights_, &bias_}; }
    Tensor<T>& weights() { return weights_; }
    Tensor<T>& bias() { return bias_; }
    int in_dim() const { return in_dim_; }
    int out_dim() const { return out_dim_; }

private:
    int in_dim_, out_dim_;
    Tensor<T> weights_, bias_, input_;
};

template <class T>
class SoftMax final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::SoftMax; }
    std::vector<int> output_shape(const std::vector<int>& in) const override {
        return in;
    }
    Tensor<T> forward(const Tensor<T>& in) override {
        Tensor<T> out(in.shape);
        T mx = in.data[0];
        for (T v : in.data) mx = std::max(mx, v);
        double sum = 0.0;
        for (std::size_t i = 0; i < in.numel(); ++i) {
            double e = std::exp(static_cast<double>(in.data[i] - mx));
            out.data[i] = static_cast<T>(e);
            sum += e;
        }
        for (auto& v : out.data) v = static_cast<T>(static_cast<double>(v) / sum);
        out_ = out;
        this->has_forward_ = true;
        return out;
    }
    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("SoftMax");
        Tensor<T> gin(out_.shape);
        double dot = 0.0;
        for (std::size_t i = 0; i < out_.numel(); ++i)
            dot += static_cast<double>(grad_out.data[i]) * out_.data[i];
        for (std::size_t i = 0; i < out_.numel(); ++i)
            gin.data[i] = static_cast<T>(
                out_.data[i] * (static_cast<double>(grad_out.data[i]) - dot));
        return gin;
    }

private:
    Tensor<T> out_;
};

// ---------------------------------------------------------------------------
// Fixed DCT filterbank: stride-8 valid convolution with the orthonormal
// 8x8 DCT-II basis at the requested (c1, c2) frequencies. Not trainable.
// ---------------------------------------------------------------------------
inline const std::vector<double>& dct8_basis_flat() {
    // basis[(c1*8+c2)*64 + (i*8+j)] = alpha(c1) alpha(c2)
    //   cos((2i+1) c1 pi / 16) cos((2j+1) c2 pi / 16) / 4 * 2  (orthonormal)
    static const std::vector<double> basis = [] {
        std::vector<double> b(64 * 64);
        const double pi = 3.14159265358979323846;
        for (int c1 = 0; c1 < 8; ++c1)
            for (int c2 = 0; c2 < 8; ++c2) {
                double a1 = (c1 == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
                double a2 = (c2 == 0) ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        b[(c1 * 8 + c2) * 64 + i * 8 + j] =
                            a1 * a2 * std::cos((2 * i + 1) * c1 * pi / 16.0) *
                            std::cos((2 * j + 1) * c2 * pi / 16.0);
            }
        return b;
    }();
    return basis;
}

template <class T>
class DctFilterbank final : public Layer<T> {
public:
    explicit DctFilterbank(std::vector<std::pair<int, int>> frequencies)
        : freqs_(std::move(frequencies)) {
        if (freqs_.empty())
            throw std::invalid_argument("DctFilterbank: no frequencies");
        for (auto [c1, c2] : freqs_)
            if (c1 < 0 || c1 > 7 || c2 < 0 || c2 > 7)
                throw std::invalid_argument("DctFilterbank: frequency out of range");
    }

    LayerKind kind() const override { return LayerKind::DCTFilterbank; }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        if (in.size() != 3 || in[2] != 1)
            throw std::invalid_argument("DctFilterbank: expected HxWx1, got " +
                                        shape_str(in));
        if (in[0] % 8 != 0 || in[1] % 8 != 0)
            throw std::invalid_argument(
                "DctFilterbank: extents must be divisible by 8, got " +
                shape_str(in));
        return {in[0] / 8, in[1] / 8, static_cast<int>(freqs_.size())};
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        auto os = output_shape(in.shape);
        in_shape_ = in.shape;
        Tensor<T> out(os);
        const auto& basis = dct8_basis_flat();
        const int W = in.shape[1];
        const int F = os[2];
        for (int by = 0; by < os[0]; ++by)
            for (int bx = 0; bx < os[1]; ++bx)
                for (int f = 0; f < F; ++f) {
                    const double* kf =
                        basis.data() + (freqs_[f].first * 8 + freqs_[f].second) * 64;
                    double acc = 0.0;
                    for (int i = 0; i < 8; ++i) {
                        const T* row = &in.data[(static_cast<std::size_t>(by * 8 + i) * W +
                                                 bx * 8)];
                        for (int j = 0; j < 8; ++j) acc += kf[i * 8 + j] * row[j];
                    }
                    out.at3(by, bx, f) = static_cast<T>(acc);
                }
        this->has_forward_ = true;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("DctFilterbank");
        Tensor<T> gin(in_shape_);
        const auto& basis = dct8_basis_flat();
        const int W = in_shape_[1];
        const int F = static_cast<int>(freqs_.size());
        const int BH = in_shape_[0] / 8, BW = in_shape_[1] / 8;
        for (int by = 0; by < BH; ++by)
            for (int bx = 0; bx < BW; ++bx)
                for (int f = 0; f < F; ++f) {
                    const double g = static_cast<double>(grad_out.at3(by, bx, f));
                    const double* kf =
                        basis.data() + (freqs_[f].first * 8 + freqs_[f].second) * 64;
                    for (int i = 0; i < 8; ++i) {
                        T* row = &gin.data[(static_cast<std::size_t>(by * 8 + i) * W +
                                            bx * 8)];
                        for (int j = 0; j < 8; ++j)
                            row[j] += static_cast<T>(g * kf[i * 8 + j]);
                    }
                }
        return gin;
    }

    const std::vector<std::pair<int, int>>& frequencies() const { return freqs_; }

private:
    std::vector<std::pair<int, int>> freqs_;
    std::vector<int> in_shape_;
};

// ---------------------------------------------------------------------------
// SoftCount: for each bin boundary b and frequency channel f, the soft count
// of coefficients exceeding b, i.e. sum over blocks of sigmoid(gain*(D - b)).
// Composition of bias, sigmoid, global average-pool and a block-count scale,
// fused so that saturated sigmoids cost a comparison instead of an exp.
// ---------------------------------------------------------------------------
template <class T>
class SoftCount final : public Layer<T> {
public:
    SoftCount(std::vector<double> boundaries, double gain, bool trainable)
        : gain_(gain) {
        if (boundaries.size() < 2)
            throw std::invalid_argument("SoftCount: need at least 2 boundaries");
        for (std::size_t i = 1; i < boundaries.size(); ++i)
            if (boundaries[i] <= boundaries[i - 1])
                throw std::invalid_argument(
                    "SoftCount: boundaries must be strictly increasing");
        if (gain <= 0.0) throw std::invalid_argument("SoftCount: gain must be > 0");
        boundaries_ = Tensor<T>({static_cast<int>(boundaries.size())}, trainable);
        for (std::size_t i = 0; i < boundaries.size(); ++i)
            boundaries_[i] = static_cast<T>(boundaries[i]);
    }

    LayerKind kind() const override { return LayerKind::SoftCount; }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        if (in.size() != 3)
            throw std::invalid_argument("SoftCount: expected rank-3 input, got " +
                                        shape_str(in));
        return {boundaries_.dim(0), in[2], 1};
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        auto os = output_shape(in.shape);
        input_ = in;
        Tensor<T> out(os);
        const int K = os[0], F = os[1];
        const int nblocks = in.shape[0] * in.shape[1];
        // margin beyond which the sigmoid is saturated to exactly 0 or 1
        const double margin = 40.0 / gain_;
        std::vector<double> col(K);
        for (int f = 0; f < F; ++f) {
            std::fill(col.begin(), col.end(), 0.0);
            for (int blk = 0; blk < nblocks; ++blk) {
                const double d =
                    static_cast<double>(in.data[static_cast<std::size_t>(blk) * F + f]);
                for (int k = 0; k < K; ++k) {
                    const double b = static_cast<double>(boundaries_[k]);
                    if (b < d - margin)  // saturated high
                        col[k] += 1.0;
                    else if (b <= d + margin)
                        col[k] += stable_sigmoid(gain_ * (d - b));
                }
            }
            for (int k = 0; k < K; ++k)
                out.data[static_cast<std::size_t>(k) * F + f] = static_cast<T>(col[k]);
        }
        this->has_forward_ = true;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("SoftCount");
        boundaries_.ensure_grad();
        Tensor<T> gin(input_.shape);
        const int K = boundaries_.dim(0), F = input_.shape[2];
        const int nblocks = input_.shape[0] * input_.shape[1];
        const double margin = 40.0 / gain_;
        for (int f = 0; f < F; ++f) {
            for (int blk = 0; blk < nblocks; ++blk) {
                const std::size_t di = static_cast<std::size_t>(blk) * F + f;
                const double d = static_cast<double>(input_.data[di]);
                double gd = 0.0;
                for (int k = 0; k < K; ++k) {
                    const double b = static_cast<double>(boundaries_[k]);
                    if (b < d - margin || b > d + margin) continue;
                    const double s = stable_sigmoid(gain_ * (d - b));
                    const double ds = gain_ * s * (1.0 - s);
                    const double g = static_cast<double>(
                        grad_out.data[static_cast<std::size_t>(k) * F + f]);
                    gd += g * ds;
                    boundaries_.grad[k] -= static_cast<T>(g * ds);
                }
                gin.data[di] += static_cast<T>(gd);
            }
        }
        return gin;
    }

    std::vector<Tensor<T>*> params() override { return {&boundaries_}; }
    Tensor<T>& boundaries() { return boundaries_; }
    double gain() const { return gain_; }

private:
    double gain_;
    Tensor<T> boundaries_, input_;
};

// ---------------------------------------------------------------------------
// DiffConv: valid 1-D convolution with the fixed kernel [1, -1] along the
// first (bin) axis. Input (K, F) or (K, F, 1) -> output with K-1 bins.
// ---------------------------------------------------------------------------
template <class T>
class DiffConv final : public Layer<T> {
public:
    LayerKind kind() const override { return LayerKind::DiffConv; }

    std::vector<int> output_shape(const std::vector<int>& in) const override {
        const bool ok = (in.size() == 2 || (in.size() == 3 && in[2] == 1)) &&
                        in[0] >= 2;
        if (!ok)
            throw std::invalid_argument(
                "DiffConv: expected (K>=2, F[, 1]) input, got " + shape_str(in));
        auto out = in;
        out[0] -= 1;
        return out;
    }

    Tensor<T> forward(const Tensor<T>& in) override {
        auto os = output_shape(in.shape);
        in_shape_ = in.shape;
        Tensor<T> out(os);
        const std::size_t F = static_cast<std::size_t>(in.shape[1]);
        for (int k = 0; k < os[0]; ++k)
            for (std::size_t f = 0; f < F; ++f)
                out.data[k * F + f] = in.data[k * F + f] - in.data[(k + 1) * F + f];
        this->has_forward_ = true;
        return out;
    }

    Tensor<T> backward(const Tensor<T>& grad_out) override {
        this->require_forward("DiffConv");
        Tensor<T> gin(in_shape_);
        const std::size_t F = static_cast<std::size_t>(in_shape_[1]);
        for (int k = 0; k < in_shape_[0] - 1; ++k)
            for (std::size_t f = 0; f < F; ++f) {
                gin.data[k * F + f] += grad_out.data[k * F + f];
                gin.data[(k + 1) * F + f] -= grad_out.data[k * F + f];
            }
        return gin;
    }

private:
    std::vector<int> in_shape_;
};

}  // namespace djf
