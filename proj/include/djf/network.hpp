#pragma once

#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "djf/layers.hpp"

namespace djf {

/// Stable softmax + cross-entropy. Returns (probabilities, loss).
template <class T>
std::pair<Tensor<T>, double> softmax_xent(const Tensor<T>& logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.numel())
        throw std::invalid_argument("softmax_xent: label out of range");
    Tensor<T> probs(logits.shape);
    T mx = logits.data[0];
    for (T v : logits.data) mx = std::max(mx, v);
    double sum = 0.0;
    std::vector<double> e(logits.numel());
    for (std::size_t i = 0; i < logits.numel(); ++i) {
        e[i] = std::exp(static_cast<double>(logits.data[i] - mx));
        sum += e[i];
    }
    for (std::size_t i = 0; i < logits.numel(); ++i)
        probs.data[i] = static_cast<T>(e[i] / sum);
    // loss via log-sum-exp, avoids log(0) for saturated logits
    double loss = std::log(sum) - static_cast<double>(logits.data[label] - mx);
    return {probs, loss};
}

/// A sequential stack of layers ending (for classifiers) in SoftMax.
template <class T>
class Network {
public:
    Network() = default;
    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    template <class L, class... Args>
    L* add(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers_.push_back(std::move(layer));
        return raw;
    }

    std::size_t size() const { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_[i]; }
    const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }

    /// Run layers [from, to) on x.
    Tensor<T> forward(Tensor<T> x, std::size_t from = 0,
                      std::size_t to = std::numeric_limits<std::size_t>::max()) {
        to = std::min(to, layers_.size());
        for (std::size_t i = from; i < to; ++i) {
            x = layers_[i]->forward(x);
#ifndef NDEBUG
            if (!x.all_finite())
                throw std::runtime_error("non-finite activation after layer " +
                                         std::to_string(i) + " (" +
                                         layer_kind_name(layers_[i]->kind()) + ")");
#endif
        }
        return x;
    }

    /// Propagate grad from layer index `upper` (exclusive) down to `lower`.
    Tensor<T> backward(Tensor<T> g, std::size_t upper,
                       std::size_t lower = 0) {
        for (std::size_t i = upper; i-- > lower;) g = layers_[i]->backward(g);
        return g;
    }

    std::vector<Tensor<T>*> params() {
        std::vector<Tensor<T>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }

    std::vector<Tensor<T>*> trainable_params() {
        std::vector<Tensor<T>*> out;
        for (auto* p : params())
            if (p->requires_grad) out.push_back(p);
        return out;
    }

    void zero_grads() {
        for (auto* p : params()) {
            p->ensure_grad();
            p->zero_grad();
        }
    }

    /// Layer index of the parameter, for diagnostics.
    std::string param_owner(const Tensor<T>* param) const {
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            auto ps = const_cast<Layer<T>&>(*layers_[i]).params();
            for (auto* p : ps)
                if (p == param)
                    return std::string(layer_kind_name(layers_[i]->kind())) + "#" +
                           std::to_string(i);
        }
        return "?";
    }

    std::vector<std::vector<int>> shape_trace(std::vector<int> in) const {
        std::vector<std::vector<int>> trace;
        for (auto& l : layers_) {
            in = l->output_shape(in);
            trace.push_back(in);
        }
        return trace;
    }

private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

/// One forward + backward pass of a classifier net whose last layer is
/// SoftMax; the loss gradient is injected at the logits (probs - onehot).
/// Parameter gradients accumulate; callers zero them per batch.
/// Returns (probs, loss).
template <class T>
std::pair<Tensor<T>, double> forward_backward(Network<T>& net, const Tensor<T>& x,
                                              int label, std::size_t from = 0,
                                              std::size_t lower = 0) {
    if (net.size() == 0 || net.layer(net.size() - 1).kind() != LayerKind::SoftMax)
        throw std::logic_error("forward_backward: network must end in SoftMax");
    Tensor<T> logits = net.forward(x, from, net.size() - 1);
    auto [probs, loss] = softmax_xent(logits, label);
    Tensor<T> g(probs.shape);
    for (std::size_t i = 0; i < probs.numel(); ++i)
        g.data[i] = probs.data[i] - (static_cast<int>(i) == label ? T(1) : T(0));
    net.backward(std::move(g), net.size() - 1, lower);
    return {probs, loss};
}

struct SgdConfig {
    int batch_size = 128;
    double momentum = 0.9;
    double lr0 = 0.01;  // 0.001 for B = 256
    double decay_per_iteration = 0.9999;
    int max_epochs = 30;
    int patience = 0;  // 0 = train all epochs
    std::uint64_t seed = 1;
};

/// SGD with momentum: v <- m*v - lr_t*g; p <- p + v,
/// lr_t = lr0 * decay^iteration.
template <class T>
class SgdOptimizer {
public:
    SgdOptimizer(std::vector<Tensor<T>*> params, SgdConfig cfg)
        : params_(std::move(params)), cfg_(cfg) {
        for (auto* p : params_) velocity_.emplace_back(p->data.size(), T(0));
    }

    double learning_rate(long iteration) const {
        return cfg_.lr0 * std::pow(cfg_.decay_per_iteration, double(iteration));
    }

    /// Applies one update; gradients must already be averaged over the batch.
    void step(long iteration, const Network<T>* net_for_diagnostics = nullptr) {
        const T lr = static_cast<T>(learning_rate(iteration));
        for (std::size_t pi = 0; pi < params_.size(); ++pi) {
            Tensor<T>* p = params_[pi];
            auto& v = velocity_[pi];
            for (std::size_t i = 0; i < p->data.size(); ++i) {
                if (!std::isfinite(static_cast<double>(p->grad[i]))) {
                    std::string where =
                        net_for_diagnostics
                            ? net_for_diagnostics->param_owner(p)
                            : ("param#" + std::to_string(pi));
                    throw std::runtime_error("non-finite gradient in " + where);
                }
                v[i] = static_cast<T>(cfg_.momentum) * v[i] - lr * p->grad[i];
                p->data[i] += v[i];
            }
        }
    }

    const SgdConfig& config() const { return cfg_; }

private:
    std::vector<Tensor<T>*> params_;
    std::vector<std::vector<T>> velocity_;
    SgdConfig cfg_;
};

}  // namespace djf
