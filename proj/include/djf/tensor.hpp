#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace djf {

/// Dense n-dimensional array with an optional gradient buffer of the same
/// shape. Value semantics; the scalar type is float for training and double
/// for gradient-check tests.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, bool req_grad = false)
        : shape(std::move(s)), requires_grad(req_grad) {
        for (int e : shape) {
            if (e <= 0)
                throw std::invalid_argument("tensor extent must be positive, got " +
                                            std::to_string(e));
        }
        data.assign(numel(), T(0));
        if (requires_grad) grad.assign(numel(), T(0));
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (int e : shape) n *= static_cast<std::size_t>(e);
        return n;
    }

    int dim(std::size_t i) const { return shape.at(i); }
    std::size_t rank() const { return shape.size(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // Row-major indexing helpers for the common ranks.
    T& at3(int i, int j, int k) {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    const T& at3(int i, int j, int k) const {
        return data[(static_cast<std::size_t>(i) * shape[1] + j) * shape[2] + k];
    }
    T& at2(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
    const T& at2(int i, int j) const {
        return data[static_cast<std::size_t>(i) * shape[1] + j];
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static Tensor full(std::vector<int> s, T value) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

template <class T>
void check_shape(const Tensor<T>& t, const std::vector<int>& expect,
                 const char* what) {
    if (t.shape != expect)
        throw std::invalid_argument(std::string(what) + ": expected shape " +
                                    shape_str(expect) + ", got " +
                                    shape_str(t.shape));
}

}  // namespace djf
