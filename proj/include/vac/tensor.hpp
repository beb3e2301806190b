#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "vac/errors.hpp"
#include "vac/rng.hpp"

namespace vac {

inline std::size_t numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense row-major tensor. Shape extents must be positive and
// product(shape) == data.size() at all times.
template <class S>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<S> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> sh, S fill = S(0))
        : shape(std::move(sh)), data(checked_numel(shape), fill) {}

    Tensor(std::vector<std::size_t> sh, std::vector<S> values)
        : shape(std::move(sh)), data(std::move(values)) {
        if (numel(shape) != data.size())
            throw ConfigError("tensor shape " + shape_str(shape) + " does not match " +
                              std::to_string(data.size()) + " values");
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool empty() const { return data.empty(); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](std::size_t i) { return data[i]; }
    const S& operator[](std::size_t i) const { return data[i]; }

    // 2-D indexing (rows, cols)
    S& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    const S& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    // NCHW indexing
    S& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    const S& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }

    Tensor reshaped(std::vector<std::size_t> sh) const {
        if (numel(sh) != data.size())
            throw ConfigError("cannot reshape " + shape_str(shape) + " to " + shape_str(sh));
        Tensor t;
        t.shape = std::move(sh);
        t.data = data;
        return t;
    }

    bool finite() const {
        for (const S& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape); }

    static Tensor randn(std::vector<std::size_t> sh, Rng& rng, double stddev = 1.0) {
        Tensor t(std::move(sh));
        for (S& v : t.data) v = static_cast<S>(rng.normal() * stddev);
        return t;
    }

private:
    static std::size_t checked_numel(const std::vector<std::size_t>& sh) {
        for (std::size_t e : sh)
            if (e == 0) throw ConfigError("tensor extent must be positive, got shape " + shape_str(sh));
        return numel(sh);
    }
};

template <class S>
void ensure_finite(const Tensor<S>& t, const std::string& what) {
    if (!t.finite()) throw NumericError("non-finite values in " + what);
}

template <class S>
void ensure_shape(const Tensor<S>& t, const std::vector<std::size_t>& want, const std::string& what) {
    if (t.shape != want)
        throw ConfigError(what + ": expected shape " + shape_str(want) + ", got " + shape_str(t.shape));
}

template <class S>
bool same_shape(const Tensor<S>& a, const Tensor<S>& b) {
    return a.shape == b.shape;
}

template <class S>
void ensure_same_shape(const Tensor<S>& a, const Tensor<S>& b, const std::string& what) {
    if (!same_shape(a, b))
        throw ConfigError(what + ": shape mismatch " + shape_str(a.shape) + " vs " +
                          shape_str(b.shape));
}

} // namespace vac
