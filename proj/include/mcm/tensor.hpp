#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcm/errors.hpp"

namespace mcm {

using Shape = std::vector<long>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << s[i] << (i + 1 < s.size() ? "," : "");
    os << ']';
    return os.str();
}

inline long shape_numel(const Shape& s) {
    long n = 1;
    for (long d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

// Dense row-major double tensor. Value semantics; all heavy lifting happens
// through Eigen maps over `data` in the ops that need it.
struct Tensor {
    Shape shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), 0.0) {}
    Tensor(Shape s, double fill)
        : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor full(Shape s, double v) { return Tensor(std::move(s), v); }

    static Tensor randn(Shape s, std::mt19937_64& g, double stddev = 1.0) {
        Tensor t(std::move(s));
        std::normal_distribution<double> d(0.0, stddev);
        for (double& x : t.data) x = d(g);
        return t;
    }

    long numel() const { return static_cast<long>(data.size()); }
    long dim(size_t i) const { return shape.at(i); }
    size_t ndim() const { return shape.size(); }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    long offset(const std::vector<long>& idx) const {
        if (idx.size() != shape.size())
            throw ShapeError("index rank " + std::to_string(idx.size()) + " vs shape " + shape_str(shape));
        long off = 0;
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= shape[i])
                throw ShapeError("index out of bounds at axis " + std::to_string(i));
            off = off * shape[i] + idx[i];
        }
        return off;
    }

    template <typename... I>
    double& at(I... idx) {
        return data[static_cast<size_t>(offset({static_cast<long>(idx)...}))];
    }
    template <typename... I>
    double at(I... idx) const {
        return data[static_cast<size_t>(offset({static_cast<long>(idx)...}))];
    }

    // Same storage, new shape; element count must match.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel())
            throw ShapeError("reshape " + shape_str(shape) + " -> " + shape_str(s));
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        return t;
    }
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape != b.shape)
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                         shape_str(b.shape));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor r = a;
    for (long i = 0; i < r.numel(); ++i) r.data[i] += b.data[i];
    return r;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor r = a;
    for (long i = 0; i < r.numel(); ++i) r.data[i] -= b.data[i];
    return r;
}

inline Tensor operator*(const Tensor& a, double s) {
    Tensor r = a;
    for (double& x : r.data) x *= s;
    return r;
}
inline Tensor operator*(double s, const Tensor& a) { return a * s; }

inline Tensor hadamard(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "hadamard");
    Tensor r = a;
    for (long i = 0; i < r.numel(); ++i) r.data[i] *= b.data[i];
    return r;
}

inline double dot(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "dot");
    double s = 0.0;
    for (long i = 0; i < a.numel(); ++i) s += a.data[i] * b.data[i];
    return s;
}

inline double sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data) s += x;
    return s;
}

inline double mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean of empty tensor");
    return sum(a) / static_cast<double>(a.numel());
}

inline double l2_norm(const Tensor& a) { return std::sqrt(dot(a, a)); }

inline double rmse(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "rmse");
    double s = 0.0;
    for (long i = 0; i < a.numel(); ++i) {
        double d = a.data[i] - b.data[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(a.numel()));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "max_abs_diff");
    double m = 0.0;
    for (long i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline bool all_finite(const Tensor& a) {
    for (double x : a.data)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void clip_(Tensor& a, double lo, double hi) {
    for (double& x : a.data) x = std::min(hi, std::max(lo, x));
}

}  // namespace mcm
