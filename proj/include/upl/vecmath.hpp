#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "upl/errors.hpp"

namespace upl {

// All numerics run in doubles so gradient checks against central finite
// differences stay well conditioned. Files may store narrower types.
using Vec = std::vector<double>;

// Dense row-major matrix. Prompt representations are D x L (one context
// vector per column).
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // rows * cols, row-major

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    Vec col(std::size_t c) const {
        Vec out(rows);
        for (std::size_t r = 0; r < rows; ++r) out[r] = at(r, c);
        return out;
    }

    void set_col(std::size_t c, const Vec& v) {
        for (std::size_t r = 0; r < rows; ++r) at(r, c) = v[r];
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// L2-normalize in place; a zero (or denormal-tiny) vector is not normalizable.
inline void normalize(Vec& v) {
    double n = norm2(v);
    if (!(n > 1e-300)) throw_input("cannot normalize a zero vector");
    for (double& x : v) x /= n;
}

inline Vec normalized(Vec v) {
    normalize(v);
    return v;
}

// y = A * x for row-major A.
inline Vec matvec(const Mat& a, std::span<const double> x) {
    Vec y(a.rows, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (std::size_t c = 0; c < a.cols; ++c) s += a.at(r, c) * x[c];
        y[r] = s;
    }
    return y;
}

// y = A^T * x for row-major A.
inline Vec matvec_transposed(const Mat& a, std::span<const double> x) {
    Vec y(a.cols, 0.0);
    for (std::size_t r = 0; r < a.rows; ++r) {
        double xr = x[r];
        for (std::size_t c = 0; c < a.cols; ++c) y[c] += a.at(r, c) * xr;
    }
    return y;
}

// Numerically stable softmax (max-shifted).
inline Vec softmax(std::span<const double> logits) {
    if (logits.empty()) throw_config("softmax over an empty logit vector");
    double m = logits[0];
    for (double v : logits) m = std::max(m, v);
    Vec out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (double& v : out) v /= z;
    return out;
}

} // namespace upl
