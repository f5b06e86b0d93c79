#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "charlab/errors.hpp"

namespace charlab {

/// Dense row-major matrix. Dimensions here are tiny (mechanics problems with
/// a handful of degrees of freedom), so everything below is plain pivoted
/// Gaussian elimination.
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline double norm_inf(const Mat& m) {
    double best = 0.0;
    for (int r = 0; r < m.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < m.cols; ++c) s += std::abs(m(r, c));
        best = std::max(best, s);
    }
    return best;
}

namespace detail {

/// In-place LU with partial pivoting on an augmented system; returns false
/// on a (numerically) zero pivot.
inline bool eliminate(Mat& m, int n) {
    for (int k = 0; k < n; ++k) {
        int piv = k;
        for (int r = k + 1; r < n; ++r)
            if (std::abs(m(r, k)) > std::abs(m(piv, k))) piv = r;
        if (m(piv, k) == 0.0) return false;
        if (piv != k)
            for (int c = 0; c < m.cols; ++c) std::swap(m(k, c), m(piv, c));
        for (int r = k + 1; r < n; ++r) {
            double f = m(r, k) / m(k, k);
            m(r, k) = 0.0;
            for (int c = k + 1; c < m.cols; ++c) m(r, c) -= f * m(k, c);
        }
    }
    return true;
}

}  // namespace detail

/// Solve A x = b. Throws SingularHessianError on a zero pivot; callers that
/// need a softer failure should catch it.
inline std::vector<double> solve(const Mat& A, const std::vector<double>& b) {
    int n = A.rows;
    Mat m(n, n + 1);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) m(r, c) = A(r, c);
        m(r, n) = b[static_cast<std::size_t>(r)];
    }
    if (!detail::eliminate(m, n)) throw SingularHessianError("singular matrix in linear solve");
    std::vector<double> x(static_cast<std::size_t>(n), 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double s = m(r, n);
        for (int c = r + 1; c < n; ++c) s -= m(r, c) * x[static_cast<std::size_t>(c)];
        x[static_cast<std::size_t>(r)] = s / m(r, r);
    }
    return x;
}

inline Mat inverse(const Mat& A) {
    int n = A.rows;
    Mat m(n, 2 * n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) m(r, c) = A(r, c);
        m(r, n + r) = 1.0;
    }
    if (!detail::eliminate(m, n)) throw SingularHessianError("singular matrix in inverse");
    Mat inv(n, n);
    for (int col = 0; col < n; ++col) {
        for (int r = n - 1; r >= 0; --r) {
            double s = m(r, n + col);
            for (int c = r + 1; c < n; ++c) s -= m(r, c) * inv(c, col);
            inv(r, col) = s / m(r, r);
        }
    }
    return inv;
}

/// Infinity-norm condition estimate; +inf for an exactly singular matrix.
inline double cond_inf(const Mat& A) {
    try {
        Mat inv = inverse(A);
        return norm_inf(A) * norm_inf(inv);
    } catch (const SingularHessianError&) {
        return std::numeric_limits<double>::infinity();
    }
}

}  // namespace charlab
