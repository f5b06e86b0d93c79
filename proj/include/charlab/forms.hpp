#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "charlab/errors.hpp"
#include "charlab/expression.hpp"
#include "charlab/types.hpp"

namespace charlab {

/// Antisymmetric commutator matrix K_ij = dp_j/dx^i - dp_i/dx^j of the
/// 1-form p_i dx^i. Antisymmetry is exact by construction: the upper
/// triangle is computed and mirrored with a sign flip.
struct CommutatorMatrix {
    int n = 0;
    std::vector<double> k;  // n*n row-major

    explicit CommutatorMatrix(int dim) : n(dim), k(static_cast<std::size_t>(dim) * dim, 0.0) {}

    double operator()(int i, int j) const { return k[static_cast<std::size_t>(i) * n + j]; }

    void set_upper(int i, int j, double v) {
        k[static_cast<std::size_t>(i) * n + j] = v;
        k[static_cast<std::size_t>(j) * n + i] = -v;
    }

    /// Magnitude of the 2-form: sqrt of the sum of squared independent
    /// components K_ij, i < j. For n = 2 this is |K_12|.
    double norm() const {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) s += (*this)(i, j) * (*this)(i, j);
        return std::sqrt(s);
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : k) m = std::max(m, std::abs(v));
        return m;
    }
};

enum class DerivMode { exact, fd };

namespace detail {

/// Fail unless every free variable of e is in the allowed list; returns the
/// expression slot of each allowed name (-1 when unused).
inline std::vector<int> map_alphabet(const Expression& e, std::span<const std::string> allowed,
                                     const std::string& what) {
    for (const auto& v : e.free_vars()) {
        bool ok = false;
        for (const auto& a : allowed)
            if (a == v) ok = true;
        if (!ok) throw ValidationError(what, "may not depend on variable '" + v + "'");
    }
    std::vector<int> slots(allowed.size());
    for (std::size_t i = 0; i < allowed.size(); ++i) slots[i] = e.var_slot(allowed[i]);
    return slots;
}

inline std::vector<std::string> numbered_vars(const std::string& prefix, int n) {
    std::vector<std::string> names;
    names.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i) names.push_back(prefix + std::to_string(i));
    return names;
}

}  // namespace detail

/**
 * Commutator of a candidate derivative field p_i(x) at one point. In exact
 * mode the partials come from dual-number differentiation; in fd mode from
 * central differences with step h (h = 0 selects the default
 * 1e-5 * max(1, |x_i|) per coordinate).
 */
inline CommutatorMatrix commutator_of_field(std::span<const Expression> p_field,
                                            std::span<const double> point, DerivMode mode,
                                            double h = 0.0) {
    int n = static_cast<int>(p_field.size());
    if (static_cast<int>(point.size()) != n)
        throw DimensionMismatchError("field and point dimensions differ");
    auto xs = detail::numbered_vars("x", n);

    std::vector<std::vector<int>> slots;
    std::vector<std::vector<double>> values;
    slots.reserve(p_field.size());
    values.reserve(p_field.size());
    for (const auto& comp : p_field) {
        slots.push_back(detail::map_alphabet(comp, xs, "p field component"));
        std::vector<double> vals(comp.free_vars().size(), 0.0);
        for (int i = 0; i < n; ++i)
            if (slots.back()[static_cast<std::size_t>(i)] >= 0)
                vals[static_cast<std::size_t>(slots.back()[static_cast<std::size_t>(i)])] = point[static_cast<std::size_t>(i)];
        values.push_back(std::move(vals));
    }

    // d p_c / d x_i
    auto partial = [&](int c, int i) -> double {
        const Expression& e = p_field[static_cast<std::size_t>(c)];
        int slot = slots[static_cast<std::size_t>(c)][static_cast<std::size_t>(i)];
        if (mode == DerivMode::exact) {
            if (slot < 0) return 0.0;
            return e.derivative(values[static_cast<std::size_t>(c)], slot);
        }
        double step = h > 0.0 ? h : 1e-5 * std::max(1.0, std::abs(point[static_cast<std::size_t>(i)]));
        if (slot < 0) return 0.0;
        std::vector<double> vals = values[static_cast<std::size_t>(c)];
        vals[static_cast<std::size_t>(slot)] = point[static_cast<std::size_t>(i)] + step;
        double fp = e.value(vals);
        vals[static_cast<std::size_t>(slot)] = point[static_cast<std::size_t>(i)] - step;
        double fm = e.value(vals);
        return (fp - fm) / (2.0 * step);
    };

    CommutatorMatrix kmat(n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) kmat.set_upper(i, j, partial(j, i) - partial(i, j));
    return kmat;
}

namespace detail {

inline void require_curve(const CurveSample& curve) {
    if (curve.size() < 2) throw TooFewSamplesError("curve needs at least two samples");
    for (std::size_t k = 1; k < curve.size(); ++k)
        if (!(curve.param[k] > curve.param[k - 1]))
            throw Error("curve parameter must be strictly increasing");
}

}  // namespace detail

/**
 * Per-step defect of du = p_i dx^i along a discrete curve:
 * max over steps of |du - midpoint(p) . dx| / dparam. Vanishing residual is
 * the computable meaning of "the form is a differential on this curve".
 */
inline double closure_residual(const CurveSample& curve) {
    detail::require_curve(curve);
    double worst = 0.0;
    for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
        auto x0 = curve.x_at(k), x1 = curve.x_at(k + 1);
        auto p0 = curve.p_at(k), p1 = curve.p_at(k + 1);
        double form = 0.0;
        for (int j = 0; j < curve.dim; ++j)
            form += 0.5 * (p0[static_cast<std::size_t>(j)] + p1[static_cast<std::size_t>(j)]) *
                    (x1[static_cast<std::size_t>(j)] - x0[static_cast<std::size_t>(j)]);
        double ds = curve.param[k + 1] - curve.param[k];
        worst = std::max(worst, std::abs((curve.u[k + 1] - curve.u[k]) - form) / ds);
    }
    return worst;
}

/// Reconstruct u by integrating the form along the curve (trapezoid):
/// u_hat(s_k) = u(s_0) + sum of midpoint(p) . dx. The caller compares the
/// result with the stored u sequence.
inline std::vector<double> interior_differential(const CurveSample& curve) {
    detail::require_curve(curve);
    std::vector<double> uhat(curve.size());
    uhat[0] = curve.u[0];
    for (std::size_t k = 0; k + 1 < curve.size(); ++k) {
        auto x0 = curve.x_at(k), x1 = curve.x_at(k + 1);
        auto p0 = curve.p_at(k), p1 = curve.p_at(k + 1);
        double form = 0.0;
        for (int j = 0; j < curve.dim; ++j)
            form += 0.5 * (p0[static_cast<std::size_t>(j)] + p1[static_cast<std::size_t>(j)]) *
                    (x1[static_cast<std::size_t>(j)] - x0[static_cast<std::size_t>(j)]);
        uhat[k + 1] = uhat[k] + form;
    }
    return uhat;
}

/**
 * Loop integral of the Poincare-Cartan form, sum of p . dq - H dt around a
 * closed loop. H may be null, in which case only p . dq is integrated
 * (fixed-time loops lose the H dt term anyway).
 *
 * Quadrature: cyclic fourth-order differences for the coordinate increments
 * when the loop has at least five points, cyclic midpoint rule otherwise.
 * The fourth-order rule is needed because the midpoint rule computes the
 * inscribed-polygon area, whose deficit (pi h^2 / 6 for the unit circle)
 * dominates the transport drift this integral is used to measure. Both
 * rules are exactly antisymmetric under orientation reversal and invariant
 * under cyclic relabeling.
 */
inline double loop_integral(const PhaseLoop& loop, const Expression* hamiltonian = nullptr) {
    const auto& pts = loop.pts;
    const std::size_t N = pts.size();
    const int n = loop.dim;
    if (N == 1) return 0.0;

    std::vector<double> hval;
    std::vector<int> st;
    std::vector<int> sq, sp;
    if (hamiltonian) {
        auto qs = detail::numbered_vars("q", n);
        auto ps = detail::numbered_vars("p", n);
        std::vector<std::string> allowed;
        allowed.push_back("t");
        allowed.insert(allowed.end(), qs.begin(), qs.end());
        allowed.insert(allowed.end(), ps.begin(), ps.end());
        auto slots = detail::map_alphabet(*hamiltonian, allowed, "H");
        std::vector<double> vals(hamiltonian->free_vars().size(), 0.0);
        hval.resize(N);
        for (std::size_t k = 0; k < N; ++k) {
            if (slots[0] >= 0) vals[static_cast<std::size_t>(slots[0])] = pts[k].t;
            for (int j = 0; j < n; ++j) {
                if (slots[static_cast<std::size_t>(1 + j)] >= 0)
                    vals[static_cast<std::size_t>(slots[static_cast<std::size_t>(1 + j)])] = pts[k].q[static_cast<std::size_t>(j)];
                if (slots[static_cast<std::size_t>(1 + n + j)] >= 0)
                    vals[static_cast<std::size_t>(slots[static_cast<std::size_t>(1 + n + j)])] = pts[k].p[static_cast<std::size_t>(j)];
            }
            hval[k] = hamiltonian->value(vals);
        }
    }

    double total = 0.0;
    if (N >= 5) {
        auto at = [&](std::size_t k) -> const PhasePoint& { return pts[k % N]; };
        for (std::size_t k = 0; k < N; ++k) {
            const PhasePoint& c = pts[k];
            const PhasePoint& m1 = at(k + N - 1);
            const PhasePoint& p1 = at(k + 1);
            const PhasePoint& m2 = at(k + N - 2);
            const PhasePoint& p2 = at(k + 2);
            for (int j = 0; j < n; ++j) {
                double dq = (8.0 * (p1.q[static_cast<std::size_t>(j)] - m1.q[static_cast<std::size_t>(j)]) -
                             (p2.q[static_cast<std::size_t>(j)] - m2.q[static_cast<std::size_t>(j)])) /
                            12.0;
                total += c.p[static_cast<std::size_t>(j)] * dq;
            }
            if (hamiltonian) {
                double dt = (8.0 * (p1.t - m1.t) - (p2.t - m2.t)) / 12.0;
                total -= hval[k] * dt;
            }
        }
    } else {
        for (std::size_t k = 0; k < N; ++k) {
            const PhasePoint& a = pts[k];
            const PhasePoint& b = pts[(k + 1) % N];
            for (int j = 0; j < n; ++j)
                total += 0.5 * (a.p[static_cast<std::size_t>(j)] + b.p[static_cast<std::size_t>(j)]) *
                         (b.q[static_cast<std::size_t>(j)] - a.q[static_cast<std::size_t>(j)]);
            if (hamiltonian) total -= 0.5 * (hval[k] + hval[(k + 1) % N]) * (b.t - a.t);
        }
    }
    return total;
}

}  // namespace charlab
