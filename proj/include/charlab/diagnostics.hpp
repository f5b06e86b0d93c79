#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "charlab/characteristics.hpp"
#include "charlab/errors.hpp"
#include "charlab/forms.hpp"
#include "charlab/types.hpp"

namespace charlab {

/**
 * Scalar and/or covector field sampled on a tensor grid. Values are stored
 * row-major with the last axis fastest; p holds dim components per node.
 */
struct GridField {
    int dim = 0;
    std::vector<double> lo, hi;
    std::vector<int> count;
    std::vector<double> u;  // nodes() values, optional
    std::vector<double> p;  // nodes() * dim values, optional

    bool has_u() const { return !u.empty(); }
    bool has_p() const { return !p.empty(); }

    std::size_t nodes() const {
        std::size_t total = 1;
        for (int c : count) total *= static_cast<std::size_t>(c);
        return total;
    }

    double spacing(int axis) const {
        return (hi[static_cast<std::size_t>(axis)] - lo[static_cast<std::size_t>(axis)]) /
               (count[static_cast<std::size_t>(axis)] - 1);
    }

    double coord(int axis, int index) const {
        return lo[static_cast<std::size_t>(axis)] + spacing(axis) * index;
    }

    std::size_t flat(const std::vector<int>& idx) const {
        std::size_t f = 0;
        for (int a = 0; a < dim; ++a) f = f * static_cast<std::size_t>(count[static_cast<std::size_t>(a)]) + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
        return f;
    }

    /// Iterate all multi-indices in row-major order.
    template <class Fn>
    void for_each(Fn&& fn) const {
        std::vector<int> idx(static_cast<std::size_t>(dim), 0);
        for (;;) {
            fn(idx);
            int a = dim - 1;
            for (; a >= 0; --a) {
                if (++idx[static_cast<std::size_t>(a)] < count[static_cast<std::size_t>(a)]) break;
                idx[static_cast<std::size_t>(a)] = 0;
            }
            if (a < 0) return;
        }
    }

    /// Sample expression fields onto the grid: u0 (vars x1..xn) and/or p
    /// components (vars x1..xn).
    static GridField sample(int dim, std::vector<double> lo, std::vector<double> hi,
                            std::vector<int> count, const Expression* u_expr,
                            std::span<const Expression> p_expr) {
        GridField g;
        g.dim = dim;
        g.lo = std::move(lo);
        g.hi = std::move(hi);
        g.count = std::move(count);
        for (int c : g.count)
            if (c < 2) throw GridTooSmallError("grid needs at least 2 nodes per axis");

        auto xs = detail::numbered_vars("x", dim);
        std::vector<double> point(static_cast<std::size_t>(dim));
        if (u_expr) {
            auto slots = detail::map_alphabet(*u_expr, xs, "grid u");
            std::vector<double> vals(u_expr->free_vars().size(), 0.0);
            g.u.reserve(g.nodes());
            g.for_each([&](const std::vector<int>& idx) {
                for (int a = 0; a < dim; ++a)
                    if (slots[static_cast<std::size_t>(a)] >= 0)
                        vals[static_cast<std::size_t>(slots[static_cast<std::size_t>(a)])] = g.coord(a, idx[static_cast<std::size_t>(a)]);
                g.u.push_back(u_expr->value(vals));
            });
        }
        if (!p_expr.empty()) {
            if (static_cast<int>(p_expr.size()) != dim)
                throw DimensionMismatchError("grid p needs one component per axis");
            std::vector<std::vector<int>> slots;
            for (const auto& e : p_expr) slots.push_back(detail::map_alphabet(e, xs, "grid p"));
            g.p.reserve(g.nodes() * static_cast<std::size_t>(dim));
            std::vector<double> vals;
            g.for_each([&](const std::vector<int>& idx) {
                for (int c = 0; c < dim; ++c) {
                    const Expression& e = p_expr[static_cast<std::size_t>(c)];
                    vals.assign(e.free_vars().size(), 0.0);
                    for (int a = 0; a < dim; ++a)
                        if (slots[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)] >= 0)
                            vals[static_cast<std::size_t>(slots[static_cast<std::size_t>(c)][static_cast<std::size_t>(a)])] =
                                g.coord(a, idx[static_cast<std::size_t>(a)]);
                    g.p.push_back(e.value(vals));
                }
            });
        }
        return g;
    }
};

/// A flagged derivative discontinuity: slab `index` along `axis` where the
/// adjacent-node p difference spikes above 10x the median.
struct KinkFlag {
    int axis = 0;
    int index = 0;  // between slab index and index+1
};

/**
 * Field-level nonidentity measurement: the grid of commutator norms |K| at
 * interior nodes (central differences, boundary excluded), its summary, and
 * kink flags from the adjacent-difference heuristic.
 */
struct NonidentityReport {
    int dim = 0;
    std::vector<int> interior_count;
    std::vector<double> k_norm;  // interior nodes, row-major
    double max_norm = 0.0;
    double mean_norm = 0.0;
    std::vector<double> max_location;
    std::vector<KinkFlag> kinks;
};

/**
 * Central-difference commutator K_ij = dp_j/dx^i - dp_i/dx^j at every
 * interior grid node. One-sided stencils are not used: the report covers
 * the interior only, so accuracy is uniformly O(h^2).
 */
inline NonidentityReport commutator_field(const GridField& g) {
    if (!g.has_p()) throw Error("commutator_field needs p components on the grid");
    for (int c : g.count)
        if (c < 3) throw GridTooSmallError("central differences need at least 3 nodes per axis");

    NonidentityReport rep;
    rep.dim = g.dim;
    rep.interior_count.resize(static_cast<std::size_t>(g.dim));
    for (int a = 0; a < g.dim; ++a)
        rep.interior_count[static_cast<std::size_t>(a)] = g.count[static_cast<std::size_t>(a)] - 2;

    auto p_comp = [&](const std::vector<int>& idx, int comp) {
        return g.p[g.flat(idx) * static_cast<std::size_t>(g.dim) + static_cast<std::size_t>(comp)];
    };

    double sum = 0.0;
    std::vector<int> idx(static_cast<std::size_t>(g.dim));
    GridField interior_iter;  // iterate interior multi-indices
    interior_iter.dim = g.dim;
    interior_iter.count = rep.interior_count;
    interior_iter.lo.assign(static_cast<std::size_t>(g.dim), 0.0);
    interior_iter.hi.assign(static_cast<std::size_t>(g.dim), 1.0);

    rep.max_location.assign(static_cast<std::size_t>(g.dim), 0.0);
    interior_iter.for_each([&](const std::vector<int>& inner) {
        for (int a = 0; a < g.dim; ++a) idx[static_cast<std::size_t>(a)] = inner[static_cast<std::size_t>(a)] + 1;
        double norm2 = 0.0;
        for (int i = 0; i < g.dim; ++i)
            for (int j = i + 1; j < g.dim; ++j) {
                std::vector<int> shifted = idx;
                shifted[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i)] + 1;
                double dpj = p_comp(shifted, j);
                shifted[static_cast<std::size_t>(i)] = idx[static_cast<std::size_t>(i)] - 1;
                dpj = (dpj - p_comp(shifted, j)) / (2.0 * g.spacing(i));
                shifted = idx;
                shifted[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j)] + 1;
                double dpi = p_comp(shifted, i);
                shifted[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j)] - 1;
                dpi = (dpi - p_comp(shifted, i)) / (2.0 * g.spacing(j));
                double kij = dpj - dpi;
                norm2 += kij * kij;
            }
        double norm = std::sqrt(norm2);
        rep.k_norm.push_back(norm);
        sum += norm;
        if (norm > rep.max_norm) {
            rep.max_norm = norm;
            for (int a = 0; a < g.dim; ++a)
                rep.max_location[static_cast<std::size_t>(a)] = g.coord(a, idx[static_cast<std::size_t>(a)]);
        }
    });
    rep.mean_norm = rep.k_norm.empty() ? 0.0 : sum / static_cast<double>(rep.k_norm.size());

    // Kink heuristic: slab pairs whose worst adjacent-node p difference
    // exceeds 10x the median slab difference along the same axis.
    for (int a = 0; a < g.dim; ++a) {
        int slabs = g.count[static_cast<std::size_t>(a)] - 1;
        if (slabs < 2) continue;
        std::vector<double> slab_diff(static_cast<std::size_t>(slabs), 0.0);
        g.for_each([&](const std::vector<int>& node) {
            if (node[static_cast<std::size_t>(a)] + 1 >= g.count[static_cast<std::size_t>(a)]) return;
            std::vector<int> next = node;
            ++next[static_cast<std::size_t>(a)];
            double d = 0.0;
            for (int c = 0; c < g.dim; ++c)
                d = std::max(d, std::abs(p_comp(next, c) - p_comp(node, c)));
            auto s = static_cast<std::size_t>(node[static_cast<std::size_t>(a)]);
            slab_diff[s] = std::max(slab_diff[s], d);
        });
        std::vector<double> sorted = slab_diff;
        std::sort(sorted.begin(), sorted.end());
        double median = sorted[sorted.size() / 2];
        if (median <= 0.0) continue;
        for (int s = 0; s < slabs; ++s)
            if (slab_diff[static_cast<std::size_t>(s)] > 10.0 * median) rep.kinks.push_back({a, s});
    }
    return rep;
}

/// Numerical gradient of a sampled scalar field: central differences,
/// result restricted to the interior of the grid.
inline GridField differentiate_scalar_field(const GridField& g) {
    if (!g.has_u()) throw Error("differentiate_scalar_field needs u on the grid");
    for (int c : g.count)
        if (c < 3) throw GridTooSmallError("central differences need at least 3 nodes per axis");

    GridField out;
    out.dim = g.dim;
    out.lo.resize(static_cast<std::size_t>(g.dim));
    out.hi.resize(static_cast<std::size_t>(g.dim));
    out.count.resize(static_cast<std::size_t>(g.dim));
    for (int a = 0; a < g.dim; ++a) {
        out.count[static_cast<std::size_t>(a)] = g.count[static_cast<std::size_t>(a)] - 2;
        out.lo[static_cast<std::size_t>(a)] = g.coord(a, 1);
        out.hi[static_cast<std::size_t>(a)] = g.coord(a, g.count[static_cast<std::size_t>(a)] - 2);
    }

    out.u.reserve(out.nodes());
    out.p.reserve(out.nodes() * static_cast<std::size_t>(g.dim));
    std::vector<int> idx(static_cast<std::size_t>(g.dim));
    out.for_each([&](const std::vector<int>& inner) {
        for (int a = 0; a < g.dim; ++a) idx[static_cast<std::size_t>(a)] = inner[static_cast<std::size_t>(a)] + 1;
        out.u.push_back(g.u[g.flat(idx)]);
        for (int a = 0; a < g.dim; ++a) {
            std::vector<int> shifted = idx;
            shifted[static_cast<std::size_t>(a)] = idx[static_cast<std::size_t>(a)] + 1;
            double up = g.u[g.flat(shifted)];
            shifted[static_cast<std::size_t>(a)] = idx[static_cast<std::size_t>(a)] - 1;
            double um = g.u[g.flat(shifted)];
            out.p.push_back((up - um) / (2.0 * g.spacing(a)));
        }
    });
    return out;
}

/// Side-by-side record of on-structure closure versus off-structure
/// nonidentity: per-strip closure residuals next to the grid commutator
/// summary.
struct OnOffReport {
    bool family_absent = false;
    std::vector<double> strip_closure;
    NonidentityReport grid;
};

inline OnOffReport compare_on_off(const StripFamily* family, const GridField& g) {
    OnOffReport rep;
    if (!family || family->strips.empty()) {
        rep.family_absent = true;
    } else {
        if (family->problem.n != g.dim)
            throw DimensionMismatchError("strip family and grid have different space dimensions");
        rep.strip_closure.reserve(family->strips.size());
        for (const auto& strip : family->strips)
            rep.strip_closure.push_back(closure_residual(to_curve_sample(family->problem, strip)));
    }
    rep.grid = commutator_field(g);
    return rep;
}

}  // namespace charlab
