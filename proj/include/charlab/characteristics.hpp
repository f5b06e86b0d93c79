#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "charlab/errors.hpp"
#include "charlab/expression.hpp"
#include "charlab/forms.hpp"
#include "charlab/parallel.hpp"
#include "charlab/stepping.hpp"
#include "charlab/types.hpp"

namespace charlab {

enum class PdeKind { general, evolution };

/**
 * A first-order PDE in one of two shapes:
 *   general    F(x^i, u, p_i) = 0            variables x1..xn, u, p1..pn
 *   evolution  u_t + E(t, x^j, p_j) = 0      variables t, x1..xn, p1..pn
 */
struct PdeProblem {
    PdeKind kind = PdeKind::general;
    int n = 0;
    Expression f;
    std::vector<int> sx, sp;  // expression slots per coordinate (-1 if unused)
    int su = -1;
    int st = -1;

    static PdeProblem general(int n, Expression F) {
        PdeProblem prob;
        prob.kind = PdeKind::general;
        prob.n = n;
        auto xs = detail::numbered_vars("x", n);
        auto ps = detail::numbered_vars("p", n);
        std::vector<std::string> allowed = xs;
        allowed.push_back("u");
        allowed.insert(allowed.end(), ps.begin(), ps.end());
        auto slots = detail::map_alphabet(F, allowed, "F");
        prob.sx.assign(slots.begin(), slots.begin() + n);
        prob.su = slots[static_cast<std::size_t>(n)];
        prob.sp.assign(slots.begin() + n + 1, slots.end());
        prob.f = std::move(F);
        return prob;
    }

    static PdeProblem evolution(int n, Expression E) {
        PdeProblem prob;
        prob.kind = PdeKind::evolution;
        prob.n = n;
        auto xs = detail::numbered_vars("x", n);
        auto ps = detail::numbered_vars("p", n);
        std::vector<std::string> allowed{"t"};
        allowed.insert(allowed.end(), xs.begin(), xs.end());
        allowed.insert(allowed.end(), ps.begin(), ps.end());
        auto slots = detail::map_alphabet(E, allowed, "E");
        prob.st = slots[0];
        prob.sx.assign(slots.begin() + 1, slots.begin() + 1 + n);
        prob.sp.assign(slots.begin() + 1 + n, slots.end());
        prob.f = std::move(E);
        return prob;
    }

    /// Bind (t, x, u, p) into a slot value buffer for evaluation.
    void bind(std::vector<double>& vals, double t, std::span<const double> x, double u,
              std::span<const double> p) const {
        vals.assign(f.free_vars().size(), 0.0);
        if (st >= 0) vals[static_cast<std::size_t>(st)] = t;
        if (su >= 0) vals[static_cast<std::size_t>(su)] = u;
        for (int i = 0; i < n; ++i) {
            if (sx[static_cast<std::size_t>(i)] >= 0) vals[static_cast<std::size_t>(sx[static_cast<std::size_t>(i)])] = x[static_cast<std::size_t>(i)];
            if (sp[static_cast<std::size_t>(i)] >= 0) vals[static_cast<std::size_t>(sp[static_cast<std::size_t>(i)])] = p[static_cast<std::size_t>(i)];
        }
    }

    double residual(std::span<const double> x, double u, std::span<const double> p) const {
        std::vector<double> vals;
        bind(vals, 0.0, x, u, p);
        return f.value(vals);
    }
};

/// Rates of change of a jet along the characteristic parameter.
struct JetRate {
    std::vector<double> dx;
    double du = 0.0;
    std::vector<double> dp;
};

/**
 * Charpit system of F(x, u, p) = 0 with the standard parameterization:
 *   dx_i/ds = dF/dp_i
 *   dp_i/ds = -(dF/dx^i + p_i dF/du)
 *   du/ds   = sum p_i dF/dp_i
 * The du equation closes the system so that du = p . dx holds along the
 * strip by construction.
 */
inline JetRate charpit_rhs(const PdeProblem& prob, const JetPoint& jet) {
    JetRate rate;
    rate.dx.resize(static_cast<std::size_t>(prob.n));
    rate.dp.resize(static_cast<std::size_t>(prob.n));
    std::vector<double> vals;
    prob.bind(vals, 0.0, jet.x, jet.u, jet.p);
    double fu = prob.su >= 0 ? prob.f.derivative(vals, prob.su) : 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(prob.n); ++i) {
        double fp = prob.sp[i] >= 0 ? prob.f.derivative(vals, prob.sp[i]) : 0.0;
        double fx = prob.sx[i] >= 0 ? prob.f.derivative(vals, prob.sx[i]) : 0.0;
        rate.dx[i] = fp;
        rate.dp[i] = -(fx + jet.p[i] * fu);
        rate.du += jet.p[i] * fp;
    }
    return rate;
}

/**
 * Characteristic system of u_t + E(t, x, p) = 0:
 *   dx_j/dt = dE/dp_j
 *   dp_j/dt = -dE/dx^j
 *   du/dt   = sum p_j dE/dp_j - E
 * so u accumulates consistently with u_t = -E and du = u_t dt + p . dx.
 */
inline JetRate evolution_rhs(const PdeProblem& prob, double t, std::span<const double> x,
                             std::span<const double> p) {
    JetRate rate;
    rate.dx.resize(static_cast<std::size_t>(prob.n));
    rate.dp.resize(static_cast<std::size_t>(prob.n));
    std::vector<double> vals;
    prob.bind(vals, t, x, 0.0, p);
    for (std::size_t i = 0; i < static_cast<std::size_t>(prob.n); ++i) {
        double ep = prob.sp[i] >= 0 ? prob.f.derivative(vals, prob.sp[i]) : 0.0;
        double ex = prob.sx[i] >= 0 ? prob.f.derivative(vals, prob.sx[i]) : 0.0;
        rate.dx[i] = ep;
        rate.dp[i] = -ex;
        rate.du += p[i] * ep;
    }
    rate.du -= prob.f.value(vals);
    return rate;
}

/// Why a strip ended before its requested parameter length.
enum class StripTruncation { none, residual_exceeded, domain_error };

/**
 * One discretized characteristic strip. For general-kind problems every
 * retained sample satisfies |F| <= 1e-6 (F is a first integral of the flow;
 * the residual column tracks how well the integrator preserves it).
 */
struct CharacteristicStrip {
    int n = 0;
    PdeKind kind = PdeKind::general;
    double dt = 0.0;
    std::vector<double> param;  // s (general) or t (evolution)
    std::vector<double> x;      // size() * n
    std::vector<double> u;
    std::vector<double> p;        // size() * n
    std::vector<double> f_resid;  // |F| per sample, general kind only
    StripTruncation truncated = StripTruncation::none;
    std::string truncation_detail;

    std::size_t size() const { return param.size(); }

    std::span<const double> x_at(std::size_t k) const {
        return {x.data() + k * static_cast<std::size_t>(n), static_cast<std::size_t>(n)};
    }
    std::span<const double> p_at(std::size_t k) const {
        return {p.data() + k * static_cast<std::size_t>(n), static_cast<std::size_t>(n)};
    }

    double max_residual() const {
        double m = 0.0;
        for (double r : f_resid) m = std::max(m, r);
        return m;
    }
};

namespace detail {

// Fixed-step RK4 over flat state [x(0..n-1), p(n..2n-1), u(2n)].
class StripIntegrator {
public:
    StripIntegrator(const PdeProblem& prob) : prob_(prob), n_(static_cast<std::size_t>(prob.n)) {}

    void rhs(double t, std::span<const double> state, std::span<double> deriv) {
        auto x = state.subspan(0, n_);
        auto p = state.subspan(n_, n_);
        prob_.bind(vals_, t, x, state[2 * n_], p);
        double du = 0.0;
        if (prob_.kind == PdeKind::general) {
            double fu = prob_.su >= 0 ? prob_.f.derivative(vals_, prob_.su) : 0.0;
            for (std::size_t i = 0; i < n_; ++i) {
                double fp = prob_.sp[i] >= 0 ? prob_.f.derivative(vals_, prob_.sp[i]) : 0.0;
                double fx = prob_.sx[i] >= 0 ? prob_.f.derivative(vals_, prob_.sx[i]) : 0.0;
                deriv[i] = fp;
                deriv[n_ + i] = -(fx + p[i] * fu);
                du += p[i] * fp;
            }
        } else {
            for (std::size_t i = 0; i < n_; ++i) {
                double ep = prob_.sp[i] >= 0 ? prob_.f.derivative(vals_, prob_.sp[i]) : 0.0;
                double ex = prob_.sx[i] >= 0 ? prob_.f.derivative(vals_, prob_.sx[i]) : 0.0;
                deriv[i] = ep;
                deriv[n_ + i] = -ex;
                du += p[i] * ep;
            }
            du -= prob_.f.value(vals_);
        }
        deriv[2 * n_] = du;
    }

    void step(double t, double h, std::vector<double>& state) {
        std::size_t m = state.size();
        k1_.resize(m); k2_.resize(m); k3_.resize(m); k4_.resize(m); tmp_.resize(m);
        rhs(t, state, k1_);
        for (std::size_t i = 0; i < m; ++i) tmp_[i] = state[i] + 0.5 * h * k1_[i];
        rhs(t + 0.5 * h, tmp_, k2_);
        for (std::size_t i = 0; i < m; ++i) tmp_[i] = state[i] + 0.5 * h * k2_[i];
        rhs(t + 0.5 * h, tmp_, k3_);
        for (std::size_t i = 0; i < m; ++i) tmp_[i] = state[i] + h * k3_[i];
        rhs(t + h, tmp_, k4_);
        for (std::size_t i = 0; i < m; ++i)
            state[i] += h / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }

    double residual(double t, std::span<const double> state) {
        prob_.bind(vals_, t, state.subspan(0, n_), state[2 * n_], state.subspan(n_, n_));
        return prob_.f.value(vals_);
    }

private:
    const PdeProblem& prob_;
    std::size_t n_;
    std::vector<double> vals_, k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace detail

inline constexpr double kOnManifoldTol = 1e-10;
inline constexpr double kStripResidualLimit = 1e-6;

/**
 * Integrate one characteristic strip with fixed-step RK4. The parameter runs
 * from t0 (evolution time, or 0 for the Charpit parameter) over the given
 * length. General-kind seeds must lie on the solution manifold
 * (|F| <= 1e-10). The strip is truncated, not discarded, when |F| exceeds
 * 1e-6 or evaluation leaves a function domain.
 */
inline CharacteristicStrip integrate_strip(const PdeProblem& prob, const JetPoint& seed, double length,
                                           double dt, double t0 = 0.0) {
    if (seed.dim() != prob.n || static_cast<int>(seed.p.size()) != prob.n)
        throw DimensionMismatchError("seed jet dimension does not match the problem");
    if (!(dt > 0.0)) throw Error("dt must be positive");

    CharacteristicStrip strip;
    strip.n = prob.n;
    strip.kind = prob.kind;
    strip.dt = dt;

    std::size_t n = static_cast<std::size_t>(prob.n);
    std::vector<double> state(2 * n + 1);
    for (std::size_t i = 0; i < n; ++i) {
        state[i] = seed.x[i];
        state[n + i] = seed.p[i];
    }
    state[2 * n] = seed.u;

    detail::StripIntegrator integ(prob);

    double r0 = 0.0;
    if (prob.kind == PdeKind::general) {
        r0 = integ.residual(t0, state);
        if (std::abs(r0) > kOnManifoldTol) throw InitialJetOffManifoldError(std::abs(r0));
    }

    auto append = [&](double param, const std::vector<double>& st, double resid) {
        strip.param.push_back(param);
        strip.x.insert(strip.x.end(), st.begin(), st.begin() + static_cast<std::ptrdiff_t>(n));
        strip.p.insert(strip.p.end(), st.begin() + static_cast<std::ptrdiff_t>(n),
                       st.begin() + static_cast<std::ptrdiff_t>(2 * n));
        strip.u.push_back(st[2 * n]);
        if (prob.kind == PdeKind::general) strip.f_resid.push_back(std::abs(resid));
    };

    append(t0, state, r0);

    double remainder = 0.0;
    std::size_t steps = detail::full_steps(length, dt, remainder);
    std::size_t total = steps + (remainder > 0.0 ? 1 : 0);

    for (std::size_t k = 0; k < total; ++k) {
        double h = k < steps ? dt : remainder;
        double t = t0 + static_cast<double>(k) * dt;
        double t_next = k + 1 < total ? t0 + static_cast<double>(k + 1) * dt : t0 + length;
        try {
            integ.step(t, h, state);
            double resid = prob.kind == PdeKind::general ? integ.residual(t_next, state) : 0.0;
            if (prob.kind == PdeKind::general && std::abs(resid) > kStripResidualLimit) {
                strip.truncated = StripTruncation::residual_exceeded;
                strip.truncation_detail = "|F| exceeded 1e-6";
                break;
            }
            append(t_next, state, resid);
        } catch (const DomainError& err) {
            strip.truncated = StripTruncation::domain_error;
            strip.truncation_detail = err.what();
            break;
        }
    }
    return strip;
}

/// Axis-aligned seed line: `count` points along coordinate `axis`
/// (0-based), the other coordinates taken from `origin`.
struct SeedGrid {
    int axis = 0;
    double lo = 0.0;
    double hi = 0.0;
    int count = 0;
    std::vector<double> origin;
};

/// Initial jets (x0, u0(x0), grad u0(x0)) from initial data u0, gradient by
/// dual-number differentiation.
inline std::vector<JetPoint> seed_from_initial_data(int n, const Expression& u0, const SeedGrid& grid) {
    auto xs = detail::numbered_vars("x", n);
    auto slots = detail::map_alphabet(u0, xs, "u0");
    if (grid.count < 1) throw EmptySeedsError("seed grid needs at least one point");
    if (grid.axis < 0 || grid.axis >= n) throw ValidationError("seeds.axis", "outside problem dimension");

    std::vector<JetPoint> seeds;
    seeds.reserve(static_cast<std::size_t>(grid.count));
    std::vector<double> vals(u0.free_vars().size(), 0.0);
    for (int k = 0; k < grid.count; ++k) {
        JetPoint jet;
        jet.x.assign(grid.origin.begin(), grid.origin.end());
        jet.x.resize(static_cast<std::size_t>(n), 0.0);
        double coord = grid.count == 1
                           ? grid.lo
                           : grid.lo + (grid.hi - grid.lo) * static_cast<double>(k) / (grid.count - 1);
        jet.x[static_cast<std::size_t>(grid.axis)] = coord;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
            if (slots[i] >= 0) vals[static_cast<std::size_t>(slots[i])] = jet.x[i];
        jet.u = u0.value(vals);
        jet.p.resize(static_cast<std::size_t>(n), 0.0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i)
            if (slots[i] >= 0) jet.p[i] = u0.derivative(vals, slots[i]);
        seeds.push_back(std::move(jet));
    }
    return seeds;
}

/**
 * A family of strips integrated from ordered seeds on a shared parameter
 * grid. Strips are integrated independently (parallelizable) and assembled
 * in seed order, so results do not depend on scheduling.
 */
struct StripFamily {
    PdeProblem problem;
    std::vector<JetPoint> seeds;
    int seed_axis = 0;
    double dt = 0.0;
    double t0 = 0.0;
    std::vector<double> grid;  // full shared parameter grid
    std::vector<CharacteristicStrip> strips;

    std::size_t alive_at(std::size_t time_index) const {
        std::size_t count = 0;
        for (const auto& s : strips)
            if (s.size() > time_index) ++count;
        return count;
    }
};

inline StripFamily integrate_family(const PdeProblem& prob, std::vector<JetPoint> seeds, double length,
                                    double dt, int seed_axis = 0, double t0 = 0.0) {
    if (seeds.empty()) throw EmptySeedsError("integrate_family needs at least one seed");
    for (const auto& s : seeds)
        if (s.dim() != prob.n) throw DimensionMismatchError("seed dimension does not match the problem");

    StripFamily family;
    family.problem = prob;
    family.seed_axis = seed_axis;
    family.dt = dt;
    family.t0 = t0;
    family.strips.resize(seeds.size());
    family.seeds = std::move(seeds);

    parallel_for(family.seeds.size(), [&](std::size_t i) {
        family.strips[i] = integrate_strip(prob, family.seeds[i], length, dt, t0);
    });

    std::size_t longest = 0;
    for (std::size_t i = 0; i < family.strips.size(); ++i)
        if (family.strips[i].size() > family.strips[longest].size()) longest = i;
    family.grid = family.strips[longest].param;
    return family;
}

/// Earliest crossing of adjacent characteristics, located by the discrete
/// Jacobian of the map seed -> position along the seed axis.
struct Crossing {
    double t = 0.0;  // parameter value at which the Jacobian first loses positivity
    double x = 0.0;  // position (seed-axis coordinate) of the pinching pair
    std::size_t strip_a = 0;
    std::size_t strip_b = 0;
};

namespace detail {

/// Minimum discrete Jacobian over adjacent alive strip pairs at one time
/// index; returns false when fewer than two strips are alive.
inline bool min_jacobian(const StripFamily& family, std::size_t ti, double& jmin, std::size_t& arg) {
    const std::size_t axis = static_cast<std::size_t>(family.seed_axis);
    bool found = false;
    for (std::size_t k = 0; k + 1 < family.strips.size(); ++k) {
        const auto& a = family.strips[k];
        const auto& b = family.strips[k + 1];
        if (a.size() <= ti || b.size() <= ti) continue;
        double dx0 = family.seeds[k + 1].x[axis] - family.seeds[k].x[axis];
        if (dx0 == 0.0) continue;
        double j = (b.x_at(ti)[axis] - a.x_at(ti)[axis]) / dx0;
        if (!found || j < jmin) {
            jmin = j;
            arg = k;
            found = true;
        }
    }
    return found;
}

}  // namespace detail

/**
 * Detect the first time at which the discrete characteristic-map Jacobian
 * (forward differences of position across adjacent seeds) vanishes or turns
 * negative. The earliest grid index is located by bisection over the stored
 * time grid, which assumes the loss of injectivity is one-sided (true for
 * the convex model problems this measures). Returns nothing for families
 * whose characteristics never cross.
 */
inline std::optional<Crossing> detect_crossing(const StripFamily& family) {
    if (family.strips.size() < 2 || family.grid.empty()) return std::nullopt;

    auto pinched = [&](std::size_t ti, double& jmin, std::size_t& arg) {
        if (!detail::min_jacobian(family, ti, jmin, arg)) return false;
        return jmin <= 0.0;
    };

    double jmin = 0.0;
    std::size_t arg = 0;

    std::size_t last = family.grid.size() - 1;
    if (!pinched(last, jmin, arg)) return std::nullopt;
    if (pinched(0, jmin, arg)) last = 0;

    // Bisect for the first pinched index: invariant pinched(hi), !pinched(lo).
    if (last != 0) {
        std::size_t lo = 0, hi = last;
        while (hi - lo > 1) {
            std::size_t mid = lo + (hi - lo) / 2;
            if (pinched(mid, jmin, arg))
                hi = mid;
            else
                lo = mid;
        }
        last = hi;
        pinched(last, jmin, arg);
    }

    const std::size_t axis = static_cast<std::size_t>(family.seed_axis);
    Crossing c;
    c.t = family.grid[last];
    c.strip_a = arg;
    c.strip_b = arg + 1;
    c.x = 0.5 * (family.strips[arg].x_at(last)[axis] + family.strips[arg + 1].x_at(last)[axis]);
    return c;
}

/// Largest derivative gap between samples adjacent in position at one time.
struct JumpScan {
    double t = 0.0;
    double max_jump = 0.0;  // infinity norm of the p difference
    double x = 0.0;         // midpoint of the pair realizing the maximum
    std::size_t strip_a = 0;
    std::size_t strip_b = 0;
};

/**
 * Scan strip samples at time t for derivative jumps: samples are ordered by
 * position along the seed axis and adjacent differences of p are compared.
 * Before a crossing the positional order equals the seed order, so this
 * reports the largest adjacent-seed gap; after a crossing, branches of the
 * multivalued solution interleave and the scan picks up the jump between
 * them.
 */
inline JumpScan jump_scan(const StripFamily& family, double t) {
    if (family.grid.empty()) throw OutOfRangeError("family has no samples");
    if (t < family.grid.front() - 1e-12 || t > family.grid.back() + 1e-12)
        throw OutOfRangeError("requested time is outside the family's parameter range");

    // Nearest stored grid index.
    std::size_t ti = 0;
    double best = std::abs(family.grid[0] - t);
    for (std::size_t i = 1; i < family.grid.size(); ++i) {
        double d = std::abs(family.grid[i] - t);
        if (d < best) {
            best = d;
            ti = i;
        }
    }

    const std::size_t axis = static_cast<std::size_t>(family.seed_axis);
    struct Entry {
        double x;
        std::size_t strip;
    };
    std::vector<Entry> order;
    for (std::size_t k = 0; k < family.strips.size(); ++k)
        if (family.strips[k].size() > ti) order.push_back({family.strips[k].x_at(ti)[axis], k});
    if (order.size() < 2) throw TooFewSamplesError("fewer than two strips alive at the requested time");

    std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
        if (a.x != b.x) return a.x < b.x;
        return a.strip < b.strip;
    });

    JumpScan scan;
    scan.t = family.grid[ti];
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        const auto& a = family.strips[order[i].strip];
        const auto& b = family.strips[order[i + 1].strip];
        double gap = 0.0;
        for (int c = 0; c < family.problem.n; ++c)
            gap = std::max(gap, std::abs(b.p_at(ti)[static_cast<std::size_t>(c)] -
                                         a.p_at(ti)[static_cast<std::size_t>(c)]));
        if (gap > scan.max_jump) {
            scan.max_jump = gap;
            scan.x = 0.5 * (order[i].x + order[i + 1].x);
            scan.strip_a = order[i].strip;
            scan.strip_b = order[i + 1].strip;
        }
    }
    return scan;
}

/**
 * View a strip as a discrete curve carrying the relation du = theta.
 * General-kind strips map directly to (s, x, u, p). Evolution-kind strips
 * are embedded in extended coordinates: position (t, x^j), derivative
 * (u_t, p_j) with u_t = -E, so the same closure diagnostics apply to the
 * form -E dt + p_j dx^j.
 */
inline CurveSample to_curve_sample(const PdeProblem& prob, const CharacteristicStrip& strip) {
    CurveSample curve;
    if (prob.kind == PdeKind::general) {
        curve.dim = strip.n;
        curve.param = strip.param;
        curve.u = strip.u;
        curve.x = strip.x;
        curve.p = strip.p;
        return curve;
    }
    curve.dim = strip.n + 1;
    curve.param = strip.param;
    curve.u = strip.u;
    std::vector<double> vals;
    for (std::size_t k = 0; k < strip.size(); ++k) {
        double t = strip.param[k];
        auto x = strip.x_at(k);
        auto p = strip.p_at(k);
        prob.bind(vals, t, x, strip.u[k], p);
        double e = prob.f.value(vals);
        curve.x.push_back(t);
        curve.x.insert(curve.x.end(), x.begin(), x.end());
        curve.p.push_back(-e);
        curve.p.insert(curve.p.end(), p.begin(), p.end());
    }
    return curve;
}

}  // namespace charlab
