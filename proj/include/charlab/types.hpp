#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "charlab/errors.hpp"

namespace charlab {

/// A point (x, u, p) in first-jet space: coordinates, solution value, and
/// the candidate derivatives du/dx^i.
struct JetPoint {
    std::vector<double> x;
    double u = 0.0;
    std::vector<double> p;

    int dim() const { return static_cast<int>(x.size()); }
};

/// Extended phase-space state (t, q, p).
struct PhasePoint {
    double t = 0.0;
    std::vector<double> q;
    std::vector<double> p;

    int dim() const { return static_cast<int>(q.size()); }
};

/// Tangent-space state (t, q, qdot).
struct VelocityPoint {
    double t = 0.0;
    std::vector<double> q;
    std::vector<double> qd;

    int dim() const { return static_cast<int>(q.size()); }
};

/**
 * Discrete curve in jet space: samples (param, x, u, p) with strictly
 * increasing parameter. Coordinates are stored flattened, dim values per
 * sample.
 */
struct CurveSample {
    int dim = 0;
    std::vector<double> param;
    std::vector<double> u;
    std::vector<double> x;  // size() * dim, row-major
    std::vector<double> p;  // size() * dim, row-major

    std::size_t size() const { return param.size(); }

    std::span<const double> x_at(std::size_t k) const {
        return {x.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const double> p_at(std::size_t k) const {
        return {p.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }

    void push(double s, std::span<const double> xs, double us, std::span<const double> ps) {
        param.push_back(s);
        u.push_back(us);
        x.insert(x.end(), xs.begin(), xs.end());
        p.insert(p.end(), ps.begin(), ps.end());
    }
};

/**
 * Closed discrete loop of phase points. A loop is cyclic: the segment from
 * the last point back to the first is implied. Inputs whose first point is
 * repeated at the end (within 1e-12 in every coordinate) have the duplicate
 * dropped on construction.
 */
struct PhaseLoop {
    int dim = 0;
    std::vector<PhasePoint> pts;

    static constexpr double kClosureTol = 1e-12;

    static PhaseLoop from_points(std::vector<PhasePoint> points, bool require_explicit_closure = false) {
        if (points.empty()) throw TooFewSamplesError("a loop needs at least one point");
        bool repeated = points.size() >= 2 && matches(points.front(), points.back());
        if (require_explicit_closure && !repeated)
            throw LoopNotClosedError("loop endpoints differ by more than 1e-12");
        if (repeated) points.pop_back();
        PhaseLoop loop;
        loop.dim = points.front().dim();
        for (const auto& pt : points)
            if (pt.dim() != loop.dim) throw DimensionMismatchError("loop points have mixed dimensions");
        loop.pts = std::move(points);
        return loop;
    }

    /// Circle of n points in the (q_1, p_1) plane at fixed time, traversed
    /// counterclockwise starting from angle 0.
    static PhaseLoop circle(double q_center, double p_center, double radius, int n, double t = 0.0) {
        std::vector<PhasePoint> points;
        points.reserve(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            double theta = 2.0 * std::numbers::pi * k / n;
            points.push_back({t, {q_center + radius * std::cos(theta)}, {p_center + radius * std::sin(theta)}});
        }
        return from_points(std::move(points));
    }

    std::size_t size() const { return pts.size(); }

    bool fixed_time() const {
        for (const auto& pt : pts)
            if (std::abs(pt.t - pts.front().t) > kClosureTol) return false;
        return true;
    }

private:
    static bool matches(const PhasePoint& a, const PhasePoint& b) {
        if (a.q.size() != b.q.size()) return false;
        if (std::abs(a.t - b.t) > kClosureTol) return false;
        for (std::size_t i = 0; i < a.q.size(); ++i) {
            if (std::abs(a.q[i] - b.q[i]) > kClosureTol) return false;
            if (std::abs(a.p[i] - b.p[i]) > kClosureTol) return false;
        }
        return true;
    }
};

/// Phase-space trajectory with the action accumulated along it
/// (s(t_0) = 0 by convention).
struct Trajectory {
    int dim = 0;
    double dt = 0.0;
    std::vector<double> t;
    std::vector<double> q;  // size() * dim
    std::vector<double> p;  // size() * dim
    std::vector<double> action;

    std::size_t size() const { return t.size(); }

    std::span<const double> q_at(std::size_t k) const {
        return {q.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const double> p_at(std::size_t k) const {
        return {p.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }

    PhasePoint point(std::size_t k) const {
        auto qs = q_at(k);
        auto ps = p_at(k);
        return {t[k], {qs.begin(), qs.end()}, {ps.begin(), ps.end()}};
    }
};

/// Velocity-space trajectory from a Lagrangian flow, with the conjugate
/// momenta attached.
struct LagrangeTrajectory {
    int dim = 0;
    double dt = 0.0;
    std::vector<double> t;
    std::vector<double> q;   // size() * dim
    std::vector<double> qd;  // size() * dim
    std::vector<double> p;   // size() * dim

    std::size_t size() const { return t.size(); }

    std::span<const double> q_at(std::size_t k) const {
        return {q.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const double> qd_at(std::size_t k) const {
        return {qd.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const double> p_at(std::size_t k) const {
        return {p.data() + k * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
};

}  // namespace charlab
