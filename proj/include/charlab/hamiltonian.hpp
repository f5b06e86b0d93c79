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
#include "charlab/linalg.hpp"
#include "charlab/parallel.hpp"
#include "charlab/stepping.hpp"
#include "charlab/types.hpp"

namespace charlab {

inline constexpr double kLegendreCondLimit = 1e12;

/// Hamiltonian H(t, q_1..q_n, p_1..p_n). Verlet integration is only offered
/// when the scenario declares H separable (H = T(p) + V(q)); the flag is
/// trusted, misdeclaration shows up as energy drift.
struct HamiltonianProblem {
    int n = 0;
    Expression h;
    bool separable = false;
    int st = -1;
    std::vector<int> sq, sp;

    static HamiltonianProblem make(int n, Expression H, bool separable = false) {
        HamiltonianProblem prob;
        prob.n = n;
        prob.separable = separable;
        auto qs = detail::numbered_vars("q", n);
        auto ps = detail::numbered_vars("p", n);
        std::vector<std::string> allowed{"t"};
        allowed.insert(allowed.end(), qs.begin(), qs.end());
        allowed.insert(allowed.end(), ps.begin(), ps.end());
        auto slots = detail::map_alphabet(H, allowed, "H");
        prob.st = slots[0];
        prob.sq.assign(slots.begin() + 1, slots.begin() + 1 + n);
        prob.sp.assign(slots.begin() + 1 + n, slots.end());
        prob.h = std::move(H);
        return prob;
    }

    bool autonomous() const { return st < 0; }

    void bind(std::vector<double>& vals, double t, std::span<const double> q,
              std::span<const double> p) const {
        vals.assign(h.free_vars().size(), 0.0);
        if (st >= 0) vals[static_cast<std::size_t>(st)] = t;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
            if (sq[i] >= 0) vals[static_cast<std::size_t>(sq[i])] = q[i];
            if (sp[i] >= 0) vals[static_cast<std::size_t>(sp[i])] = p[i];
        }
    }

    double value(double t, std::span<const double> q, std::span<const double> p) const {
        std::vector<double> vals;
        bind(vals, t, q, p);
        return h.value(vals);
    }
};

/// Lagrangian L(t, q_1..q_n, qd_1..qd_n).
struct LagrangianProblem {
    int n = 0;
    Expression l;
    int st = -1;
    std::vector<int> sq, sqd;

    static LagrangianProblem make(int n, Expression L) {
        LagrangianProblem prob;
        prob.n = n;
        auto qs = detail::numbered_vars("q", n);
        auto qds = detail::numbered_vars("qd", n);
        std::vector<std::string> allowed{"t"};
        allowed.insert(allowed.end(), qs.begin(), qs.end());
        allowed.insert(allowed.end(), qds.begin(), qds.end());
        auto slots = detail::map_alphabet(L, allowed, "L");
        prob.st = slots[0];
        prob.sq.assign(slots.begin() + 1, slots.begin() + 1 + n);
        prob.sqd.assign(slots.begin() + 1 + n, slots.end());
        prob.l = std::move(L);
        return prob;
    }

    void bind(std::vector<double>& vals, double t, std::span<const double> q,
              std::span<const double> qd) const {
        vals.assign(l.free_vars().size(), 0.0);
        if (st >= 0) vals[static_cast<std::size_t>(st)] = t;
        for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
            if (sq[i] >= 0) vals[static_cast<std::size_t>(sq[i])] = q[i];
            if (sqd[i] >= 0) vals[static_cast<std::size_t>(sqd[i])] = qd[i];
        }
    }

    /// Velocity Hessian d2L/dqd_i dqd_j at bound values.
    Mat velocity_hessian(const std::vector<double>& vals) const {
        Mat m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                int si = sqd[static_cast<std::size_t>(i)];
                int sj = sqd[static_cast<std::size_t>(j)];
                if (si >= 0 && sj >= 0) m(i, j) = l.second_derivative(vals, si, sj);
            }
        return m;
    }
};

struct LegendreResult {
    std::vector<double> p;
    double h_value = 0.0;
};

/// Legendre map at one tangent-space point: p_j = dL/dqd_j and
/// H = p . qd - L.
inline LegendreResult legendre_to_hamiltonian(const LagrangianProblem& lp, const VelocityPoint& v) {
    if (v.dim() != lp.n) throw DimensionMismatchError("point dimension does not match the Lagrangian");
    std::vector<double> vals;
    lp.bind(vals, v.t, v.q, v.qd);
    LegendreResult out;
    out.p.resize(static_cast<std::size_t>(lp.n), 0.0);
    double l_value = lp.l.value(vals);
    for (std::size_t i = 0; i < static_cast<std::size_t>(lp.n); ++i) {
        if (lp.sqd[i] >= 0) out.p[i] = lp.l.derivative(vals, lp.sqd[i]);
        out.h_value += out.p[i] * v.qd[i];
    }
    out.h_value -= l_value;
    return out;
}

/**
 * Invert p = dL/dqd for the velocities by Newton iteration with the exact
 * velocity Hessian. Converged when |dL/dqd - p| <= 1e-12 componentwise, at
 * most 50 iterations, starting from qd = 0 unless a start is supplied. A
 * Hessian condition estimate beyond 1e12 raises SingularHessianError: the
 * Legendre transform is degenerate there.
 */
inline std::vector<double> legendre_invert(const LagrangianProblem& lp, double t,
                                           std::span<const double> q, std::span<const double> p,
                                           std::span<const double> qd_start = {}) {
    std::vector<double> qd(static_cast<std::size_t>(lp.n), 0.0);
    if (!qd_start.empty()) qd.assign(qd_start.begin(), qd_start.end());

    std::vector<double> vals, g(static_cast<std::size_t>(lp.n));
    for (int iter = 0; iter < 50; ++iter) {
        lp.bind(vals, t, q, qd);
        double gmax = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(lp.n); ++i) {
            double dl = lp.sqd[i] >= 0 ? lp.l.derivative(vals, lp.sqd[i]) : 0.0;
            g[i] = dl - p[i];
            gmax = std::max(gmax, std::abs(g[i]));
        }
        if (gmax <= 1e-12) return qd;
        Mat hess = lp.velocity_hessian(vals);
        if (cond_inf(hess) > kLegendreCondLimit)
            throw SingularHessianError("velocity Hessian of L is singular or near-singular");
        std::vector<double> delta = solve(hess, g);
        for (std::size_t i = 0; i < static_cast<std::size_t>(lp.n); ++i) qd[i] -= delta[i];
    }
    throw NoConvergenceError("Legendre inversion did not converge in 50 iterations");
}

/// Residuals of the three identities tying a Legendre pair together,
/// evaluated at (q, p(q, qd)):
///   velocity  qd - dH/dp
///   position  dL/dq + dH/dq
///   time      dL/dt + dH/dt
/// All three involve derivatives only, so they are blind to additive
/// constants in H or L.
struct LegendreIdentityResiduals {
    double velocity = 0.0;
    double position = 0.0;
    double time = 0.0;

    double max() const { return std::max(velocity, std::max(position, time)); }
};

inline LegendreIdentityResiduals legendre_identity_residuals(const LagrangianProblem& lp,
                                                             const HamiltonianProblem& hp,
                                                             std::span<const VelocityPoint> samples) {
    LegendreIdentityResiduals res;
    std::vector<double> lvals, hvals;
    for (const auto& v : samples) {
        LegendreResult leg = legendre_to_hamiltonian(lp, v);
        lp.bind(lvals, v.t, v.q, v.qd);
        hp.bind(hvals, v.t, v.q, leg.p);
        for (std::size_t i = 0; i < static_cast<std::size_t>(lp.n); ++i) {
            double hq = hp.sq[i] >= 0 ? hp.h.derivative(hvals, hp.sq[i]) : 0.0;
            double hpd = hp.sp[i] >= 0 ? hp.h.derivative(hvals, hp.sp[i]) : 0.0;
            double lq = lp.sq[i] >= 0 ? lp.l.derivative(lvals, lp.sq[i]) : 0.0;
            res.velocity = std::max(res.velocity, std::abs(v.qd[i] - hpd));
            res.position = std::max(res.position, std::abs(lq + hq));
        }
        double lt = lp.st >= 0 ? lp.l.derivative(lvals, lp.st) : 0.0;
        double ht = hp.st >= 0 ? hp.h.derivative(hvals, hp.st) : 0.0;
        res.time = std::max(res.time, std::abs(lt + ht));
    }
    return res;
}

enum class Integrator { rk4, verlet };

namespace detail {

class HamiltonianStepper {
public:
    explicit HamiltonianStepper(const HamiltonianProblem& prob)
        : prob_(prob), n_(static_cast<std::size_t>(prob.n)) {}

    // state = [q(0..n-1), p(n..2n-1)]
    void rhs(double t, std::span<const double> state, std::span<double> deriv) {
        prob_.bind(vals_, t, state.subspan(0, n_), state.subspan(n_, n_));
        for (std::size_t i = 0; i < n_; ++i) {
            deriv[i] = prob_.sp[i] >= 0 ? prob_.h.derivative(vals_, prob_.sp[i]) : 0.0;
            deriv[n_ + i] = -(prob_.sq[i] >= 0 ? prob_.h.derivative(vals_, prob_.sq[i]) : 0.0);
        }
    }

    void rk4_step(double t, double h, std::vector<double>& state) {
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

    // Stormer-Verlet (kick-drift-kick) for declared-separable H.
    void verlet_step(double t, double h, std::vector<double>& state) {
        auto q = std::span<double>(state).subspan(0, n_);
        auto p = std::span<double>(state).subspan(n_, n_);
        prob_.bind(vals_, t, q, p);
        for (std::size_t i = 0; i < n_; ++i)
            p[i] -= 0.5 * h * (prob_.sq[i] >= 0 ? prob_.h.derivative(vals_, prob_.sq[i]) : 0.0);
        prob_.bind(vals_, t + 0.5 * h, q, p);
        for (std::size_t i = 0; i < n_; ++i)
            q[i] += h * (prob_.sp[i] >= 0 ? prob_.h.derivative(vals_, prob_.sp[i]) : 0.0);
        prob_.bind(vals_, t + h, q, p);
        for (std::size_t i = 0; i < n_; ++i)
            p[i] -= 0.5 * h * (prob_.sq[i] >= 0 ? prob_.h.derivative(vals_, prob_.sq[i]) : 0.0);
    }

    /// Integrand of the action: p . dH/dp - H at a node.
    double action_rate(double t, std::span<const double> state) {
        prob_.bind(vals_, t, state.subspan(0, n_), state.subspan(n_, n_));
        double rate = 0.0;
        for (std::size_t i = 0; i < n_; ++i)
            rate += state[n_ + i] * (prob_.sp[i] >= 0 ? prob_.h.derivative(vals_, prob_.sp[i]) : 0.0);
        return rate - prob_.h.value(vals_);
    }

private:
    const HamiltonianProblem& prob_;
    std::size_t n_;
    std::vector<double> vals_, k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace detail

/**
 * Hamiltonian flow from a phase point, fixed-step RK4 or Stormer-Verlet.
 * The action obeys ds/dt = p . qd - H with qd = dH/dp and is accumulated by
 * the trapezoid rule on the step grid (shared by both integrators), which
 * realizes ds = -H dt + p_j dx^j along the trajectory.
 */
inline Trajectory hamiltonian_flow(const HamiltonianProblem& prob, const PhasePoint& start,
                                   double t_end, double dt, Integrator method = Integrator::rk4) {
    if (start.dim() != prob.n || static_cast<int>(start.p.size()) != prob.n)
        throw DimensionMismatchError("start point dimension does not match the problem");
    if (!(dt > 0.0)) throw Error("dt must be positive");
    if (method == Integrator::verlet && !prob.separable)
        throw SeparabilityError("verlet requires a Hamiltonian declared separable");

    std::size_t n = static_cast<std::size_t>(prob.n);
    std::vector<double> state(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        state[i] = start.q[i];
        state[n + i] = start.p[i];
    }

    Trajectory traj;
    traj.dim = prob.n;
    traj.dt = dt;

    detail::HamiltonianStepper stepper(prob);

    double remainder = 0.0;
    std::size_t steps = detail::full_steps(t_end, dt, remainder);
    std::size_t total = steps + (remainder > 0.0 ? 1 : 0);
    traj.t.reserve(total + 1);
    traj.action.reserve(total + 1);

    auto append = [&](double t) {
        traj.t.push_back(t);
        traj.q.insert(traj.q.end(), state.begin(), state.begin() + static_cast<std::ptrdiff_t>(n));
        traj.p.insert(traj.p.end(), state.begin() + static_cast<std::ptrdiff_t>(n), state.end());
    };

    append(start.t);
    double rate_prev = stepper.action_rate(start.t, state);
    traj.action.push_back(0.0);

    for (std::size_t k = 0; k < total; ++k) {
        double h = k < steps ? dt : remainder;
        double t = start.t + static_cast<double>(k) * dt;
        double t_next = k + 1 < total ? start.t + static_cast<double>(k + 1) * dt : start.t + t_end;
        if (method == Integrator::rk4)
            stepper.rk4_step(t, h, state);
        else
            stepper.verlet_step(t, h, state);
        append(t_next);
        double rate = stepper.action_rate(t_next, state);
        traj.action.push_back(traj.action.back() + 0.5 * h * (rate_prev + rate));
        rate_prev = rate;
    }
    return traj;
}

/// Endpoint of the flow without storing the trajectory.
inline PhasePoint flow_endpoint(const HamiltonianProblem& prob, const PhasePoint& start, double t_end,
                                double dt, Integrator method = Integrator::rk4) {
    if (method == Integrator::verlet && !prob.separable)
        throw SeparabilityError("verlet requires a Hamiltonian declared separable");
    std::size_t n = static_cast<std::size_t>(prob.n);
    std::vector<double> state(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        state[i] = start.q[i];
        state[n + i] = start.p[i];
    }
    detail::HamiltonianStepper stepper(prob);
    double remainder = 0.0;
    std::size_t steps = detail::full_steps(t_end, dt, remainder);
    std::size_t total = steps + (remainder > 0.0 ? 1 : 0);
    for (std::size_t k = 0; k < total; ++k) {
        double h = k < steps ? dt : remainder;
        double t = start.t + static_cast<double>(k) * dt;
        if (method == Integrator::rk4)
            stepper.rk4_step(t, h, state);
        else
            stepper.verlet_step(t, h, state);
    }
    PhasePoint end;
    end.t = start.t + t_end;
    end.q.assign(state.begin(), state.begin() + static_cast<std::ptrdiff_t>(n));
    end.p.assign(state.begin() + static_cast<std::ptrdiff_t>(n), state.end());
    return end;
}

/// Max |H(t) - H(t_0)| along a trajectory; the conservation diagnostic for
/// autonomous Hamiltonians.
inline double energy_drift(const HamiltonianProblem& prob, const Trajectory& traj) {
    if (traj.size() == 0) return 0.0;
    double h0 = prob.value(traj.t[0], traj.q_at(0), traj.p_at(0));
    double drift = 0.0;
    for (std::size_t k = 1; k < traj.size(); ++k)
        drift = std::max(drift, std::abs(prob.value(traj.t[k], traj.q_at(k), traj.p_at(k)) - h0));
    return drift;
}

/**
 * Integrate the Lagrange equation d/dt (dL/dqd) = dL/dq by solving
 *   (d2L/dqd dqd) qdd = dL/dq - (d2L/dqd dq) qd - d2L/dqd dt
 * for the accelerations at every stage (RK4 on (q, qd)). The conjugate
 * momenta p = dL/dqd are attached at each node. A singular velocity Hessian
 * means the equation cannot be put in explicit form and raises
 * SingularHessianError.
 */
inline LagrangeTrajectory lagrange_flow(const LagrangianProblem& lp, const VelocityPoint& start,
                                        double t_end, double dt) {
    if (start.dim() != lp.n || static_cast<int>(start.qd.size()) != lp.n)
        throw DimensionMismatchError("start point dimension does not match the problem");
    if (!(dt > 0.0)) throw Error("dt must be positive");

    std::size_t n = static_cast<std::size_t>(lp.n);
    std::vector<double> state(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        state[i] = start.q[i];
        state[n + i] = start.qd[i];
    }

    std::vector<double> vals;
    auto rhs = [&](double t, std::span<const double> st, std::span<double> deriv) {
        auto q = st.subspan(0, n);
        auto qd = st.subspan(n, n);
        lp.bind(vals, t, q, qd);
        Mat mass = lp.velocity_hessian(vals);
        if (cond_inf(mass) > kLegendreCondLimit)
            throw SingularHessianError("velocity Hessian of L is singular along the trajectory");
        std::vector<double> force(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            int si = lp.sqd[i];
            double lq = lp.sq[i] >= 0 ? lp.l.derivative(vals, lp.sq[i]) : 0.0;
            double mixed = 0.0;
            if (si >= 0) {
                for (std::size_t j = 0; j < n; ++j)
                    if (lp.sq[j] >= 0) mixed += lp.l.second_derivative(vals, si, lp.sq[j]) * qd[j];
                if (lp.st >= 0) mixed += lp.l.second_derivative(vals, si, lp.st);
            }
            force[i] = lq - mixed;
        }
        std::vector<double> qdd = solve(mass, force);
        for (std::size_t i = 0; i < n; ++i) {
            deriv[i] = qd[i];
            deriv[n + i] = qdd[i];
        }
    };

    LagrangeTrajectory traj;
    traj.dim = lp.n;
    traj.dt = dt;

    auto append = [&](double t) {
        traj.t.push_back(t);
        traj.q.insert(traj.q.end(), state.begin(), state.begin() + static_cast<std::ptrdiff_t>(n));
        traj.qd.insert(traj.qd.end(), state.begin() + static_cast<std::ptrdiff_t>(n), state.end());
        lp.bind(vals, t, std::span<const double>(state).subspan(0, n),
                std::span<const double>(state).subspan(n, n));
        for (std::size_t i = 0; i < n; ++i)
            traj.p.push_back(lp.sqd[i] >= 0 ? lp.l.derivative(vals, lp.sqd[i]) : 0.0);
    };

    append(start.t);

    std::vector<double> k1(2 * n), k2(2 * n), k3(2 * n), k4(2 * n), tmp(2 * n);
    double remainder = 0.0;
    std::size_t steps = detail::full_steps(t_end, dt, remainder);
    std::size_t total = steps + (remainder > 0.0 ? 1 : 0);
    for (std::size_t k = 0; k < total; ++k) {
        double h = k < steps ? dt : remainder;
        double t = start.t + static_cast<double>(k) * dt;
        double t_next = k + 1 < total ? start.t + static_cast<double>(k + 1) * dt : start.t + t_end;
        rhs(t, state, k1);
        for (std::size_t i = 0; i < 2 * n; ++i) tmp[i] = state[i] + 0.5 * h * k1[i];
        rhs(t + 0.5 * h, tmp, k2);
        for (std::size_t i = 0; i < 2 * n; ++i) tmp[i] = state[i] + 0.5 * h * k2[i];
        rhs(t + 0.5 * h, tmp, k3);
        for (std::size_t i = 0; i < 2 * n; ++i) tmp[i] = state[i] + h * k3[i];
        rhs(t + h, tmp, k4);
        for (std::size_t i = 0; i < 2 * n; ++i)
            state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        append(t_next);
    }
    return traj;
}

/**
 * Integrate the same initial condition through both descriptions — the
 * Lagrange equation and the Hamiltonian system from the Legendre-matched
 * start — and return the largest combined deviation
 * max_k (|q_L - q_H| + |p_L - p_H|) over the shared grid.
 */
inline double equivalence_check(const LagrangianProblem& lp, const HamiltonianProblem& hp,
                                const VelocityPoint& start, double t_end, double dt) {
    LegendreResult leg = legendre_to_hamiltonian(lp, start);
    PhasePoint h_start{start.t, start.q, leg.p};
    Trajectory ht = hamiltonian_flow(hp, h_start, t_end, dt);
    LagrangeTrajectory lt = lagrange_flow(lp, start, t_end, dt);

    std::size_t count = std::min(ht.size(), lt.size());
    double worst = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        double dq = 0.0, dp = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(lp.n); ++i) {
            dq = std::max(dq, std::abs(lt.q_at(k)[i] - ht.q_at(k)[i]));
            dp = std::max(dp, std::abs(lt.p_at(k)[i] - ht.p_at(k)[i]));
        }
        worst = std::max(worst, dq + dp);
    }
    return worst;
}

/// Loop transport result: the Poincare-Cartan integral before and after
/// carrying every loop point through the flow.
struct LoopTransport {
    double initial = 0.0;
    double final = 0.0;
    double drift = 0.0;
    PhaseLoop transported;
};

/**
 * Transport a closed loop with the Hamiltonian flow, one flow call per loop
 * point on the shared step grid, and compare the loop integral of
 * p dq - H dt before and after. For fixed-time loops both integrals are
 * plain p dq areas.
 */
inline LoopTransport poincare_invariance(const HamiltonianProblem& prob, const PhaseLoop& loop0,
                                         double t_end, double dt) {
    LoopTransport out;
    out.initial = loop_integral(loop0, &prob.h);

    std::vector<PhasePoint> moved(loop0.size());
    parallel_for(loop0.size(),
                 [&](std::size_t i) { moved[i] = flow_endpoint(prob, loop0.pts[i], t_end, dt); });

    out.transported.dim = loop0.dim;
    out.transported.pts = std::move(moved);
    out.final = loop_integral(out.transported, &prob.h);
    out.drift = std::abs(out.final - out.initial);
    return out;
}

/// Phase-space map (q, p) -> (Q, P), with an optional generating function
/// (not used numerically: dW integrates to zero around closed loops).
struct CanonicalMap {
    int n = 0;
    std::vector<Expression> q_out;
    std::vector<Expression> p_out;
    std::optional<Expression> generating;
};

struct CanonicalCheck {
    double symplectic_residual = 0.0;
    double form_residual = 0.0;
};

namespace detail {

inline PhasePoint apply_map(const CanonicalMap& map, std::span<const std::vector<int>> slots_q,
                            std::span<const std::vector<int>> slots_p, const PhasePoint& pt) {
    PhasePoint out;
    out.t = pt.t;
    out.q.resize(static_cast<std::size_t>(map.n));
    out.p.resize(static_cast<std::size_t>(map.n));
    std::vector<double> vals;
    auto eval_one = [&](const Expression& e, const std::vector<int>& slots) {
        vals.assign(e.free_vars().size(), 0.0);
        for (std::size_t i = 0; i < static_cast<std::size_t>(map.n); ++i) {
            if (slots[i] >= 0) vals[static_cast<std::size_t>(slots[i])] = pt.q[i];
            if (slots[static_cast<std::size_t>(map.n) + i] >= 0)
                vals[static_cast<std::size_t>(slots[static_cast<std::size_t>(map.n) + i])] = pt.p[i];
        }
        return e.value(vals);
    };
    for (std::size_t r = 0; r < static_cast<std::size_t>(map.n); ++r) {
        out.q[r] = eval_one(map.q_out[r], slots_q[r]);
        out.p[r] = eval_one(map.p_out[r], slots_p[r]);
    }
    return out;
}

}  // namespace detail

/**
 * Two independent canonicity probes:
 *  - symplectic residual: max entry of J^T O J - O over the sample points,
 *    with J the exact Jacobian of (q, p) -> (Q, P) and O the standard
 *    antisymmetric unit matrix;
 *  - form residual: max over probe loops of the difference between the
 *    loop integrals of p dq and P dQ.
 */
inline CanonicalCheck canonical_check(const CanonicalMap& map, std::span<const PhaseLoop> probe_loops,
                                      std::span<const PhasePoint> samples) {
    int n = map.n;
    auto qs = detail::numbered_vars("q", n);
    auto ps = detail::numbered_vars("p", n);
    std::vector<std::string> allowed = qs;
    allowed.insert(allowed.end(), ps.begin(), ps.end());

    std::vector<std::vector<int>> slots_q, slots_p;
    for (const auto& e : map.q_out) slots_q.push_back(detail::map_alphabet(e, allowed, "Q"));
    for (const auto& e : map.p_out) slots_p.push_back(detail::map_alphabet(e, allowed, "P"));

    CanonicalCheck out;

    // Symplectic residual over samples.
    std::vector<double> vals;
    for (const auto& pt : samples) {
        Mat jac(2 * n, 2 * n);
        auto fill_row = [&](int row, const Expression& e, const std::vector<int>& slots) {
            vals.assign(e.free_vars().size(), 0.0);
            for (std::size_t i = 0; i < static_cast<std::size_t>(n); ++i) {
                if (slots[i] >= 0) vals[static_cast<std::size_t>(slots[i])] = pt.q[i];
                if (slots[static_cast<std::size_t>(n) + i] >= 0)
                    vals[static_cast<std::size_t>(slots[static_cast<std::size_t>(n) + i])] = pt.p[i];
            }
            for (int c = 0; c < 2 * n; ++c) {
                int slot = slots[static_cast<std::size_t>(c)];
                jac(row, c) = slot >= 0 ? e.derivative(vals, slot) : 0.0;
            }
        };
        for (int r = 0; r < n; ++r) {
            fill_row(r, map.q_out[static_cast<std::size_t>(r)], slots_q[static_cast<std::size_t>(r)]);
            fill_row(n + r, map.p_out[static_cast<std::size_t>(r)], slots_p[static_cast<std::size_t>(r)]);
        }
        // R = J^T O J - O with O(i, n+i) = 1, O(n+i, i) = -1.
        for (int a = 0; a < 2 * n; ++a)
            for (int b = 0; b < 2 * n; ++b) {
                double s = 0.0;
                for (int i = 0; i < n; ++i)
                    s += jac(i, a) * jac(n + i, b) - jac(n + i, a) * jac(i, b);
                double omega = 0.0;
                if (a < n && b == n + a) omega = 1.0;
                if (a >= n && b == a - n) omega = -1.0;
                out.symplectic_residual = std::max(out.symplectic_residual, std::abs(s - omega));
            }
    }

    // Form residual over probe loops.
    for (const auto& loop : probe_loops) {
        PhaseLoop mapped;
        mapped.dim = n;
        mapped.pts.reserve(loop.size());
        for (const auto& pt : loop.pts) mapped.pts.push_back(detail::apply_map(map, slots_q, slots_p, pt));
        double before = loop_integral(loop);
        double after = loop_integral(mapped);
        out.form_residual = std::max(out.form_residual, std::abs(before - after));
    }
    return out;
}

}  // namespace charlab
