#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "charlab/characteristics.hpp"
#include "charlab/hamiltonian.hpp"
#include "oracles.hpp"

using namespace charlab;
constexpr double kPi = std::numbers::pi;

namespace {

HamiltonianProblem oscillator_h(bool separable = false) {
    return HamiltonianProblem::make(1, parse("p1^2/2 + q1^2/2"), separable);
}
LagrangianProblem oscillator_l() { return LagrangianProblem::make(1, parse("qd1^2/2 - q1^2/2")); }

}  // namespace

TEST_CASE("legendre map at a point", "[hamiltonian]") {
    SECTION("quadratic Lagrangian") {
        auto r = legendre_to_hamiltonian(oscillator_l(), {0.0, {0.0}, {2.0}});
        REQUIRE(r.p[0] == 2.0);
        REQUIRE(r.h_value == 2.0);
    }
    SECTION("rest state") {
        auto lp = LagrangianProblem::make(1, parse("qd1^2/2"));
        auto r = legendre_to_hamiltonian(lp, {0.0, {0.0}, {0.0}});
        REQUIRE(r.p[0] == 0.0);
        REQUIRE(r.h_value == 0.0);
    }
    SECTION("cosh Lagrangian against direct evaluation") {
        auto lp = LagrangianProblem::make(1, parse("cosh(qd1)"));
        auto r = legendre_to_hamiltonian(lp, {0.0, {0.0}, {0.5}});
        double expect_p = std::sinh(0.5);
        double expect_h = 0.5 * std::sinh(0.5) - std::cosh(0.5);
        REQUIRE(std::abs(r.p[0] - expect_p) <= 1e-14);
        REQUIRE(std::abs(r.h_value - expect_h) <= 1e-10);
    }
}

TEST_CASE("legendre inversion by Newton", "[hamiltonian]") {
    SECTION("identity mass") {
        auto lp = LagrangianProblem::make(1, parse("qd1^2/2"));
        auto qd = legendre_invert(lp, 0.0, std::vector<double>{0.0}, std::vector<double>{4.0});
        REQUIRE(qd[0] == Catch::Approx(4.0).margin(1e-12));
    }
    SECTION("mass 2") {
        auto lp = LagrangianProblem::make(1, parse("2*qd1^2/2"));
        auto qd = legendre_invert(lp, 0.0, std::vector<double>{0.0}, std::vector<double>{4.0});
        REQUIRE(qd[0] == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("cosh Lagrangian against the bisection oracle") {
        auto lp = LagrangianProblem::make(1, parse("cosh(qd1)"));
        double root = oracles::bisect([](double v) { return std::sinh(v) - 1.0; }, 0.0, 2.0);
        auto qd = legendre_invert(lp, 0.0, std::vector<double>{0.0}, std::vector<double>{1.0});
        REQUIRE(std::abs(qd[0] - root) <= 1e-8);
        REQUIRE(std::abs(qd[0] - std::asinh(1.0)) <= 1e-10);
    }
    SECTION("degenerate Lagrangian") {
        auto lp = LagrangianProblem::make(1, parse("qd1"));
        REQUIRE_THROWS_AS(legendre_invert(lp, 0.0, std::vector<double>{0.0}, std::vector<double>{1.0}),
                          SingularHessianError);
    }
}

TEST_CASE("legendre round trip across convex Lagrangians", "[hamiltonian][property]") {
    auto gen = oracles::rng(1001);
    std::uniform_real_distribution<double> vel(-1.5, 1.5);
    for (const char* text : {"qd1^2/2", "2*qd1^2/2", "cosh(qd1)", "qd1^4/4 + qd1^2/2"}) {
        auto lp = LagrangianProblem::make(1, parse(text));
        for (int rep = 0; rep < 25; ++rep) {
            VelocityPoint v{0.0, {0.0}, {vel(gen)}};
            auto leg = legendre_to_hamiltonian(lp, v);
            auto qd = legendre_invert(lp, 0.0, v.q, leg.p, v.qd);
            REQUIRE(std::abs(qd[0] - v.qd[0]) <= 1e-10);
        }
    }
}

TEST_CASE("legendre identity residuals", "[hamiltonian]") {
    std::vector<VelocityPoint> samples;
    auto gen = oracles::rng(2002);
    std::uniform_real_distribution<double> r(-1.0, 1.0);
    for (int i = 0; i < 100; ++i) samples.push_back({r(gen), {r(gen)}, {r(gen)}});

    SECTION("analytic partner pair") {
        auto res = legendre_identity_residuals(oscillator_l(), oscillator_h(), samples);
        REQUIRE(res.max() <= 1e-10);
    }
    SECTION("identities are blind to additive constants") {
        auto lp = LagrangianProblem::make(1, parse("qd1^2/2"));
        auto hp = HamiltonianProblem::make(1, parse("p1^2/2 + 1"));
        auto res = legendre_identity_residuals(lp, hp, samples);
        REQUIRE(res.velocity == 0.0);
        REQUIRE(res.position == 0.0);
        REQUIRE(res.time == 0.0);
    }
    SECTION("mismatched potential shows in the position identity") {
        auto lp = LagrangianProblem::make(1, parse("qd1^2/2"));
        auto hp = HamiltonianProblem::make(1, parse("p1^2/2 + q1"));
        auto res = legendre_identity_residuals(lp, hp, samples);
        REQUIRE(res.position == 1.0);
        REQUIRE(res.velocity == 0.0);
    }
}

TEST_CASE("hamiltonian flow oracles", "[hamiltonian]") {
    SECTION("oscillator quarter turn") {
        auto traj = hamiltonian_flow(oscillator_h(), {0.0, {1.0}, {0.0}}, kPi / 2.0, 1e-3);
        std::size_t last = traj.size() - 1;
        REQUIRE(std::abs(traj.q_at(last)[0] - 0.0) <= 1e-9);
        REQUIRE(std::abs(traj.p_at(last)[0] - (-1.0)) <= 1e-9);
    }
    SECTION("free particle action") {
        auto hp = HamiltonianProblem::make(1, parse("p1^2/2"));
        auto traj = hamiltonian_flow(hp, {0.0, {0.0}, {1.0}}, 1.0, 1e-3);
        std::size_t last = traj.size() - 1;
        REQUIRE(traj.q_at(last)[0] == Catch::Approx(1.0).margin(1e-12));
        REQUIRE(traj.p_at(last)[0] == 1.0);
        REQUIRE(std::abs(traj.action[last] - 0.5) <= 1e-10);
    }
    SECTION("trivial transport H = p") {
        auto hp = HamiltonianProblem::make(1, parse("p1"));
        auto traj = hamiltonian_flow(hp, {0.0, {0.0}, {0.0}}, 2.0, 1e-3);
        std::size_t last = traj.size() - 1;
        REQUIRE(traj.q_at(last)[0] == Catch::Approx(2.0).margin(1e-12));
        REQUIRE(traj.p_at(last)[0] == 0.0);
        REQUIRE(traj.action[last] == 0.0);
    }
}

TEST_CASE("action accumulation matches the closed form", "[hamiltonian][property]") {
    // Free particle: s(t) = qd^2 t / 2 along the flow.
    auto hp = HamiltonianProblem::make(1, parse("p1^2/2"));
    for (double p0 : {0.5, 1.0, 2.0}) {
        auto traj = hamiltonian_flow(hp, {0.0, {0.0}, {p0}}, 3.0, 1e-3);
        for (std::size_t k = 0; k < traj.size(); k += 500)
            REQUIRE(std::abs(traj.action[k] - 0.5 * p0 * p0 * traj.t[k]) <= 1e-8);
    }
}

TEST_CASE("energy conservation along rk4 trajectories", "[hamiltonian][property]") {
    for (const char* text : {"p1^2/2 + q1^2/2", "p1^2/2 + cosh(q1) - 1", "p1^2/2 + q1^4/4"}) {
        auto hp = HamiltonianProblem::make(1, parse(text));
        auto traj = hamiltonian_flow(hp, {0.0, {1.0}, {0.3}}, 10.0, 1e-3);
        REQUIRE(energy_drift(hp, traj) <= 1e-8);
    }
}

TEST_CASE("verlet requires the separability declaration", "[hamiltonian]") {
    REQUIRE_THROWS_AS(hamiltonian_flow(oscillator_h(false), {0.0, {1.0}, {0.0}}, 1.0, 1e-2,
                                       Integrator::verlet),
                      SeparabilityError);
    REQUIRE_NOTHROW(
        hamiltonian_flow(oscillator_h(true), {0.0, {1.0}, {0.0}}, 1.0, 1e-2, Integrator::verlet));
}

TEST_CASE("verlet is bounded long-run while rk4 drifts monotonically", "[hamiltonian][property]") {
    auto hp = oscillator_h(true);
    PhasePoint start{0.0, {1.0}, {0.0}};
    double h0 = hp.value(0.0, start.q, start.p);

    auto vt = hamiltonian_flow(hp, start, 1000.0, 1e-2, Integrator::verlet);
    double lead = 0.0, trail = 0.0;
    for (std::size_t k = 0; k < vt.size(); ++k) {
        double err = std::abs(hp.value(vt.t[k], vt.q_at(k), vt.p_at(k)) - h0);
        if (vt.t[k] <= 500.0)
            lead = std::max(lead, err);
        else
            trail = std::max(trail, err);
    }
    REQUIRE(std::max(lead, trail) <= 1e-3);
    REQUIRE(trail <= 1.5 * lead);  // no secular growth

    auto rt = hamiltonian_flow(hp, start, 1000.0, 1e-2, Integrator::rk4);
    double prev = 0.0;
    for (double checkpoint : {250.0, 500.0, 750.0, 1000.0}) {
        auto k = static_cast<std::size_t>(checkpoint / 1e-2);
        double err = std::abs(hp.value(rt.t[k], rt.q_at(k), rt.p_at(k)) - h0);
        REQUIRE(err > prev);
        prev = err;
    }
}

TEST_CASE("lagrange flow oracles", "[hamiltonian]") {
    SECTION("harmonic oscillator") {
        auto traj = lagrange_flow(oscillator_l(), {0.0, {1.0}, {0.0}}, kPi / 2.0, 1e-3);
        std::size_t last = traj.size() - 1;
        REQUIRE(std::abs(traj.q_at(last)[0]) <= 1e-9);
        REQUIRE(std::abs(traj.qd_at(last)[0] - (-1.0)) <= 1e-9);
        REQUIRE(std::abs(traj.p_at(last)[0] - (-1.0)) <= 1e-9);
    }
    SECTION("free particle") {
        auto lp = LagrangianProblem::make(1, parse("qd1^2/2"));
        auto traj = lagrange_flow(lp, {0.0, {0.0}, {3.0}}, 2.0, 1e-3);
        std::size_t last = traj.size() - 1;
        REQUIRE(traj.q_at(last)[0] == Catch::Approx(6.0).margin(1e-10));
        REQUIRE(traj.qd_at(last)[0] == 3.0);
    }
    SECTION("degenerate Lagrangian cannot be put in explicit form") {
        auto lp = LagrangianProblem::make(1, parse("qd1"));
        REQUIRE_THROWS_AS(lagrange_flow(lp, {0.0, {0.0}, {1.0}}, 1.0, 1e-2), SingularHessianError);
    }
}

TEST_CASE("the two descriptions agree along trajectories", "[hamiltonian]") {
    SECTION("harmonic oscillator pair over T = 10") {
        double dev = equivalence_check(oscillator_l(), oscillator_h(), {0.0, {1.0}, {0.0}}, 10.0, 1e-3);
        REQUIRE(dev <= 1e-6);
    }
    SECTION("free particle pair is exact") {
        auto lp = LagrangianProblem::make(1, parse("qd1^2/2"));
        auto hp = HamiltonianProblem::make(1, parse("p1^2/2"));
        double dev = equivalence_check(lp, hp, {0.0, {0.0}, {1.0}}, 10.0, 1e-3);
        REQUIRE(dev <= 1e-9);
    }
    SECTION("mismatched partner diverges quickly") {
        auto lp = LagrangianProblem::make(1, parse("qd1^2/2"));
        auto hp = HamiltonianProblem::make(1, parse("p1^2/2 + q1"));
        double dev = equivalence_check(lp, hp, {0.0, {0.0}, {1.0}}, 1.0, 1e-3);
        REQUIRE(dev > 0.1);
    }
}

TEST_CASE("reading H as E reproduces the hamiltonian flow", "[hamiltonian][property]") {
    // The oscillator Hamiltonian read as an evolution equation: the
    // characteristic system of u_t + E = 0 is the same ODE system.
    auto hp = oscillator_h();
    auto prob = PdeProblem::evolution(1, parse("p1^2/2 + x1^2/2"));
    auto strip = integrate_strip(prob, {{1.0}, 0.0, {0.0}}, 10.0, 1e-3);
    auto traj = hamiltonian_flow(hp, {0.0, {1.0}, {0.0}}, 10.0, 1e-3);
    REQUIRE(strip.size() == traj.size());
    double dev = 0.0;
    for (std::size_t k = 0; k < strip.size(); ++k) {
        dev = std::max(dev, std::abs(strip.x_at(k)[0] - traj.q_at(k)[0]));
        dev = std::max(dev, std::abs(strip.p_at(k)[0] - traj.p_at(k)[0]));
    }
    REQUIRE(dev <= 1e-10);
}

TEST_CASE("poincare loop transport", "[hamiltonian]") {
    auto loop = PhaseLoop::circle(0.0, 0.0, 1.0, 256);

    SECTION("rigid rotation preserves the loop") {
        auto res = poincare_invariance(oscillator_h(), loop, 1.0, 1e-3);
        REQUIRE(std::abs(res.initial - (-kPi)) <= 1e-4);
        REQUIRE(res.drift <= 1e-6);
    }
    SECTION("shear flow preserves the area") {
        auto hp = HamiltonianProblem::make(1, parse("p1^2/2"));
        auto res = poincare_invariance(hp, loop, 1.0, 1e-3);
        REQUIRE(res.drift <= 1e-6);
    }
    SECTION("single-point loop") {
        auto single = PhaseLoop::from_points({PhasePoint{0.0, {0.3}, {-0.2}}});
        auto res = poincare_invariance(oscillator_h(), single, 1.0, 1e-3);
        REQUIRE(res.initial == 0.0);
        REQUIRE(res.final == 0.0);
    }
}

TEST_CASE("canonical transformation checks", "[hamiltonian]") {
    std::vector<PhaseLoop> loops;
    loops.push_back(PhaseLoop::circle(0.0, 0.0, 1.0, 256));
    loops.push_back(PhaseLoop::circle(0.4, -0.3, 0.5, 256));
    std::vector<PhasePoint> samples;
    auto gen = oracles::rng(31337);
    std::uniform_real_distribution<double> r(-1.0, 1.0);
    for (int i = 0; i < 25; ++i) samples.push_back({0.0, {r(gen)}, {r(gen)}});

    auto make_map = [](const char* q, const char* p) {
        CanonicalMap map;
        map.n = 1;
        map.q_out.push_back(parse(q));
        map.p_out.push_back(parse(p));
        return map;
    };

    SECTION("identity") {
        auto res = canonical_check(make_map("q1", "p1"), loops, samples);
        REQUIRE(res.symplectic_residual == 0.0);
        REQUIRE(res.form_residual == 0.0);
    }
    SECTION("scaling pair") {
        auto res = canonical_check(make_map("2*q1", "p1/2"), loops, samples);
        REQUIRE(res.symplectic_residual <= 1e-12);
        REQUIRE(res.form_residual <= 1e-12);
    }
    SECTION("rotation") {
        auto res = canonical_check(make_map("0.8*q1 + 0.6*p1", "-0.6*q1 + 0.8*p1"), loops, samples);
        REQUIRE(res.symplectic_residual <= 1e-10);
        REQUIRE(res.form_residual <= 1e-4);
    }
    SECTION("planted non-canonical map") {
        auto res = canonical_check(make_map("2*q1", "p1"), loops, samples);
        REQUIRE(res.symplectic_residual == Catch::Approx(1.0));
        REQUIRE(res.form_residual == Catch::Approx(kPi).margin(1e-4));
    }
}
