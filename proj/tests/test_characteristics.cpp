#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "charlab/characteristics.hpp"
#include "charlab/forms.hpp"
#include "oracles.hpp"

using namespace charlab;

namespace {

PdeProblem unit_eikonal() { return PdeProblem::general(2, parse("p1^2 + p2^2 - 1")); }

/// Eikonal in a smooth lens medium, n^2 = 1 + A sin(2 x2)^2. Seeding with
/// u0 = x1 + (sqrt(A)/2) cos(2 x2) puts the jets on the manifold exactly.
PdeProblem lens_eikonal() { return PdeProblem::general(2, parse("p1^2 + p2^2 - 1 - 2.25*sin(2*x2)^2")); }

JetPoint lens_seed(double c) {
    JetPoint j;
    j.x = {0.0, c};
    j.u = 0.75 * std::cos(2.0 * c);
    j.p = {1.0, -1.5 * std::sin(2.0 * c)};
    return j;
}

PdeProblem burgers() { return PdeProblem::evolution(1, parse("p1^2/2")); }

StripFamily burgers_family(const char* u0, int seeds, double t_end, double dt = 1e-3) {
    auto prob = burgers();
    SeedGrid grid{0, -2.0, 2.0, seeds, {0.0}};
    return integrate_family(prob, seed_from_initial_data(1, parse(u0), grid), t_end, dt);
}

}  // namespace

TEST_CASE("charpit right-hand side", "[characteristics]") {
    SECTION("eikonal jet") {
        auto rate = charpit_rhs(unit_eikonal(), {{0.0, 0.0}, 0.0, {1.0, 0.0}});
        REQUIRE(rate.dx == std::vector<double>{2.0, 0.0});
        REQUIRE(rate.dp == std::vector<double>{0.0, 0.0});
        REQUIRE(rate.du == 2.0);
    }
    SECTION("constant-coefficient transport") {
        auto prob = PdeProblem::general(1, parse("p1 - 3"));
        auto rate = charpit_rhs(prob, {{5.0}, 1.0, {3.0}});
        REQUIRE(rate.dx == std::vector<double>{1.0});
        REQUIRE(rate.dp == std::vector<double>{0.0});
        REQUIRE(rate.du == 3.0);
    }
    SECTION("u- and x-independent F freezes p at every jet") {
        auto prob = unit_eikonal();
        auto gen = oracles::rng(3);
        std::uniform_real_distribution<double> r(-2.0, 2.0);
        for (int i = 0; i < 10; ++i) {
            auto rate = charpit_rhs(prob, {{r(gen), r(gen)}, r(gen), {r(gen), r(gen)}});
            REQUIRE(rate.dp == std::vector<double>{0.0, 0.0});
        }
    }
}

TEST_CASE("evolution right-hand side", "[characteristics]") {
    SECTION("advection") {
        auto prob = PdeProblem::evolution(1, parse("3*p1"));
        auto rate = evolution_rhs(prob, 0.0, std::vector<double>{1.0}, std::vector<double>{-2.0});
        REQUIRE(rate.dx == std::vector<double>{3.0});
        REQUIRE(rate.dp == std::vector<double>{0.0});
        REQUIRE(rate.du == 0.0);
    }
    SECTION("quadratic Hamilton-Jacobi") {
        auto rate = evolution_rhs(burgers(), 0.0, std::vector<double>{0.0}, std::vector<double>{-1.0});
        REQUIRE(rate.dx == std::vector<double>{-1.0});
        REQUIRE(rate.dp == std::vector<double>{0.0});
        REQUIRE(rate.du == 0.5);
    }
    SECTION("oscillator energy read as E") {
        auto prob = PdeProblem::evolution(1, parse("(p1^2 + x1^2)/2"));
        auto rate = evolution_rhs(prob, 0.0, std::vector<double>{1.0}, std::vector<double>{0.0});
        REQUIRE(rate.dx == std::vector<double>{0.0});
        REQUIRE(rate.dp == std::vector<double>{-1.0});
        REQUIRE(rate.du == -0.5);
    }
}

TEST_CASE("strip integration on the unit eikonal", "[characteristics]") {
    // Analytic ray oracle: x(s) = 2 s p0, u(s) = 2 s, p constant.
    auto strip = integrate_strip(unit_eikonal(), {{0.0, 0.0}, 0.0, {1.0, 0.0}}, 5.0, 1e-3);
    REQUIRE(strip.truncated == StripTruncation::none);
    std::size_t last = strip.size() - 1;
    REQUIRE(strip.param[last] == 5.0);
    REQUIRE(strip.x_at(last)[0] == Catch::Approx(10.0).margin(1e-9));
    REQUIRE(strip.x_at(last)[1] == 0.0);
    REQUIRE(strip.u[last] == Catch::Approx(10.0).margin(1e-9));
    REQUIRE(strip.p_at(last)[0] == 1.0);
    REQUIRE(strip.max_residual() <= 1e-12);

    SECTION("the strip carries an interior differential") {
        auto curve = to_curve_sample(unit_eikonal(), strip);
        REQUIRE(closure_residual(curve) <= 1e-8);
        auto uhat = interior_differential(curve);
        for (std::size_t k = 0; k < curve.size(); ++k)
            REQUIRE(std::abs(uhat[k] - curve.u[k]) <= 1e-8);
    }
}

TEST_CASE("strip integration on straight evolution problems", "[characteristics]") {
    auto prob = PdeProblem::evolution(1, parse("3*p1"));
    auto strip = integrate_strip(prob, {{0.0}, 0.0, {-2.0}}, 2.0, 1e-3);
    std::size_t last = strip.size() - 1;
    REQUIRE(strip.x_at(last)[0] == Catch::Approx(6.0).margin(1e-10));
    REQUIRE(strip.p_at(last)[0] == -2.0);
    REQUIRE(strip.u[last] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("off-manifold seeds are rejected", "[characteristics]") {
    JetPoint j{{0.0, 0.0}, 0.0, {1.0, 0.5}};  // F = 0.25
    REQUIRE_THROWS_AS(integrate_strip(unit_eikonal(), j, 1.0, 1e-3), InitialJetOffManifoldError);
}

TEST_CASE("strips truncate instead of failing", "[characteristics]") {
    SECTION("domain error flags the strip") {
        // dx/dt = 1/(1 - t) blows up at t = 1.
        auto prob = PdeProblem::evolution(1, parse("p1/(1 - t)"));
        auto strip = integrate_strip(prob, {{0.0}, 0.0, {1.0}}, 2.0, 1e-2);
        REQUIRE(strip.truncated == StripTruncation::domain_error);
        REQUIRE(strip.size() > 10);
        REQUIRE(strip.param.back() < 1.01);
    }
    SECTION("first-integral blowup flags the strip") {
        // Explosive medium: the residual tolerance trips at a large step.
        auto prob = PdeProblem::general(1, parse("p1^2 - exp(4*x1)"));
        auto strip = integrate_strip(prob, {{0.0}, 0.0, {1.0}}, 5.0, 0.05);
        REQUIRE(strip.truncated == StripTruncation::residual_exceeded);
        REQUIRE(strip.max_residual() <= 1e-6);  // offending sample is not retained
    }
}

TEST_CASE("seeding from initial data", "[characteristics]") {
    SECTION("quadratic data") {
        auto seeds = seed_from_initial_data(1, parse("-x1^2/2"), {0, -2.0, 2.0, 5, {0.0}});
        REQUIRE(seeds.size() == 5);
        REQUIRE(seeds.back().x[0] == 2.0);
        REQUIRE(seeds.back().p[0] == -2.0);
        REQUIRE(seeds.back().u == -2.0);
    }
    SECTION("zero data") {
        auto seeds = seed_from_initial_data(1, parse("0"), {0, -1.0, 1.0, 7, {0.0}});
        for (const auto& s : seeds) REQUIRE(s.p[0] == 0.0);
    }
    SECTION("tanh data against the finite-difference oracle") {
        auto seeds = seed_from_initial_data(1, parse("-log(cosh(x1))"), {0, 1.0, 1.0, 1, {0.0}});
        double fd = oracles::fd_gradient(
            [](const std::vector<double>& v) { return -std::log(std::cosh(v[0])); }, {1.0}, 1e-6)[0];
        REQUIRE(std::abs(seeds[0].p[0] + std::tanh(1.0)) <= 1e-12);
        REQUIRE(std::abs(seeds[0].p[0] - fd) <= 1e-9);
    }
}

TEST_CASE("family integration", "[characteristics]") {
    SECTION("advection characteristics stay parallel") {
        auto prob = PdeProblem::evolution(1, parse("3*p1"));
        SeedGrid grid{0, -2.0, 2.0, 11, {0.0}};
        auto family =
            integrate_family(prob, seed_from_initial_data(1, parse("sin(x1)"), grid), 2.0, 1e-2);
        REQUIRE(family.strips.size() == 11);
        for (std::size_t k = 0; k < family.strips.size(); ++k) {
            const auto& s = family.strips[k];
            double x0 = family.seeds[k].x[0];
            for (std::size_t i = 0; i < s.size(); i += 50)
                REQUIRE(s.x_at(i)[0] == Catch::Approx(x0 + 3.0 * s.param[i]).margin(1e-10));
        }
    }
    SECTION("quadratic data focuses linearly: x(t) = x0 (1 - t)") {
        auto family = burgers_family("-x1^2/2", 9, 0.8, 1e-2);
        for (std::size_t k = 0; k < family.strips.size(); ++k) {
            double x0 = family.seeds[k].x[0];
            const auto& s = family.strips[k];
            for (std::size_t i = 0; i < s.size(); i += 20)
                REQUIRE(s.x_at(i)[0] == Catch::Approx(x0 * (1.0 - s.param[i])).margin(1e-10));
        }
    }
    SECTION("empty seed list") {
        REQUIRE_THROWS_AS(integrate_family(burgers(), {}, 1.0, 1e-2), EmptySeedsError);
    }
}

TEST_CASE("p is constant along strips when E has no x dependence", "[characteristics][property]") {
    auto family = burgers_family("-log(cosh(x1))", 11, 2.0, 1e-2);
    for (std::size_t k = 0; k < family.strips.size(); ++k) {
        const auto& s = family.strips[k];
        double p0 = family.seeds[k].p[0];
        for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(s.p_at(i)[0] == p0);
    }
}

TEST_CASE("crossing detection", "[characteristics]") {
    SECTION("parabola data focuses at t = 1, x = 0") {
        auto family = burgers_family("-x1^2/2", 41, 1.5);
        auto crossing = detect_crossing(family);
        REQUIRE(crossing.has_value());
        REQUIRE(std::abs(crossing->t - 1.0) <= 1e-2);
        REQUIRE(std::abs(crossing->x) <= 1e-2);
    }
    SECTION("tanh data: the analytic Jacobian 1 - t sech^2(x0) first vanishes at x0 = 0") {
        auto family = burgers_family("-log(cosh(x1))", 41, 1.5);
        auto crossing = detect_crossing(family);
        REQUIRE(crossing.has_value());
        REQUIRE(std::abs(crossing->t - 1.0) <= 1e-2);
        REQUIRE(std::abs(crossing->x) <= 1e-2);
    }
    SECTION("advection never crosses") {
        auto prob = PdeProblem::evolution(1, parse("3*p1"));
        SeedGrid grid{0, -2.0, 2.0, 11, {0.0}};
        auto family =
            integrate_family(prob, seed_from_initial_data(1, parse("sin(x1)"), grid), 2.0, 1e-2);
        REQUIRE_FALSE(detect_crossing(family).has_value());
    }
}

TEST_CASE("jump scan", "[characteristics]") {
    SECTION("advection: the gap never moves from its initial value") {
        auto prob = PdeProblem::evolution(1, parse("3*p1"));
        SeedGrid grid{0, -2.0, 2.0, 21, {0.0}};
        auto seeds = seed_from_initial_data(1, parse("sin(x1)"), grid);
        double gap0 = 0.0;
        for (std::size_t k = 0; k + 1 < seeds.size(); ++k)
            gap0 = std::max(gap0, std::abs(seeds[k + 1].p[0] - seeds[k].p[0]));
        auto family = integrate_family(prob, seeds, 2.0, 1e-2);
        for (double t : {0.0, 0.7, 2.0})
            REQUIRE(jump_scan(family, t).max_jump == Catch::Approx(gap0).margin(1e-12));
    }
    SECTION("tanh data before the crossing: largest adjacent-seed difference") {
        auto family = burgers_family("-log(cosh(x1))", 81, 2.0);
        double expected = 0.0;
        for (std::size_t k = 0; k + 1 < family.seeds.size(); ++k)
            expected = std::max(expected, std::abs(std::tanh(family.seeds[k + 1].x[0]) -
                                                   std::tanh(family.seeds[k].x[0])));
        auto scan = jump_scan(family, 0.5);
        REQUIRE(scan.max_jump == Catch::Approx(expected).margin(1e-12));
    }
    SECTION("tanh data after the crossing: branch jump at x near 0") {
        // Oracle: outer branches at x = 0, t = 2 come from the roots of
        // x0 = 2 tanh(x0); their p values differ by 2 tanh(x0*).
        double x0star =
            oracles::bisect([](double v) { return v - 2.0 * std::tanh(v); }, 1.0, 2.5);
        REQUIRE(x0star == Catch::Approx(1.915).margin(1e-3));
        auto family = burgers_family("-log(cosh(x1))", 81, 2.0);
        auto scan = jump_scan(family, 2.0);
        REQUIRE(std::abs(scan.max_jump - 2.0 * std::tanh(x0star)) <= 1e-2);
        REQUIRE(std::abs(scan.x) <= 0.1);
    }
    SECTION("out of range") {
        auto family = burgers_family("-x1^2/2", 9, 1.0, 1e-2);
        REQUIRE_THROWS_AS(jump_scan(family, 3.0), OutOfRangeError);
        REQUIRE_THROWS_AS(jump_scan(family, -0.5), OutOfRangeError);
    }
}

TEST_CASE("first-integral drift shrinks at fourth order", "[characteristics][property]") {
    auto prob = lens_eikonal();
    double drift_coarse = 0.0, drift_fine = 0.0;
    for (double c : {-0.3, 0.4, 0.9}) {
        drift_coarse = std::max(drift_coarse,
                                integrate_strip(prob, lens_seed(c), 5.0, 1e-3).max_residual());
        drift_fine =
            std::max(drift_fine, integrate_strip(prob, lens_seed(c), 5.0, 5e-4).max_residual());
    }
    REQUIRE(drift_coarse <= 1e-8);
    REQUIRE(drift_fine <= 1e-8);
    REQUIRE(drift_coarse / drift_fine >= 10.0);
}

TEST_CASE("closure holds on every strip of the corpus problems", "[characteristics][property]") {
    SECTION("unit eikonal rays") {
        auto prob = unit_eikonal();
        SeedGrid grid{1, -2.0, 2.0, 5, {0.0, 0.0}};
        auto family = integrate_family(prob, seed_from_initial_data(2, parse("x1"), grid), 5.0, 1e-3, 1);
        for (const auto& strip : family.strips)
            REQUIRE(closure_residual(to_curve_sample(prob, strip)) <= 1e-8);
    }
    SECTION("curved lens rays at fine steps") {
        auto prob = lens_eikonal();
        for (double c : {-0.3, 0.4}) {
            auto strip = integrate_strip(prob, lens_seed(c), 3.0, 2e-5);
            REQUIRE(closure_residual(to_curve_sample(prob, strip)) <= 1e-8);
        }
    }
    SECTION("evolution strips in the extended-form embedding") {
        auto family = burgers_family("-log(cosh(x1))", 7, 1.5);
        for (const auto& strip : family.strips) {
            auto curve = to_curve_sample(family.problem, strip);
            REQUIRE(curve.dim == 2);  // (t, x1)
            REQUIRE(closure_residual(curve) <= 1e-8);
        }
    }
}

