#include <doctest.h>

#include <cmath>

#include "mergerlab/equilibrium.hpp"
#include "mergerlab/errors.hpp"
#include "mergerlab/rng.hpp"

using namespace mergerlab;

namespace {

DemandSpec small_demand() {
    DemandSpec d;
    d.alpha = -0.25;
    d.beta = {1.0};
    return d;
}

}  // namespace

TEST_CASE("single-product equilibrium matches a bisection oracle") {
    DemandSpec demand = small_demand();
    const Mat x(1, 1, 1.0);
    const Vec xi{0.5};
    const Vec cost{12.0};
    const Mat h = Mat::identity(1);

    // oracle: p - c + 1/(alpha (1 - s(p))) = 0 solved by bisection
    auto g = [&](double p) {
        const Vec s = logit_shares(demand.mean_utility({p}, x, xi));
        return p - cost[0] + 1.0 / (demand.alpha * (1.0 - s[0]));
    };
    double lo = 12.0, hi = 40.0;
    REQUIRE(g(lo) < 0.0);
    REQUIRE(g(hi) > 0.0);
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (g(mid) < 0.0 ? lo : hi) = mid;
    }
    const double oracle = 0.5 * (lo + hi);

    for (SolveMethod m : {SolveMethod::ZetaFixedPoint, SolveMethod::NewtonRoot,
                          SolveMethod::Hybrid}) {
        SolverConfig cfg;
        cfg.method = m;
        cfg.max_iter = 5000;
        const auto eq = solve_structural(demand, x, xi, cost, h, cfg);
        CHECK(eq.converged);
        CHECK(eq.prices[0] == doctest::Approx(oracle).epsilon(1e-8));
    }
}

TEST_CASE("perfect competition: zero markups mean prices equal costs") {
    // the structural solver is bypassed for zero-markup models; p = c holds
    // by construction in the toolkit, checked here through the residual map
    DemandSpec demand = small_demand();
    const Vec cost{9.0, 11.0};
    // with H the identity and markups zeroed out, p = c solves trivially
    const Vec s = logit_shares(demand.mean_utility(cost, Mat(2, 1, 1.0), {0.0, 0.0}));
    ConductSpec pc{Conduct::PerfectCompetition, 0.0};
    const Vec mk = conduct_markup(s, logit_derivatives(s, demand.alpha), pc);
    CHECK(norm_inf(mk) == 0.0);
}

TEST_CASE("fixed point and newton agree on random instances") {
    DemandSpec demand;
    demand.alpha = -0.25;
    demand.beta = {-4.0, 3.0, 6.0};
    PhiloxRng rng(31, 0);
    for (int rep = 0; rep < 25; ++rep) {
        const std::size_t J = 2 + rep % 2;
        Mat x(J, 3, 1.0), w(J, 3, 1.0);
        Vec xi(J), cost(J);
        for (std::size_t j = 0; j < J; ++j) {
            x(j, 1) = 1 + 0.25 * rng.normal();
            x(j, 2) = 1 + 0.25 * rng.normal();
            xi[j] = rng.normal();
            cost[j] = 13.0 + rng.normal();
        }
        Mat h = Mat::identity(J);
        if (rep % 3 == 0) {
            h = Mat::constant(J, J, 0.75);
            for (std::size_t j = 0; j < J; ++j) h(j, j) = 1.0;
        }
        SolverConfig fp;
        fp.method = SolveMethod::ZetaFixedPoint;
        fp.max_iter = 200000;
        SolverConfig nw;
        nw.method = SolveMethod::NewtonRoot;
        nw.max_iter = 200;
        const auto efp = solve_structural(demand, x, xi, cost, h, fp);
        const auto enw = solve_structural(demand, x, xi, cost, h, nw);
        CHECK(efp.converged);
        CHECK(enw.converged);
        for (std::size_t j = 0; j < J; ++j)
            CHECK(std::abs(efp.prices[j] - enw.prices[j]) < 10.0 * fp.tol);
        // plugging back in re-verifies the residual
        CHECK(efp.residual_norm <= fp.tol);
        CHECK(enw.residual_norm <= nw.tol);
        // markups keep prices above cost under alpha < 0
        for (std::size_t j = 0; j < J; ++j) CHECK(enw.prices[j] >= cost[j] - 1e-9);
    }
}

TEST_CASE("non-convergence raises with the last residual") {
    DemandSpec demand = small_demand();
    SolverConfig cfg;
    cfg.max_iter = 1;
    cfg.method = SolveMethod::ZetaFixedPoint;
    cfg.damping = 0.01;
    try {
        solve_structural(demand, Mat(1, 1, 1.0), {3.0}, {25.0}, Mat::identity(1), cfg, 17);
        FAIL("expected NonConvergence");
    } catch (const NonConvergence& e) {
        CHECK(e.market_id == 17);
        CHECK(e.residual > 0.0);
    }
}

TEST_CASE("flexible solver: constant supply function returns it directly") {
    DemandSpec demand = small_demand();
    SupplyEvaluator h = [](const Vec& s, const DerivativeMatrix&, const Mat&,
                           const Mat&) { return Vec(s.size(), 14.5); };
    SolverConfig cfg;
    const auto eq = solve_flexible(h, demand, Mat(2, 1, 1.0), {0.1, -0.1},
                                   {0.0, 0.0}, Mat(2, 2, 1.0), Mat::identity(2), cfg);
    CHECK(eq.converged);
    CHECK(eq.prices[0] == doctest::Approx(14.5).epsilon(1e-9));
    CHECK(eq.prices[1] == doctest::Approx(14.5).epsilon(1e-9));
}

TEST_CASE("flexible solver reproduces the structural solution") {
    // supply = structural markup + linear cost: the two solvers must agree
    DemandSpec demand;
    demand.alpha = -0.25;
    demand.beta = {-4.0, 3.0, 6.0};
    PhiloxRng rng(77, 0);
    const std::size_t J = 2;
    Mat x(J, 3, 1.0), w(J, 3, 1.0);
    Vec xi(J), omega(J);
    const Vec gamma{3.0, 6.0, 4.0};
    for (std::size_t j = 0; j < J; ++j) {
        x(j, 1) = 1 + 0.25 * rng.normal();
        x(j, 2) = 1 + 0.25 * rng.normal();
        w(j, 1) = 1 + 0.25 * rng.normal();
        w(j, 2) = 1 + 0.25 * rng.normal();
        xi[j] = rng.normal();
        omega[j] = rng.normal();
    }
    const Vec cost = marginal_cost(w, gamma, omega);
    const Mat h_own = Mat::identity(J);
    SolverConfig cfg;
    const auto structural = solve_structural(demand, x, xi, cost, h_own, cfg);

    SupplyEvaluator flex = [&](const Vec& s, const DerivativeMatrix& D, const Mat& wm,
                               const Mat& H) {
        Vec out = conduct_markup(s, D, H);
        const Vec wg = matvec(wm, gamma);
        for (std::size_t j = 0; j < out.size(); ++j) out[j] += wg[j];
        return out;
    };
    const auto flexible =
        solve_flexible(flex, demand, x, xi, omega, w, h_own, cfg);
    CHECK(flexible.converged);
    for (std::size_t j = 0; j < J; ++j)
        CHECK(flexible.prices[j] == doctest::Approx(structural.prices[j]).epsilon(1e-5));
}

TEST_CASE("solver config validation") {
    SolverConfig cfg;
    cfg.tol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
    cfg = SolverConfig{};
    cfg.damping = 1.5;
    CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}
