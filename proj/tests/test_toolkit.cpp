#include <doctest.h>

#include <cmath>

#include "mergerlab/errors.hpp"
#include "mergerlab/rng.hpp"
#include "mergerlab/toolkit.hpp"

using namespace mergerlab;

namespace {

Dataset bertrand_data(int T, std::uint64_t seed = 314) {
    ScenarioConfig cfg;
    cfg.T = T;
    cfg.seed = seed;
    return split(generate(cfg), 0.8, 1);
}

}  // namespace

TEST_CASE("perfect competition inversion returns prices as costs") {
    const Dataset ds = bertrand_data(30);
    ConductSpec pc{Conduct::PerfectCompetition, 0.0};
    const auto markups = invert_markups(ds, pc, ds.scenario.demand);
    for (std::size_t t = 0; t < ds.markets.size(); ++t)
        for (double mk : markups[t]) CHECK(mk == 0.0);
}

TEST_CASE("true-conduct inversion recovers the true costs") {
    const Dataset ds = bertrand_data(40);
    ConductSpec bertrand{Conduct::Bertrand, 0.0};
    const auto markups = invert_markups(ds, bertrand, ds.scenario.demand);
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        const auto& m = ds.markets[t];
        const Vec truec = marginal_cost(m.w, ds.scenario.gamma, m.omega);
        for (std::size_t j = 0; j < m.J; ++j)
            CHECK(m.prices[j] - markups[t][j] ==
                  doctest::Approx(truec[j]).epsilon(1e-5));
    }
}

TEST_CASE("single-product inversion uses the closed form") {
    MarketData m;
    m.market_id = 0;
    m.J = 1;
    m.prices = {20.0};
    m.shares = {0.25};
    m.x = Mat(1, 3, 1.0);
    m.w = Mat(1, 3, 1.0);
    m.xi = {0.0};
    m.omega = {0.0};
    m.ownership = Mat::identity(1);
    Dataset ds;
    ds.scenario.demand.alpha = -0.25;
    ds.markets.push_back(m);
    ConductSpec b{Conduct::Bertrand, 0.0};
    const auto mk = invert_markups(ds, b, ds.scenario.demand);
    CHECK(mk[0][0] == doctest::Approx(-1.0 / (-0.25 * 0.75)).epsilon(1e-14));
}

TEST_CASE("ols cost fit: exact interpolation and constant-only designs") {
    // noiseless: c = w gamma exactly
    PhiloxRng rng(12, 0);
    Mat w(30, 3, 1.0);
    Vec gamma{3.0, 6.0, 4.0};
    for (std::size_t i = 0; i < 30; ++i) {
        w(i, 1) = rng.normal();
        w(i, 2) = rng.normal();
    }
    const Vec c = matvec(w, gamma);
    const OlsFit fit = fit_costs(c, w);
    for (int k = 0; k < 3; ++k)
        CHECK(fit.gamma[k] == doctest::Approx(gamma[k]).epsilon(1e-10));
    for (double r : fit.residuals) CHECK(std::abs(r) < 1e-10);

    // constant column only: gamma is the mean
    Mat ones(5, 1, 1.0);
    const Vec vals{1.0, 2.0, 3.0, 4.0, 10.0};
    const OlsFit mean_fit = fit_costs(vals, ones);
    CHECK(mean_fit.gamma[0] == doctest::Approx(4.0).epsilon(1e-14));

    // rank-deficient design
    Mat dup(6, 2, 1.0);
    CHECK_THROWS_AS(fit_costs(Vec(6, 1.0), dup), RankDeficientDesign);
}

TEST_CASE("assembled identity: p = markup + w gamma + omega_m") {
    const Dataset ds = bertrand_data(50);
    ConductSpec mono{Conduct::Monopoly, 0.0};
    const ToolkitFit fit = fit_toolkit(ds, mono, ds.scenario.demand);
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        const auto& m = ds.markets[t];
        const Vec wg = matvec(m.w, fit.gamma_hat);
        for (std::size_t j = 0; j < m.J; ++j)
            CHECK(m.prices[j] ==
                  doctest::Approx(fit.markups[t][j] + wg[j] + fit.omega_m[t][j])
                      .epsilon(1e-10));
    }
}

TEST_CASE("true model predicts the true post-merger prices") {
    const Dataset ds = bertrand_data(60);
    const Dataset post = apply_merger(ds, 2, 3);
    ConductSpec bertrand{Conduct::Bertrand, 0.0};
    const ToolkitFit fit = fit_toolkit(ds, bertrand, ds.scenario.demand);
    SolverConfig cfg;
    cfg.max_iter = 5000;
    const MergerPrediction mp = predict_merger(ds, post, fit, ds.scenario.demand, cfg);
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        REQUIRE(mp.converged[t]);
        if (!merger_affects(ds.markets[t], 2, 3)) continue;
        const auto& m = ds.markets[t];
        const Vec cost = marginal_cost(m.w, ds.scenario.gamma, m.omega);
        const auto truth = solve_structural(ds.scenario.demand, m.x, m.xi, cost,
                                            post.markets[t].ownership,
                                            ds.scenario.solver, m.market_id, &m.prices);
        for (std::size_t j = 0; j < m.J; ++j)
            CHECK(mp.prices[t][j] == doctest::Approx(truth.prices[j]).epsilon(1e-4));
    }
}

TEST_CASE("perfect competition predicts no price change") {
    const Dataset ds = bertrand_data(20);
    const Dataset post = apply_merger(ds, 2, 3);
    ConductSpec pc{Conduct::PerfectCompetition, 0.0};
    const ToolkitFit fit = fit_toolkit(ds, pc, ds.scenario.demand);
    SolverConfig cfg;
    const MergerPrediction mp = predict_merger(ds, post, fit, ds.scenario.demand, cfg);
    for (std::size_t t = 0; t < ds.markets.size(); ++t)
        for (std::size_t j = 0; j < ds.markets[t].J; ++j)
            CHECK(mp.prices[t][j] == doctest::Approx(ds.markets[t].prices[j]).epsilon(1e-12));
}

TEST_CASE("profit-weight model is exact on its own data generating process") {
    ScenarioConfig cfg;
    cfg.T = 50;
    cfg.seed = 2024;
    cfg.conduct = {Conduct::ProfitWeight, 0.75};
    Dataset ds = split(generate(cfg), 0.8, 1);
    const Dataset post = apply_merger(ds, 2, 3);
    const ToolkitFit fit = fit_toolkit(ds, cfg.conduct, cfg.demand);
    SolverConfig scfg;
    scfg.max_iter = 5000;
    const MergerPrediction mp = predict_merger(ds, post, fit, cfg.demand, scfg);
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        if (!merger_affects(ds.markets[t], 2, 3)) continue;
        REQUIRE(mp.converged[t]);
        const auto& m = ds.markets[t];
        const Vec cost = marginal_cost(m.w, cfg.gamma, m.omega);
        // true post-merger conduct: kappa across firms, full weight inside
        const auto truth = solve_structural(cfg.demand, m.x, m.xi, cost,
                                            model_conduct_matrix(cfg.conduct,
                                                                 post.markets[t].ownership),
                                            scfg, m.market_id, &m.prices);
        for (std::size_t j = 0; j < m.J; ++j)
            CHECK(mp.prices[t][j] == doctest::Approx(truth.prices[j]).epsilon(1e-4));
    }
}

TEST_CASE("model conduct matrices for merged ownership") {
    Mat own = Mat::identity(3);
    own(1, 2) = own(2, 1) = 1.0;
    ConductSpec pw{Conduct::ProfitWeight, 0.75};
    const Mat h = model_conduct_matrix(pw, own);
    CHECK(h(1, 2) == 1.0);
    CHECK(h(0, 1) == 0.75);
    CHECK(h(0, 2) == 0.75);
    ConductSpec mono{Conduct::Monopoly, 0.0};
    const Mat hm = model_conduct_matrix(mono, own);
    CHECK(hm(0, 1) == 1.0);
}
