#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mergerlab/errors.hpp"
#include "mergerlab/rng.hpp"
#include "mergerlab/vmm.hpp"

using namespace mergerlab;

namespace {

MarketData toy_market(std::size_t J, const Vec& shares, std::uint64_t seed = 3) {
    MarketData m;
    m.market_id = 1;
    m.J = J;
    m.shares = shares;
    m.prices.assign(J, 15.0);
    m.x = Mat(J, 3, 1.0);
    m.w = Mat(J, 3, 1.0);
    m.xi.assign(J, 0.0);
    m.omega.assign(J, 0.0);
    m.ownership = Mat::identity(J);
    PhiloxRng rng(seed, 0);
    for (std::size_t j = 0; j < J; ++j) {
        m.x(j, 1) = 1 + 0.25 * rng.normal();
        m.x(j, 2) = 1 + 0.25 * rng.normal();
        m.w(j, 1) = 1 + 0.25 * rng.normal();
        m.w(j, 2) = 1 + 0.25 * rng.normal();
    }
    return m;
}

// simple linear IV design: 3 instruments, 3 regressors, just identified
struct LinearDesign {
    TrainingSet ts;
    Vec theta0;
};

LinearDesign make_linear_design(std::size_t n, std::uint64_t seed,
                                double noise = 1.0) {
    LinearDesign d;
    d.theta0 = {1.5, -0.8, 2.0};  // slopes for x1,x2 and intercept last
    PhiloxRng rng(seed, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const double z1 = rng.normal(), z2 = rng.normal();
        const double u = noise * rng.normal();
        const double x1 = z1 + 0.5 * rng.normal() + 0.4 * u;
        const double x2 = z2 + 0.5 * rng.normal() - 0.3 * u;
        d.ts.x.push_back({x1, x2});
        d.ts.z.push_back({z1, z2});
        d.ts.y.push_back(d.theta0[0] * x1 + d.theta0[1] * x2 + d.theta0[2] + u);
        d.ts.index.emplace_back(static_cast<int>(i), 0);
    }
    return d;
}

// closed-form 2SLS with intercepts on both sides (test oracle)
Vec tsls_oracle(const TrainingSet& ts) {
    const std::size_t n = ts.size();
    Mat X(n, 3), Z(n, 3);
    Vec y = ts.y;
    for (std::size_t i = 0; i < n; ++i) {
        X(i, 0) = ts.x[i][0];
        X(i, 1) = ts.x[i][1];
        X(i, 2) = 1.0;
        Z(i, 0) = ts.z[i][0];
        Z(i, 1) = ts.z[i][1];
        Z(i, 2) = 1.0;
    }
    // just identified: theta = (Z'X)^{-1} Z'y
    Mat ztx(3, 3);
    Vec zty(3, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 3; ++c) ztx(r, c) += Z(i, r) * X(i, c);
            zty[r] += Z(i, r) * y[i];
        }
    Vec th;
    REQUIRE(lu_solve(ztx, zty, th));
    return th;
}

VmmConfig linear_cfg(std::uint64_t seed) {
    VmmConfig cfg;
    cfg.h_spec.hidden = {};
    cfg.f_spec.hidden = {};
    cfg.stage1_epochs = 3000;
    cfg.stage2_epochs = 5000;
    cfg.lr_model = 5e-2;
    cfg.lr_critic = 2e-1;
    cfg.seed = seed;
    cfg.lr_decay_floor = 0.0;  // decay to zero pins the saddle point
    return cfg;
}

}  // namespace

TEST_CASE("encoding: symmetric duopoly differs only by slot swap") {
    MarketData m = toy_market(2, {0.3, 0.3});
    m.w = Mat(2, 3, 1.0);  // identical cost shifters so rows are comparable
    const auto D = logit_derivatives(m.shares, -0.25);
    SupplyEncoding enc;
    const Vec e0 = encode(m, D, 0, enc);
    const Vec e1 = encode(m, D, 1, enc);
    CHECK(e0 == e1);  // equal shares: own/rival swap is an exact symmetry
}

TEST_CASE("encoding: padding slots are zero for duopolies, none for triopolies") {
    SupplyEncoding enc;
    MarketData duo = toy_market(2, {0.4, 0.2});
    const auto D2 = logit_derivatives(duo.shares, -0.25);
    const Vec e = encode(duo, D2, 0, enc);
    CHECK(e[0] == 0.4);
    CHECK(e[1] == 0.2);
    CHECK(e[2] == 0.0);                       // padded rival share
    CHECK(e[enc.max_products + 2] == 0.0);    // padded rival derivative
    CHECK(e.back() == 2.0);                   // firm count

    MarketData tri = toy_market(3, {0.3, 0.25, 0.2});
    const auto D3 = logit_derivatives(tri.shares, -0.25);
    const Vec e3 = encode(tri, D3, 0, enc);
    CHECK(e3[1] == 0.25);
    CHECK(e3[2] == 0.2);
    CHECK(e3.back() == 3.0);

    MarketData big = toy_market(3, {0.2, 0.2, 0.2});
    big.J = 4;
    big.shares = {0.2, 0.2, 0.2, 0.1};
    big.prices = Vec(4, 15.0);
    big.x = Mat(4, 3, 1.0);
    big.w = Mat(4, 3, 1.0);
    big.xi = Vec(4, 0.0);
    big.omega = Vec(4, 0.0);
    big.ownership = Mat::identity(4);
    const auto D4 = logit_derivatives(big.shares, -0.25);
    CHECK_THROWS_AS(encode(big, D4, 0, enc), EncodingError);
}

TEST_CASE("encoding: rival order in the data does not matter") {
    SupplyEncoding enc;
    MarketData a = toy_market(3, {0.3, 0.25, 0.1});
    const auto Da = logit_derivatives(a.shares, -0.25);
    const Vec ea = encode(a, Da, 0, enc);

    MarketData b = a;  // swap products 2 and 3 everywhere
    std::swap(b.shares[1], b.shares[2]);
    for (std::size_t c = 0; c < 3; ++c) {
        std::swap(b.x(1, c), b.x(2, c));
        std::swap(b.w(1, c), b.w(2, c));
    }
    const auto Db = logit_derivatives(b.shares, -0.25);
    const Vec eb = encode(b, Db, 0, enc);
    for (std::size_t i = 0; i < ea.size(); ++i)
        CHECK(ea[i] == doctest::Approx(eb[i]).epsilon(1e-14));
}

TEST_CASE("encoding aggregates co-owned products to the firm level") {
    SupplyEncoding enc;
    MarketData tri = toy_market(3, {0.3, 0.25, 0.2});
    tri.ownership(1, 2) = tri.ownership(2, 1) = 1.0;  // products 2,3 one firm
    const auto D = logit_derivatives(tri.shares, -0.25);
    const Vec e1 = encode(tri, D, 1, enc);
    CHECK(e1[0] == doctest::Approx(0.45));   // own firm share s2+s3
    CHECK(e1[1] == doctest::Approx(0.3));    // rival firm share
    CHECK(e1[2] == 0.0);                     // only one rival firm now
    // firm-level own derivative equals the block sum = alpha S (1 - S)
    CHECK(e1[3] == doctest::Approx(-0.25 * 0.45 * (1 - 0.45)).epsilon(1e-12));
    const std::size_t base = 2 * enc.max_products + 2;
    CHECK(e1[base + 0] == 1.0);              // one co-owned product
    CHECK(e1[base + 1] == doctest::Approx(0.2));  // partner share
    CHECK(e1[base + 2] == 0.0);              // no cross-firm weights
    CHECK(e1.back() == 2.0);                 // two decision units

    // the outsider sees a single aggregated rival
    const Vec e0 = encode(tri, D, 0, enc);
    CHECK(e0[0] == doctest::Approx(0.3));
    CHECK(e0[1] == doctest::Approx(0.45));
    CHECK(e0[2] == 0.0);
}

TEST_CASE("instruments exclude cost shifters") {
    MarketData m = toy_market(3, {0.3, 0.25, 0.2});
    const Vec z = instruments_for(m, 0);
    REQUIRE(z.size() == 5);
    CHECK(z[0] == m.x(0, 1));
    CHECK(z[1] == m.x(0, 2));
    CHECK(z[2] == doctest::Approx(m.x(1, 1) + m.x(2, 1)));
    CHECK(z[3] == doctest::Approx(m.x(1, 2) + m.x(2, 2)));
    CHECK(z[4] == 2.0);
    const auto names = instrument_names(3);
    for (const auto& n : names) {
        CHECK(n.find("w0") == std::string::npos);
        CHECK(n.find("w1") == std::string::npos);
        CHECK(n.find("w2") == std::string::npos);
    }
}

TEST_CASE("standardizer maps constant columns to exact zero") {
    std::vector<Vec> rows = {{1.0, 5.0, 0.0}, {2.0, 5.0, 0.0}, {4.0, 5.0, 0.0}};
    const Standardizer s = Standardizer::fit(rows);
    CHECK(s.dead[0] == 0);
    CHECK(s.dead[1] == 1);
    CHECK(s.dead[2] == 1);
    const Vec t = s.transform({3.0, 99.0, 7.0});  // out-of-sample values on dead slots
    CHECK(t[1] == 0.0);
    CHECK(t[2] == 0.0);
    CHECK(std::abs(t[0]) < 2.0);
}

TEST_CASE("vmm objective closed-form cases") {
    LinearDesign d = make_linear_design(50, 21);
    NetSpec h{2, {}, 1, Activation::SoftPlus, 0};
    NetSpec f{2, {}, 1, Activation::SoftPlus, 0};

    // f == 0: objective reduces to minus the regularizer
    ParamVector f0(f.param_count(), 0.0);
    ParamVector th(h.param_count(), 0.0);
    CHECK(vmm_objective(h, th, f, f0, {}, d.ts) == doctest::Approx(0.0));
    const double obj_ridge =
        vmm_objective(h, th, f, f0, {}, d.ts, RegKind::Ridge, 0.5);
    CHECK(obj_ridge == doctest::Approx(0.0));  // all parameters zero

    // omega(theta) == 0 with a nonzero critic: only the quadratic term remains
    ParamVector th_true{d.theta0[0], d.theta0[1], d.theta0[2]};
    LinearDesign noiseless = make_linear_design(50, 22, 0.0);
    ParamVector fr{0.3, -0.2, 0.1};
    const double obj = vmm_objective(h, th_true, f, fr, th_true, noiseless.ts);
    CHECK(obj <= 1e-12);
    // and equals -(1/4n) sum (f w~)^2 computed by hand
    double quad = 0.0;
    for (std::size_t i = 0; i < noiseless.ts.size(); ++i) {
        const double fe = fr[0] * noiseless.ts.z[i][0] + fr[1] * noiseless.ts.z[i][1] + fr[2];
        const double om = noiseless.ts.y[i] - (th_true[0] * noiseless.ts.x[i][0] +
                                               th_true[1] * noiseless.ts.x[i][1] + th_true[2]);
        quad += fe * om * fe * om;
    }
    CHECK(obj == doctest::Approx(-quad / (4.0 * noiseless.ts.size())).epsilon(1e-12));
}

TEST_CASE("linear classes reduce to two-stage least squares") {
    LinearDesign d = make_linear_design(1000, 33);
    const Vec oracle = tsls_oracle(d.ts);
    const MinimaxFit mm = minimax_train(d.ts, linear_cfg(5));

    // parameter layout for the affine net: [w1, w2, b]
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
        num += (mm.theta_hat[k] - oracle[k]) * (mm.theta_hat[k] - oracle[k]);
        den += oracle[k] * oracle[k];
    }
    CHECK(std::sqrt(num / den) < 1e-3);
    // stage 1 solves the same program under identity weighting; just
    // identified designs make the weighting irrelevant
    num = 0.0;
    for (std::size_t k = 0; k < 3; ++k)
        num += (mm.theta_tilde[k] - oracle[k]) * (mm.theta_tilde[k] - oracle[k]);
    CHECK(std::sqrt(num / den) < 1e-3);
}

TEST_CASE("noiseless linear data is recovered to near-zero residual mse") {
    LinearDesign d = make_linear_design(400, 44, 0.0);
    const MinimaxFit mm = minimax_train(d.ts, linear_cfg(7));
    NetSpec h{2, {}, 1, Activation::SoftPlus, 0};
    double mse = 0.0;
    for (std::size_t i = 0; i < d.ts.size(); ++i) {
        const double om = d.ts.y[i] - net_forward(h, mm.theta_hat, d.ts.x[i])[0];
        mse += om * om;
    }
    CHECK(mse / d.ts.size() < 1e-3);
}

TEST_CASE("critic ascent is monotone on a fixed batch (plain gradient, linear critic)") {
    LinearDesign d = make_linear_design(300, 55);
    NetSpec h{2, {}, 1, Activation::SoftPlus, 0};
    NetSpec f{2, {}, 1, Activation::SoftPlus, 0};
    ParamVector th{0.5, 0.5, 10.0};
    ParamVector phi(f.param_count(), 0.0);
    const double n = static_cast<double>(d.ts.size());

    auto inner = [&]() {
        double lin = 0.0, quad = 0.0;
        for (std::size_t i = 0; i < d.ts.size(); ++i) {
            const double fe = net_forward(f, phi, d.ts.z[i])[0];
            const double om = d.ts.y[i] - net_forward(h, th, d.ts.x[i])[0];
            lin += fe * om;
            quad += fe * fe;
        }
        return lin / n - quad / (4.0 * n);
    };
    double prev = inner();
    for (int step = 0; step < 60; ++step) {
        ParamVector g(phi.size(), 0.0);
        for (std::size_t i = 0; i < d.ts.size(); ++i) {
            const double fe = net_forward(f, phi, d.ts.z[i])[0];
            const double om = d.ts.y[i] - net_forward(h, th, d.ts.x[i])[0];
            net_accumulate_grad_theta(f, phi, d.ts.z[i], {(om - fe / 2.0) / n}, g);
        }
        for (std::size_t k = 0; k < phi.size(); ++k) phi[k] += 0.2 * g[k];
        const double cur = inner();
        CHECK(cur >= prev - 1e-9);
        prev = cur;
    }
}

TEST_CASE("fit is deterministic bit for bit") {
    ScenarioConfig sc;
    sc.T = 50;
    sc.seed = 77;
    Dataset ds = split(generate(sc), 0.8, 3);
    VmmConfig cfg;
    cfg.stage1_epochs = 300;
    cfg.stage2_epochs = 400;
    cfg.seed = 11;
    SupplyEncoding enc;
    const EstimationResult a = fit(ds, cfg, enc);
    const EstimationResult b = fit(ds, cfg, enc);
    REQUIRE(a.theta_hat.size() == b.theta_hat.size());
    CHECK(a.theta_hat == b.theta_hat);  // exact equality, no tolerance
    CHECK(a.residuals == b.residuals);
}

TEST_CASE("residual identity: stored omega_hat equals p minus h(encode)") {
    ScenarioConfig sc;
    sc.T = 40;
    sc.seed = 88;
    Dataset ds = split(generate(sc), 0.8, 3);
    VmmConfig cfg;
    cfg.stage1_epochs = 200;
    cfg.stage2_epochs = 200;
    SupplyEncoding enc;
    const EstimationResult est = fit(ds, cfg, enc);
    std::size_t i = 0;
    for (const auto& m : ds.markets) {
        const auto D = logit_derivatives(m.shares, sc.demand.alpha);
        for (std::size_t j = 0; j < m.J; ++j, ++i) {
            const double h = est.supply.eval_encoded_raw(encode(m, D, j, enc));
            CHECK(est.residuals[i] == doctest::Approx(m.prices[j] - h).epsilon(1e-12));
        }
    }
    CHECK(est.obs_index.size() == i);
}

TEST_CASE("monotonicity penalty formula and validation") {
    auto h_const = [](const Vec&) { return 3.0; };
    std::vector<Vec> probes = {{0.0, 1.0}, {0.5, 1.0}, {1.0, 1.0}};
    CHECK(monotonicity_penalty(h_const, probes, 0) == 0.0);

    auto h_inc = [](const Vec& v) { return v[0]; };  // unit steps of 0.5
    std::vector<Vec> unit = {{0.0, 1.0}, {1.0, 1.0}, {2.0, 1.0}};
    CHECK(monotonicity_penalty(h_inc, unit, 0) == doctest::Approx(2.0));

    // random function vs a plain loop oracle
    PhiloxRng rng(66, 0);
    std::vector<Vec> grid;
    for (int i = 0; i < 8; ++i) grid.push_back({static_cast<double>(i), 2.0});
    std::vector<double> vals;
    for (int i = 0; i < 8; ++i) vals.push_back(rng.normal());
    auto h_rand = [&](const Vec& v) { return vals[static_cast<int>(v[0])]; };
    double oracle = 0.0;
    for (int i = 1; i < 8; ++i) {
        const double df = std::max(vals[i] - vals[i - 1], 0.0);
        oracle += df * df;
    }
    CHECK(monotonicity_penalty(h_rand, grid, 0) == doctest::Approx(oracle).epsilon(1e-14));

    std::vector<Vec> unsorted = {{1.0, 1.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(monotonicity_penalty(h_const, unsorted, 0), InvalidInput);
    std::vector<Vec> offslot = {{0.0, 1.0}, {1.0, 2.0}};
    CHECK_THROWS_AS(monotonicity_penalty(h_const, offslot, 0), InvalidInput);
}

TEST_CASE("large monotonicity weight forces a nonincreasing fit") {
    // synthetic design whose unconstrained fit is increasing in the
    // derivative slot; the penalty has to flatten it
    TrainingSet ts;
    PhiloxRng rng(91, 0);
    const SupplyEncoding enc;
    const std::size_t slot = enc.own_derivative_slot();
    for (int i = 0; i < 300; ++i) {
        Vec x(enc.dim(3), 0.0);
        x[0] = rng.uniform();
        x[slot] = 2.0 * rng.uniform() - 1.0;
        ts.x.push_back(x);
        ts.z.push_back({x[0], x[slot]});
        ts.y.push_back(3.0 * x[slot] + 0.1 * rng.normal());
        ts.index.emplace_back(i, 0);
    }
    VmmConfig cfg;
    cfg.h_spec.hidden = {3, 3};
    cfg.f_spec.hidden = {};
    cfg.stage1_epochs = 1500;
    cfg.stage2_epochs = 1500;
    cfg.regularizer = RegKind::Monotonicity;
    cfg.reg_lambda = 1e5;
    cfg.seed = 4;
    const MinimaxFit mm = minimax_train(ts, cfg);

    NetSpec h = cfg.h_spec;
    h.input_dim = ts.x[0].size();
    // evaluate along the same probe path the penalty enforces: the
    // coordinate-wise training mean with the derivative slot swept
    Vec base(ts.x[0].size(), 0.0);
    for (const auto& row : ts.x)
        for (std::size_t c = 0; c < base.size(); ++c) base[c] += row[c];
    for (auto& v : base) v /= static_cast<double>(ts.x.size());
    double lo = ts.x[0][slot], hi = ts.x[0][slot];
    for (const auto& row : ts.x) {
        lo = std::min(lo, row[slot]);
        hi = std::max(hi, row[slot]);
    }
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 16; ++i) {
        Vec p = base;
        p[slot] = lo + (hi - lo) * i / 15.0;
        const double v = net_forward(h, mm.theta_hat, p)[0];
        CHECK(v <= prev + 1e-6);
        prev = v;
    }
}

TEST_CASE("training diverges loudly rather than silently") {
    LinearDesign d = make_linear_design(100, 99);
    VmmConfig cfg = linear_cfg(1);
    cfg.lr_model = 1e6;  // absurd learning rate
    cfg.lr_critic = 1e6;
    cfg.stage1_epochs = 2000;
    CHECK_THROWS_AS(minimax_train(d.ts, cfg), TrainingDiverged);
}
