#include "mergerlab/equilibrium.hpp"

#include <cmath>

#include "mergerlab/errors.hpp"

namespace mergerlab {

void SolverConfig::validate() const {
    if (!(tol > 0.0)) throw InvalidInput("SolverConfig: tol must be positive");
    if (max_iter < 1) throw InvalidInput("SolverConfig: max_iter must be >= 1");
    if (!(damping > 0.0 && damping <= 1.0))
        throw InvalidInput("SolverConfig: damping outside (0,1]");
}

namespace {

// zeta map: with D = Lam - Gam (Lam diagonal), the first-order conditions
// rearrange to p = c + Lam^{-1} (H o Gam)(p - c) - Lam^{-1} s, which needs no
// matrix inversion and is a contraction near equilibrium.
Vec zeta_map(const DemandSpec& demand, const Vec& prices, const Vec& shares,
             const Vec& cost, const Mat& H) {
    const std::size_t J = shares.size();
    Vec out(J);
    for (std::size_t j = 0; j < J; ++j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < J; ++k)
            acc += H(j, k) * demand.alpha * shares[j] * shares[k] * (prices[k] - cost[k]);
        out[j] = cost[j] + acc / (demand.alpha * shares[j]) - 1.0 / demand.alpha;
    }
    return out;
}

struct Residual {
    Vec r;
    Vec shares;
};

Residual structural_zeta_residual(const DemandSpec& demand, const Vec& p,
                                  const Mat& x, const Vec& xi, const Vec& cost,
                                  const Mat& H) {
    Vec s = logit_shares(demand.mean_utility(p, x, xi));
    Vec target = zeta_map(demand, p, s, cost, H);
    Vec r(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) r[j] = p[j] - target[j];
    return {std::move(r), std::move(s)};
}

double markup_residual_norm(const DemandSpec& demand, const Vec& p, const Vec& s,
                            const Vec& cost, const Mat& H, int market_id) {
    const auto D = logit_derivatives(s, demand.alpha);
    Vec mk = conduct_markup(s, D, H, market_id);
    double m = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j)
        m = std::max(m, std::abs(p[j] - cost[j] - mk[j]));
    return m;
}

// Damped Newton on a generic residual map. Halves the step when the residual
// norm fails to decrease; caps the step size to stay in the basin.
template <typename ResidualFn>
bool newton_iterate(ResidualFn&& residual, Vec& p, int max_iter, double tol,
                    int& iters) {
    const std::size_t J = p.size();
    Vec r = residual(p);
    for (int it = 0; it < max_iter; ++it, ++iters) {
        if (norm_inf(r) <= tol) return true;
        Mat jac(J, J);
        for (std::size_t k = 0; k < J; ++k) {
            const double dp = 1e-5 * (1.0 + std::abs(p[k]));
            Vec p2 = p;
            p2[k] += dp;
            Vec r2 = residual(p2);
            for (std::size_t j = 0; j < J; ++j) jac(j, k) = (r2[j] - r[j]) / dp;
        }
        Vec step;
        if (!lu_solve(jac, r, step)) return false;
        const double cap = 10.0;
        const double sz = norm_inf(step);
        if (sz > cap)
            for (double& v : step) v *= cap / sz;
        const double rn = norm_inf(r);
        double scale = 1.0;
        for (int half = 0; half < 30; ++half) {
            Vec pn(J);
            for (std::size_t j = 0; j < J; ++j) pn[j] = p[j] - scale * step[j];
            Vec rn2 = residual(pn);
            if (norm_inf(rn2) < rn || scale < 1e-6) {
                p = pn;
                r = std::move(rn2);
                break;
            }
            scale *= 0.5;
        }
    }
    return norm_inf(r) <= tol;
}

}  // namespace

EquilibriumResult solve_structural(const DemandSpec& demand, const Mat& x,
                                   const Vec& xi, const Vec& cost, const Mat& H,
                                   const SolverConfig& cfg, int market_id,
                                   const Vec* start) {
    demand.validate();
    cfg.validate();
    for (double c : cost)
        if (!std::isfinite(c)) throw InvalidInput("solve_structural: non-finite cost");

    Vec p = start ? *start : cost;
    EquilibriumResult res;
    auto residual = [&](const Vec& pp) {
        return structural_zeta_residual(demand, pp, x, xi, cost, H).r;
    };

    auto finish = [&](const Vec& prices) {
        Vec s = logit_shares(demand.mean_utility(prices, x, xi));
        const double rm = markup_residual_norm(demand, prices, s, cost, H, market_id);
        res.prices = prices;
        res.shares = std::move(s);
        res.residual_norm = rm;
        res.converged = rm <= cfg.tol;
        return res.converged;
    };

    int iters = 0;
    const bool use_fp = cfg.method != SolveMethod::NewtonRoot;
    const bool use_newton = cfg.method != SolveMethod::ZetaFixedPoint;
    const int warmup = cfg.method == SolveMethod::Hybrid ? 20 : cfg.max_iter;

    if (use_fp) {
        for (int it = 0; it < warmup; ++it, ++iters) {
            auto zr = structural_zeta_residual(demand, p, x, xi, cost, H);
            if (norm_inf(zr.r) <= 0.1 * cfg.tol &&
                markup_residual_norm(demand, p, zr.shares, cost, H, market_id) <= cfg.tol) {
                res.iterations = iters;
                finish(p);
                return res;
            }
            for (std::size_t j = 0; j < p.size(); ++j)
                p[j] -= cfg.damping * zr.r[j];
        }
    }
    if (use_newton) {
        newton_iterate(residual, p, cfg.max_iter - (cfg.method == SolveMethod::Hybrid ? warmup : 0),
                       0.01 * cfg.tol, iters);
    }
    res.iterations = iters;
    if (!finish(p))
        throw NonConvergence(market_id, res.residual_norm,
                             "solve_structural: no convergence after max_iter");
    return res;
}

EquilibriumResult solve_flexible(const SupplyEvaluator& h, const DemandSpec& demand,
                                 const Mat& x, const Vec& xi, const Vec& omega_hat,
                                 const Mat& w, const Mat& H, const SolverConfig& cfg,
                                 int market_id, const Vec* start) {
    demand.validate();
    cfg.validate();
    const std::size_t J = omega_hat.size();

    auto residual = [&](const Vec& p) {
        Vec s = logit_shares(demand.mean_utility(p, x, xi));
        const auto D = logit_derivatives(s, demand.alpha);
        Vec hv = h(s, D, w, H);
        Vec r(J);
        for (std::size_t j = 0; j < J; ++j) r[j] = p[j] - hv[j] - omega_hat[j];
        return r;
    };

    Vec p = start ? *start : matvec(w, Vec(w.cols(), 1.0));
    int iters = 0;

    if (cfg.method != SolveMethod::NewtonRoot) {
        const int warmup = cfg.method == SolveMethod::Hybrid ? 20 : cfg.max_iter;
        for (int it = 0; it < warmup; ++it, ++iters) {
            Vec r = residual(p);
            if (norm_inf(r) <= cfg.tol) break;
            for (std::size_t j = 0; j < J; ++j) p[j] -= cfg.damping * r[j];
        }
    }
    if (cfg.method != SolveMethod::ZetaFixedPoint)
        newton_iterate(residual, p, cfg.max_iter, cfg.tol, iters);

    EquilibriumResult res;
    res.prices = p;
    res.shares = logit_shares(demand.mean_utility(p, x, xi));
    res.iterations = iters;
    res.residual_norm = norm_inf(residual(p));
    res.converged = res.residual_norm <= cfg.tol;
    if (!res.converged)
        throw NonConvergence(market_id, res.residual_norm,
                             "solve_flexible: no convergence after max_iter");
    return res;
}

}  // namespace mergerlab
