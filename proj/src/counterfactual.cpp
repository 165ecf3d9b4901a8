#include "mergerlab/counterfactual.hpp"

#include <algorithm>
#include <cmath>

#include "mergerlab/errors.hpp"

namespace mergerlab {

MergerPrediction predict_merger_flexible(const Dataset& pre, const Dataset& post,
                                         const EstimationResult& est,
                                         const DemandSpec& demand,
                                         const SolverConfig& cfg) {
    if (pre.markets.size() != post.markets.size())
        throw InvalidInput("predict_merger_flexible: dataset size mismatch");

    // omega_hat lookup by (market_id, product)
    std::map<std::pair<int, std::size_t>, double> omhat;
    for (std::size_t i = 0; i < est.residuals.size(); ++i)
        omhat[est.obs_index[i]] = est.residuals[i];

    MergerPrediction out;
    out.prices.resize(pre.markets.size());
    out.converged.assign(pre.markets.size(), false);
    const auto h = est.supply.evaluator();
    for (std::size_t t = 0; t < pre.markets.size(); ++t) {
        const auto& m = pre.markets[t];
        Vec om(m.J);
        for (std::size_t j = 0; j < m.J; ++j) {
            auto it = omhat.find({m.market_id, j});
            if (it == omhat.end())
                throw InvalidInput("predict_merger_flexible: missing residual");
            om[j] = it->second;
        }
        try {
            auto eq = solve_flexible(h, demand, m.x, m.xi, om, m.w,
                                     post.markets[t].ownership, cfg, m.market_id,
                                     &m.prices);
            out.prices[t] = eq.prices;
            out.converged[t] = true;
        } catch (const NonConvergence&) {
            out.failed_market_ids.push_back(m.market_id);
        } catch (const SingularMarkupSystem&) {
            out.failed_market_ids.push_back(m.market_id);
        }
    }
    return out;
}

Mat passthrough_matrix(const ShockedPriceSolver& solve, const Vec& cost_ref,
                       double shock_fraction) {
    const std::size_t J = cost_ref.size();
    const Vec base = solve(Vec(J, 0.0));
    Mat pt(J, J);
    for (std::size_t k = 0; k < J; ++k) {
        Vec shock(J, 0.0);
        const double dc = shock_fraction * cost_ref[k];
        if (dc == 0.0) throw InvalidInput("passthrough_matrix: zero reference cost");
        shock[k] = dc;
        const Vec shocked = solve(shock);
        for (std::size_t j = 0; j < J; ++j) pt(j, k) = (shocked[j] - base[j]) / dc;
    }
    return pt;
}

ShockedPriceSolver structural_price_solver(const DemandSpec& demand, const Mat& x,
                                           const Vec& xi, const Vec& cost,
                                           const Mat& H, const SolverConfig& cfg) {
    return [=](const Vec& extra) {
        Vec c = cost;
        for (std::size_t j = 0; j < c.size(); ++j) c[j] += extra[j];
        return solve_structural(demand, x, xi, c, H, cfg).prices;
    };
}

ShockedPriceSolver flexible_price_solver(const SupplyFunction& h, const DemandSpec& demand,
                                         const Mat& x, const Vec& xi, const Vec& omega_hat,
                                         const Mat& w, const Mat& H,
                                         const SolverConfig& cfg, const Vec& start) {
    const auto ev = h.evaluator();
    return [=](const Vec& extra) {
        Vec om = omega_hat;
        for (std::size_t j = 0; j < om.size(); ++j) om[j] += extra[j];
        return solve_flexible(ev, demand, x, xi, om, w, H, cfg, -1, &start).prices;
    };
}

PredictionReport prediction_error_report(const std::vector<Vec>& predicted,
                                         const std::vector<Vec>& truth,
                                         const std::vector<int>& market_ids,
                                         const Vec* weights) {
    if (predicted.size() != truth.size() || predicted.size() != market_ids.size())
        throw InvalidInput("prediction_error_report: misaligned inputs");
    PredictionReport rep;
    Vec pct;
    double wsum = 0.0, werr = 0.0;
    std::size_t obs = 0;
    for (std::size_t t = 0; t < predicted.size(); ++t) {
        if (predicted[t].size() != truth[t].size())
            throw InvalidInput("prediction_error_report: misaligned market " +
                               std::to_string(market_ids[t]));
        double mse_t = 0.0;
        for (std::size_t j = 0; j < predicted[t].size(); ++j) {
            const double e = predicted[t][j] - truth[t][j];
            const double wgt = weights ? (*weights)[obs] : 1.0;
            werr += wgt * e * e;
            wsum += wgt;
            mse_t += e * e;
            pct.push_back(100.0 * e / truth[t][j]);
            ++obs;
        }
        rep.per_market_mse.emplace_back(market_ids[t],
                                        mse_t / static_cast<double>(predicted[t].size()));
    }
    if (obs == 0) throw InvalidInput("prediction_error_report: empty input");
    rep.mse = werr / wsum;
    rep.n_obs = obs;
    rep.n_markets = predicted.size();
    std::sort(pct.begin(), pct.end());
    for (double q : {0.10, 0.25, 0.50, 0.75, 0.90}) {
        const double pos = q * static_cast<double>(pct.size() - 1);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        rep.percent_error_quantiles.push_back(
            lo + 1 < pct.size() ? pct[lo] * (1.0 - frac) + pct[lo + 1] * frac : pct[lo]);
    }
    return rep;
}

}  // namespace mergerlab
