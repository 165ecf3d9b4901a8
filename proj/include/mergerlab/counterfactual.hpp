#pragma once

#include <functional>
#include <map>

#include "mergerlab/toolkit.hpp"
#include "mergerlab/vmm.hpp"

namespace mergerlab {

/// Post-merger prices from the fitted flexible supply function: per market,
/// root of p - h(s(p), D(p), w; H_post) - omega_hat. Estimated residuals act
/// as the fixed pre-merger cost shocks.
MergerPrediction predict_merger_flexible(const Dataset& pre, const Dataset& post,
                                         const EstimationResult& est,
                                         const DemandSpec& demand,
                                         const SolverConfig& cfg);

/// Equilibrium prices given an additive cost shock (loaded on the residual
/// channel of whichever model backs the solver).
using ShockedPriceSolver = std::function<Vec(const Vec& extra_cost)>;

/// Pass-through: entry (j,k) is the price response of product j per unit of
/// product k's cost increase, at a proportional shock of each cost one at a
/// time.
Mat passthrough_matrix(const ShockedPriceSolver& solve, const Vec& cost_ref,
                       double shock_fraction = 0.10);

/// Structural solver factory for pass-through: conduct matrix fixed, costs
/// shifted through the shock.
ShockedPriceSolver structural_price_solver(const DemandSpec& demand, const Mat& x,
                                           const Vec& xi, const Vec& cost,
                                           const Mat& H, const SolverConfig& cfg);

/// Flexible-model counterpart: the shock rides on omega_hat.
ShockedPriceSolver flexible_price_solver(const SupplyFunction& h, const DemandSpec& demand,
                                         const Mat& x, const Vec& xi, const Vec& omega_hat,
                                         const Mat& w, const Mat& H,
                                         const SolverConfig& cfg, const Vec& start);

struct PredictionReport {
    double mse = 0.0;
    std::size_t n_obs = 0;
    std::size_t n_markets = 0;
    Vec percent_error_quantiles;  // 10/25/50/75/90
    std::vector<std::pair<int, double>> per_market_mse;
};

/// Aligned comparison of predicted and true prices over the given markets.
PredictionReport prediction_error_report(const std::vector<Vec>& predicted,
                                         const std::vector<Vec>& truth,
                                         const std::vector<int>& market_ids,
                                         const Vec* weights = nullptr);

}  // namespace mergerlab
