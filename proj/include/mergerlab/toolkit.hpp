#pragma once

#include "mergerlab/datagen.hpp"
#include "mergerlab/equilibrium.hpp"

namespace mergerlab {

/// Imposed-conduct cost recovery: markups at the observed data under the
/// model's assumed conduct matrix, costs as the difference, cost
/// coefficients by OLS on the train split.
struct ToolkitFit {
    ConductSpec model;
    Vec gamma_hat;
    std::vector<Vec> markups;  // per market, observed-data markups
    std::vector<Vec> omega_m;  // per market, c_m - w gamma_hat
    double r2 = 0.0;
};

/// Conduct matrix the model assumes for a market with ownership H: Bertrand
/// reads ownership as is, Monopoly joins everything, ProfitWeight puts kappa
/// on cross-firm pairs and full weight within a firm.
Mat model_conduct_matrix(const ConductSpec& model, const Mat& ownership);

/// Markups implied by the imposed model at observed prices and shares.
std::vector<Vec> invert_markups(const Dataset& ds, const ConductSpec& model,
                                const DemandSpec& demand);

struct OlsFit {
    Vec gamma;
    Vec residuals;
    double r2;
};

/// OLS of recovered costs on cost shifters (QR-based normal equations).
OlsFit fit_costs(const Vec& c_m, const Mat& w);

/// invert + regress, gamma on the train split, residuals everywhere.
ToolkitFit fit_toolkit(const Dataset& ds, const ConductSpec& model,
                       const DemandSpec& demand);

struct MergerPrediction {
    std::vector<Vec> prices;          // per market; empty when not converged
    std::vector<bool> converged;
    std::vector<int> failed_market_ids;
};

/// Post-merger prices for the imposed model: recovered costs stay fixed, the
/// pricing game is re-solved at the post-merger ownership. Perfect
/// competition predicts no change (prices equal recovered costs). The model's
/// conduct assumption shapes cost recovery; the counterfactual game is played
/// at the post-merger structure it implies.
MergerPrediction predict_merger(const Dataset& pre, const Dataset& post,
                                const ToolkitFit& fit, const DemandSpec& demand,
                                const SolverConfig& cfg);

/// Systematic in-sample price prediction (markup + w gamma, shocks left
/// out); the holdout-fit comparison works off these.
std::vector<Vec> toolkit_fitted_prices(const Dataset& ds, const ToolkitFit& fit);

void save_toolkit(const std::string& dir, const std::string& label,
                  const Dataset& ds, const ToolkitFit& fit);

}  // namespace mergerlab
