#pragma once

#include <cstddef>
#include <vector>

#include "mergerlab/linalg.hpp"

namespace mergerlab {

/// Logit demand: utility alpha * price + x * beta + xi, outside good at zero.
struct DemandSpec {
    double alpha = -0.25;          // price coefficient, must be negative
    Vec beta = {-4.0, 3.0, 6.0};   // taste coefficients, intercept first

    void validate() const;
    /// Mean utilities for one market.
    Vec mean_utility(const Vec& prices, const Mat& x, const Vec& xi) const;
};

/// One market's worth of observations. Products are single-firm at
/// generation time; ownership carries any later merger structure.
struct MarketData {
    int market_id = 0;
    std::size_t J = 0;
    Vec prices;
    Vec shares;
    Mat x;          // J x K_x, constant column first
    Mat w;          // J x K_w, constant column first
    Vec xi;
    Vec omega;      // may be empty for observed data
    Mat ownership;  // J x J

    void validate() const;
};

enum class Conduct { Bertrand, Monopoly, PerfectCompetition, ProfitWeight };

struct ConductSpec {
    Conduct kind = Conduct::Bertrand;
    double kappa = 0.0;  // meaningful only for ProfitWeight

    void validate() const;
    /// Conduct matrix for J single-product firms under this model.
    Mat matrix(std::size_t J) const;
};

struct DerivativeMatrix {
    Mat D;  // (j,k) entry: d s_j / d p_k
};

/// Numerically stable logit shares from mean utilities.
Vec logit_shares(const Vec& delta);

/// Closed-form logit share derivatives with respect to prices.
DerivativeMatrix logit_derivatives(const Vec& shares, double alpha);

/// Markups solving the stacked pricing first-order conditions
/// (-H o D')^{-1} s. PerfectCompetition callers should pass a zero H; see
/// conduct_markup(..., Conduct) for the dispatching form.
Vec conduct_markup(const Vec& shares, const DerivativeMatrix& D, const Mat& H,
                   int market_id = -1);

/// Dispatch on conduct: PerfectCompetition short-circuits to zero markups.
Vec conduct_markup(const Vec& shares, const DerivativeMatrix& D,
                   const ConductSpec& conduct, int market_id = -1);

/// Marginal costs c = w * gamma + omega.
Vec marginal_cost(const Mat& w, const Vec& gamma, const Vec& omega);

/// Decision-unit partition implied by an ownership matrix: products joined by
/// (approximately) unit entries belong to one firm. Returns per-product firm
/// labels, 0-based, in order of first appearance.
std::vector<int> firm_partition(const Mat& H);

int firm_count(const Mat& H);

}  // namespace mergerlab
