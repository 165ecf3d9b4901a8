#pragma once

#include <functional>

#include "mergerlab/market_model.hpp"

namespace mergerlab {

enum class SolveMethod { ZetaFixedPoint, NewtonRoot, Hybrid };

struct SolverConfig {
    double tol = 1e-6;       // residual tolerance, price units
    int max_iter = 1000;
    double damping = 1.0;    // fixed-point step factor in (0,1]
    SolveMethod method = SolveMethod::Hybrid;

    void validate() const;
};

struct EquilibriumResult {
    Vec prices;
    Vec shares;
    int iterations = 0;
    double residual_norm = 0.0;
    bool converged = false;
};

/// Pricing equilibrium p = c + markup(p) under ownership/conduct matrix H.
/// The fixed-point path iterates the inversion-free zeta map; convergence is
/// certified on the markup-form residual ||p - c - (-H o D')^{-1} s||_inf.
EquilibriumResult solve_structural(const DemandSpec& demand, const Mat& x,
                                   const Vec& xi, const Vec& cost, const Mat& H,
                                   const SolverConfig& cfg, int market_id = -1,
                                   const Vec* start = nullptr);

/// Per-market supply values h_j(s, D, w; H) for all products at once.
using SupplyEvaluator =
    std::function<Vec(const Vec& shares, const DerivativeMatrix& D, const Mat& w,
                      const Mat& H)>;

/// Root of p - h(s(p), D(p), w; H) - omega_hat = 0.
EquilibriumResult solve_flexible(const SupplyEvaluator& h, const DemandSpec& demand,
                                 const Mat& x, const Vec& xi, const Vec& omega_hat,
                                 const Mat& w, const Mat& H, const SolverConfig& cfg,
                                 int market_id = -1, const Vec* start = nullptr);

}  // namespace mergerlab
