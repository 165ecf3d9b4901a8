#pragma once

#include <cstdint>
#include <string>

#include "mergerlab/vmm.hpp"

namespace mergerlab {

struct VarianceEstimate {
    double sigma_hat = 0.0;   // std. deviation of the functional, price units
    Vec gamma_hat;            // inner solution vector, length b
    double objective_value = 0.0;
    bool clipped = false;     // attained value was negative and got clipped
};

struct VarianceConfig {
    int iterations = 8000;
    int critic_steps = 5;
    double lr_gamma = 5e-2;
    double lr_critic = 2e-1;
    double momentum = 0.9;
    std::uint64_t seed = 0;
};

/// Data and model pieces the variance program needs: the (standardized)
/// training rows, the fitted supply parameters, and the critic class.
struct VarianceProblem {
    const TrainingSet& ts;
    NetSpec h_spec;
    ParamVector theta_hat;
    NetSpec f_spec;  // critic class; input_dim filled from ts
};

/// Gradient of the scalar functional h at a fixed (already standardized)
/// input with respect to theta.
Vec functional_gradient(const NetSpec& h_spec, const ParamVector& theta_hat,
                        const Vec& input_std);

/// Asymptotic variance of beta' theta-direction functionals by the
/// inf-sup program over (gamma, critic). Negative attained values are
/// clipped to zero and flagged.
VarianceEstimate variance(const Vec& beta, const VarianceProblem& prob,
                          const VarianceConfig& cfg);

enum class CiMethod { HolmExact, Bonferroni };

struct SimultaneousCI {
    std::vector<int> point_ids;
    Vec centers;
    Vec sigma;     // per-point sigma_hat (not yet scaled by 1/sqrt(N))
    Vec lower, upper;
    CiMethod method = CiMethod::HolmExact;
    double alpha = 0.05;
};

/// Simultaneous confidence intervals over d evaluation points. Critical
/// values run over alpha/(d+1-k); the exact method takes the union of the
/// interval vectors across all d! index permutations, the Bonferroni variant
/// applies alpha/d everywhere.
SimultaneousCI simultaneous_ci(const std::vector<Vec>& points_std,
                               const VarianceProblem& prob, double alpha,
                               CiMethod method, const VarianceConfig& vcfg,
                               std::size_t d_max = 8);

void write_ci_csv(const std::string& path, const SimultaneousCI& ci);

}  // namespace mergerlab
