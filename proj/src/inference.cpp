#include "mergerlab/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "mergerlab/errors.hpp"
#include "mergerlab/rng.hpp"

namespace mergerlab {

Vec functional_gradient(const NetSpec& h_spec, const ParamVector& theta_hat,
                        const Vec& input_std) {
    return net_grad_theta(h_spec, theta_hat, input_std, {1.0});
}

VarianceEstimate variance(const Vec& beta, const VarianceProblem& prob,
                          const VarianceConfig& cfg) {
    const std::size_t n = prob.ts.size();
    const std::size_t b = prob.theta_hat.size();
    if (beta.size() != b) throw InvalidInput("variance: beta length mismatch");

    NetSpec f_spec = prob.f_spec;
    f_spec.input_dim = prob.ts.z[0].size();
    f_spec.init_seed = cfg.seed + 7;
    ParamVector phi = net_init(f_spec);

    // residuals and moment gradients at theta_hat
    Vec omega(n);
    std::vector<Vec> g(n);  // d omega_i / d theta = -grad h(x_i)
    double w2sum = 0.0, y2sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        omega[i] = prob.ts.y[i] - net_forward(prob.h_spec, prob.theta_hat, prob.ts.x[i])[0];
        g[i] = net_grad_theta(prob.h_spec, prob.theta_hat, prob.ts.x[i], {-1.0});
        w2sum += omega[i] * omega[i];
        y2sum += prob.ts.y[i] * prob.ts.y[i];
    }
    // same concavity floor as training: a perfect fit must not unbound the critic
    Vec w2(n);
    const double w2floor = 1e-8 * w2sum / static_cast<double>(n) +
                           1e-12 * (1.0 + y2sum / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) w2[i] = omega[i] * omega[i] + w2floor;

    Vec gamma(b, 0.0);
    Vec vg(b, 0.0), vp(phi.size(), 0.0);
    Vec gph(phi.size());
    const double dn = static_cast<double>(n);

    auto critic_value = [&](std::size_t i) {
        return net_forward(f_spec, phi, prob.ts.z[i])[0];
    };

    for (int it = 0; it < cfg.iterations; ++it) {
        const double half = static_cast<double>(cfg.iterations) / 2.0;
        const double dec =
            it < cfg.iterations / 2
                ? 1.0
                : std::max(0.0, 1.0 - (static_cast<double>(it) - half) / half);
        for (int cs = 0; cs < cfg.critic_steps; ++cs) {
            std::fill(gph.begin(), gph.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double f = critic_value(i);
                const double ggam = dot(g[i], gamma);
                const double cot = (ggam - f * w2[i] / 2.0) / dn;
                net_accumulate_grad_theta(f_spec, phi, prob.ts.z[i], {cot}, gph);
            }
            for (std::size_t k = 0; k < phi.size(); ++k) {
                vp[k] = cfg.momentum * vp[k] + gph[k];
                phi[k] += cfg.lr_critic * dec * vp[k];
            }
        }
        Vec ggrad(b, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double f = critic_value(i);
            for (std::size_t k = 0; k < b; ++k) ggrad[k] += f * g[i][k] / dn;
        }
        for (std::size_t k = 0; k < b; ++k) {
            ggrad[k] -= 4.0 * beta[k];
            vg[k] = cfg.momentum * vg[k] + ggrad[k];
            gamma[k] -= cfg.lr_gamma * dec * vg[k];
        }
    }

    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double f = critic_value(i);
        lin += f * dot(g[i], gamma);
        quad += f * f * w2[i];
    }
    const double value = lin / dn - quad / (4.0 * dn) - 4.0 * dot(gamma, beta);
    if (!std::isfinite(value)) throw TrainingDiverged("variance: objective non-finite");

    VarianceEstimate est;
    est.objective_value = value;
    est.gamma_hat = gamma;
    double var = -value / 4.0;
    if (var < 0.0) {
        var = 0.0;
        est.clipped = true;
    }
    est.sigma_hat = std::sqrt(var);
    return est;
}

SimultaneousCI simultaneous_ci(const std::vector<Vec>& points_std,
                               const VarianceProblem& prob, double alpha,
                               CiMethod method, const VarianceConfig& vcfg,
                               std::size_t d_max) {
    const std::size_t d = points_std.size();
    if (d < 1) throw InvalidInput("simultaneous_ci: need at least one point");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("simultaneous_ci: bad alpha");
    if (method == CiMethod::HolmExact && d > d_max)
        throw PermutationBudgetExceeded(
            "simultaneous_ci: d exceeds the permutation budget, use Bonferroni");

    const double root_n = std::sqrt(static_cast<double>(prob.ts.size()));
    SimultaneousCI ci;
    ci.method = method;
    ci.alpha = alpha;
    for (std::size_t j = 0; j < d; ++j) {
        ci.point_ids.push_back(static_cast<int>(j));
        ci.centers.push_back(net_forward(prob.h_spec, prob.theta_hat, points_std[j])[0]);
        VarianceConfig vc = vcfg;
        vc.seed = vcfg.seed + j;  // independent inner problems per point
        const Vec beta = functional_gradient(prob.h_spec, prob.theta_hat, points_std[j]);
        ci.sigma.push_back(variance(beta, prob, vc).sigma_hat);
    }

    if (method == CiMethod::Bonferroni) {
        const double t = normal_quantile(1.0 - alpha / (2.0 * static_cast<double>(d)));
        for (std::size_t j = 0; j < d; ++j) {
            ci.lower.push_back(ci.centers[j] - t * ci.sigma[j] / root_n);
            ci.upper.push_back(ci.centers[j] + t * ci.sigma[j] / root_n);
        }
        return ci;
    }

    // critical values at alpha/(d+1-k), k = 1..d
    Vec tcrit(d);
    for (std::size_t k = 0; k < d; ++k) {
        const double ak = alpha / static_cast<double>(d - k);
        tcrit[k] = normal_quantile(1.0 - ak / 2.0);
    }
    ci.lower.assign(d, std::numeric_limits<double>::infinity());
    ci.upper.assign(d, -std::numeric_limits<double>::infinity());
    std::vector<std::size_t> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    do {
        for (std::size_t k = 0; k < d; ++k) {
            const std::size_t j = perm[k];
            const double hw = tcrit[k] * ci.sigma[j] / root_n;
            ci.lower[j] = std::min(ci.lower[j], ci.centers[j] - hw);
            ci.upper[j] = std::max(ci.upper[j], ci.centers[j] + hw);
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    return ci;
}

void write_ci_csv(const std::string& path, const SimultaneousCI& ci) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("write_ci_csv: cannot open " + path);
    f << "point_id,center,sigma,lower,upper,method,alpha\n";
    char buf[512];
    for (std::size_t j = 0; j < ci.centers.size(); ++j) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%s,%g",
                      ci.point_ids[j], ci.centers[j], ci.sigma[j], ci.lower[j],
                      ci.upper[j],
                      ci.method == CiMethod::HolmExact ? "holm_exact" : "bonferroni",
                      ci.alpha);
        f << buf << "\n";
    }
}

}  // namespace mergerlab
