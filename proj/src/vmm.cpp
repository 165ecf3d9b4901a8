#include "mergerlab/vmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "mergerlab/errors.hpp"

namespace mergerlab {

std::size_t SupplyEncoding::dim(std::size_t kw) const {
    // shares block + optional derivative block + own cost shifters +
    // ownership features + firm count
    std::size_t d = max_products;
    if (include_derivatives) d += max_products;
    d += kw - 1;
    d += 3 + 1;
    return d;
}

Vec encode_state(const Vec& shares, const DerivativeMatrix& D, const Mat& w,
                 const Mat& H, std::size_t j, const SupplyEncoding& enc) {
    const std::size_t J = shares.size();
    if (J > enc.max_products)
        throw EncodingError("encode: market exceeds max_products");
    if (j >= J) throw EncodingError("encode: product index out of range");
    if (H.rows() != J || w.rows() != J || D.D.rows() != J)
        throw EncodingError("encode: dimension mismatch");

    const auto lab = firm_partition(H);
    const int F = *std::max_element(lab.begin(), lab.end()) + 1;
    Vec firm_share(F, 0.0);
    for (std::size_t k = 0; k < J; ++k) firm_share[lab[k]] += shares[k];

    // firm-level derivative matrix: block sums of D
    Mat DF(F, F, 0.0);
    for (std::size_t r = 0; r < J; ++r)
        for (std::size_t c = 0; c < J; ++c) DF(lab[r], lab[c]) += D.D(r, c);

    const int f = lab[j];
    std::vector<int> rivals;
    for (int g = 0; g < F; ++g)
        if (g != f) rivals.push_back(g);
    std::sort(rivals.begin(), rivals.end(), [&](int a, int b) {
        if (firm_share[a] != firm_share[b]) return firm_share[a] > firm_share[b];
        return a < b;
    });

    Vec row;
    row.reserve(enc.dim(w.cols()));
    row.push_back(firm_share[f]);
    for (std::size_t slot = 0; slot + 1 < enc.max_products; ++slot)
        row.push_back(slot < rivals.size() ? firm_share[rivals[slot]] : 0.0);
    if (enc.include_derivatives) {
        row.push_back(DF(f, f));
        for (std::size_t slot = 0; slot + 1 < enc.max_products; ++slot)
            row.push_back(slot < rivals.size() ? DF(f, rivals[slot]) : 0.0);
    }
    for (std::size_t c = 1; c < w.cols(); ++c) row.push_back(w(j, c));

    int co_count = 0;
    double co_sum = 0.0;
    double cross_weight = 0.0;
    for (std::size_t k = 0; k < J; ++k) {
        if (k == j) continue;
        if (lab[k] == f) {
            ++co_count;
            co_sum += shares[k];
        } else {
            cross_weight = std::max(cross_weight, H(j, k));
        }
    }
    row.push_back(static_cast<double>(co_count));
    row.push_back(co_sum);
    row.push_back(cross_weight);
    row.push_back(static_cast<double>(F));
    return row;
}

Vec encode(const MarketData& market, const DerivativeMatrix& D, std::size_t j,
           const SupplyEncoding& enc) {
    return encode_state(market.shares, D, market.w, market.ownership, j, enc);
}

Vec instruments_for(const MarketData& market, std::size_t j) {
    const std::size_t kx = market.x.cols();
    Vec z;
    z.reserve(2 * (kx - 1) + 1);
    for (std::size_t c = 1; c < kx; ++c) z.push_back(market.x(j, c));
    for (std::size_t c = 1; c < kx; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < market.J; ++k)
            if (k != j) s += market.x(k, c);
        z.push_back(s);
    }
    z.push_back(static_cast<double>(market.J - 1));
    return z;
}

std::vector<std::string> instrument_names(std::size_t kx) {
    std::vector<std::string> names;
    for (std::size_t c = 1; c < kx; ++c) names.push_back("own_x" + std::to_string(c));
    for (std::size_t c = 1; c < kx; ++c) names.push_back("rival_x" + std::to_string(c) + "_sum");
    names.push_back("rival_count");
    return names;
}

Standardizer Standardizer::fit(const std::vector<Vec>& rows) {
    if (rows.empty()) throw InvalidInput("Standardizer: no rows");
    const std::size_t d = rows[0].size();
    Standardizer s;
    s.mu.assign(d, 0.0);
    s.sd.assign(d, 0.0);
    s.dead.assign(d, 0);
    for (const auto& r : rows)
        for (std::size_t c = 0; c < d; ++c) s.mu[c] += r[c];
    for (std::size_t c = 0; c < d; ++c) s.mu[c] /= static_cast<double>(rows.size());
    for (const auto& r : rows)
        for (std::size_t c = 0; c < d; ++c) {
            const double v = r[c] - s.mu[c];
            s.sd[c] += v * v;
        }
    for (std::size_t c = 0; c < d; ++c) {
        s.sd[c] = std::sqrt(s.sd[c] / static_cast<double>(rows.size()));
        if (s.sd[c] < 1e-9) {
            s.dead[c] = 1;
            s.sd[c] = 1.0;
        }
    }
    return s;
}

Vec Standardizer::transform(const Vec& row) const {
    if (row.size() != mu.size()) throw EncodingError("Standardizer: dimension mismatch");
    Vec out(row.size());
    for (std::size_t c = 0; c < row.size(); ++c)
        out[c] = dead[c] ? 0.0 : (row[c] - mu[c]) / sd[c];
    return out;
}

void VmmConfig::validate() const {
    if (stage1_epochs < 1 || stage2_epochs < 1)
        throw InvalidInput("VmmConfig: epochs must be positive");
    if (critic_steps_per_model_step < 1)
        throw InvalidInput("VmmConfig: critic_steps_per_model_step must be >= 1");
    if (!(lr_model > 0.0 && lr_critic > 0.0))
        throw InvalidInput("VmmConfig: learning rates must be positive");
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
        throw InvalidInput("VmmConfig: validation_fraction outside (0,0.5)");
}

TrainingSet build_training_set(const Dataset& ds, const SupplyEncoding& enc,
                               bool train_only) {
    TrainingSet ts;
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        if (train_only) {
            if (ds.split_labels.empty()) throw InvalidInput("build_training_set: no split");
            if (ds.split_labels[t] != Split::Train) continue;
        }
        const auto& m = ds.markets[t];
        const auto D = logit_derivatives(m.shares, ds.scenario.demand.alpha);
        for (std::size_t j = 0; j < m.J; ++j) {
            ts.x.push_back(encode(m, D, j, enc));
            ts.z.push_back(instruments_for(m, j));
            ts.y.push_back(m.prices[j]);
            ts.index.emplace_back(m.market_id, j);
        }
    }
    return ts;
}

namespace {

std::vector<Vec> monotonicity_probes(const std::vector<Vec>& rows, std::size_t slot,
                                     std::size_t n_probe = 16) {
    Vec base(rows[0].size(), 0.0);
    double lo = rows[0][slot], hi = rows[0][slot];
    for (const auto& r : rows) {
        for (std::size_t c = 0; c < base.size(); ++c) base[c] += r[c];
        lo = std::min(lo, r[slot]);
        hi = std::max(hi, r[slot]);
    }
    for (double& v : base) v /= static_cast<double>(rows.size());
    std::vector<Vec> probes;
    for (std::size_t i = 0; i < n_probe; ++i) {
        Vec p = base;
        p[slot] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_probe - 1);
        probes.push_back(std::move(p));
    }
    return probes;
}

struct Momentum {
    Vec v;
    explicit Momentum(std::size_t n) : v(n, 0.0) {}
    void step(Vec& params, const Vec& grad, double lr, double mu, double sign) {
        for (std::size_t i = 0; i < params.size(); ++i) {
            v[i] = mu * v[i] + grad[i];
            params[i] += sign * lr * v[i];
        }
    }
};

double forward1(const NetSpec& spec, const ParamVector& th, const Vec& in) {
    return net_forward(spec, th, in)[0];
}

}  // namespace

double monotonicity_penalty(const std::function<double(const Vec&)>& h,
                            const std::vector<Vec>& probes, std::size_t varying_slot) {
    if (probes.size() < 2) throw InvalidInput("monotonicity_penalty: need >= 2 probes");
    const std::size_t d = probes[0].size();
    for (std::size_t i = 1; i < probes.size(); ++i) {
        if (probes[i].size() != d) throw InvalidInput("monotonicity_penalty: ragged probes");
        if (!(probes[i][varying_slot] > probes[i - 1][varying_slot]))
            throw InvalidInput("monotonicity_penalty: probes not sorted increasing");
        for (std::size_t c = 0; c < d; ++c)
            if (c != varying_slot && std::abs(probes[i][c] - probes[0][c]) > 1e-12)
                throw InvalidInput("monotonicity_penalty: probes differ off the varying slot");
    }
    double pen = 0.0;
    double prev = h(probes[0]);
    for (std::size_t i = 1; i < probes.size(); ++i) {
        const double cur = h(probes[i]);
        const double dpos = std::max(cur - prev, 0.0);
        pen += dpos * dpos;
        prev = cur;
    }
    return pen;
}

double vmm_objective(const NetSpec& h_spec, const ParamVector& theta,
                     const NetSpec& f_spec, const ParamVector& f_params,
                     const ParamVector& theta_tilde, const TrainingSet& batch,
                     RegKind reg, double reg_lambda) {
    if (batch.size() == 0) throw InvalidInput("vmm_objective: empty batch");
    const double n = static_cast<double>(batch.size());
    double lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double fe = forward1(f_spec, f_params, batch.z[i]);
        const double om = batch.y[i] - forward1(h_spec, theta, batch.x[i]);
        const double omt = theta_tilde.empty()
                               ? 1.0
                               : batch.y[i] - forward1(h_spec, theta_tilde, batch.x[i]);
        lin += fe * om;
        quad += fe * omt * fe * omt;
    }
    double r = 0.0;
    if (reg == RegKind::Ridge) {
        for (double v : theta) r += v * v;
        for (double v : f_params) r += v * v;
        r *= reg_lambda;
    } else if (reg == RegKind::Monotonicity) {
        const auto probes = monotonicity_probes(batch.x, SupplyEncoding{}.own_derivative_slot());
        r = reg_lambda * monotonicity_penalty(
                             [&](const Vec& p) { return forward1(h_spec, theta, p); },
                             probes, SupplyEncoding{}.own_derivative_slot());
    }
    return lin / n - quad / (4.0 * n) - r;
}

MinimaxFit minimax_train(const TrainingSet& ts, const VmmConfig& cfg) {
    cfg.validate();
    const std::size_t n = ts.size();
    if (n == 0) throw InvalidInput("minimax_train: empty training set");

    NetSpec h_spec = cfg.h_spec;
    NetSpec f_spec = cfg.f_spec;
    h_spec.input_dim = ts.x[0].size();
    f_spec.input_dim = ts.z[0].size();
    h_spec.init_seed = cfg.seed;
    f_spec.init_seed = cfg.seed + 1;

    ParamVector theta = net_init(h_spec);
    // warm start the output level at the unconditional mean
    double ymean = std::accumulate(ts.y.begin(), ts.y.end(), 0.0) / static_cast<double>(n);
    theta.back() = ymean;
    ParamVector phi = net_init(f_spec);

    const std::size_t nv = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                        static_cast<double>(n) *
                                                        cfg.validation_fraction));
    const std::size_t v0 = n - nv;
    const double dn = static_cast<double>(n);

    MinimaxFit out;
    Vec omega(n), fe(n);

    auto eval_resid = [&](const ParamVector& th) {
        for (std::size_t i = 0; i < n; ++i) omega[i] = ts.y[i] - forward1(h_spec, th, ts.x[i]);
    };

    auto val_moment_norm = [&](const ParamVector& th) {
        const std::size_t dz = ts.z[0].size();
        Vec mom(dz, 0.0);
        for (std::size_t i = v0; i < n; ++i) {
            const double om = ts.y[i] - forward1(h_spec, th, ts.x[i]);
            for (std::size_t c = 0; c < dz; ++c) mom[c] += ts.z[i][c] * om;
        }
        double s = 0.0;
        for (double v : mom) s += v * v;
        return std::sqrt(s) / static_cast<double>(nv);
    };

    std::vector<Vec> probes;
    if (cfg.regularizer == RegKind::Monotonicity)
        probes = monotonicity_probes(ts.x, SupplyEncoding{}.own_derivative_slot());

    auto run_stage = [&](int stage, int epochs, const Vec* w2 /* squared stage-1 residuals */) {
        Momentum mth(theta.size()), mph(phi.size());
        ParamVector gth(theta.size()), gph(phi.size());
        double best_val = std::numeric_limits<double>::infinity();
        ParamVector best_theta;
        int stale = 0;
        const Vec cot1{1.0};
        for (int ep = 0; ep < epochs; ++ep) {
            const double half = static_cast<double>(epochs) / 2.0;
            const double dec = ep < epochs / 2
                                   ? 1.0
                                   : std::max(cfg.lr_decay_floor,
                                              1.0 - (static_cast<double>(ep) - half) / half);
            for (int cs = 0; cs < cfg.critic_steps_per_model_step; ++cs) {
                eval_resid(theta);
                std::fill(gph.begin(), gph.end(), 0.0);
                for (std::size_t i = 0; i < n; ++i) {
                    const double f = forward1(f_spec, phi, ts.z[i]);
                    const double wgt = w2 ? (*w2)[i] : 1.0;
                    const double cot = (omega[i] - f * wgt / 2.0) / dn;
                    net_accumulate_grad_theta(f_spec, phi, ts.z[i], {cot}, gph);
                }
                if (cfg.regularizer == RegKind::Ridge)
                    for (std::size_t i = 0; i < phi.size(); ++i)
                        gph[i] -= 2.0 * cfg.reg_lambda * phi[i];
                mph.step(phi, gph, cfg.lr_critic * dec, cfg.momentum, +1.0);
            }
            std::fill(gth.begin(), gth.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                const double f = forward1(f_spec, phi, ts.z[i]);
                fe[i] = f;
                net_accumulate_grad_theta(h_spec, theta, ts.x[i], {-f / dn}, gth);
            }
            if (cfg.regularizer == RegKind::Ridge) {
                for (std::size_t i = 0; i < theta.size(); ++i)
                    gth[i] += 2.0 * cfg.reg_lambda * theta[i];
            } else if (cfg.regularizer == RegKind::Monotonicity) {
                double prev = forward1(h_spec, theta, probes[0]);
                Vec gprev = net_grad_theta(h_spec, theta, probes[0], cot1);
                for (std::size_t i = 1; i < probes.size(); ++i) {
                    const double cur = forward1(h_spec, theta, probes[i]);
                    Vec gcur = net_grad_theta(h_spec, theta, probes[i], cot1);
                    const double dpos = cur - prev;
                    if (dpos > 0.0)
                        for (std::size_t k = 0; k < theta.size(); ++k)
                            gth[k] += cfg.reg_lambda * 2.0 * dpos * (gcur[k] - gprev[k]);
                    prev = cur;
                    gprev = std::move(gcur);
                }
            }
            mth.step(theta, gth, cfg.lr_model * dec, cfg.momentum, -1.0);

            if (ep % 100 == 0 || ep == epochs - 1) {
                eval_resid(theta);
                double lin = 0.0, quad = 0.0, mse = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const double wgt = w2 ? (*w2)[i] : 1.0;
                    lin += fe[i] * omega[i];
                    quad += fe[i] * fe[i] * wgt;
                    mse += omega[i] * omega[i];
                }
                const double obj = lin / dn - quad / (4.0 * dn);
                if (!std::isfinite(obj))
                    throw TrainingDiverged("minimax_train: objective became non-finite");
                out.trace.push_back({stage, ep, obj, mse / dn});
            }
            if (stage == 2 && ep > epochs / 4 && ep % cfg.snapshot_interval == 0) {
                const double v = val_moment_norm(theta);
                if (v < best_val) {
                    best_val = v;
                    best_theta = theta;
                    stale = 0;
                } else if (++stale >= cfg.early_stop_patience &&
                           cfg.early_stop_patience > 0) {
                    break;
                }
            }
        }
        if (stage == 2 && !best_theta.empty()) theta = best_theta;
    };

    run_stage(1, cfg.stage1_epochs, nullptr);
    out.theta_tilde = theta;
    eval_resid(theta);
    Vec w2(n);
    double w2sum = 0.0, y2sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w2[i] = omega[i] * omega[i];
        w2sum += w2[i];
        y2sum += ts.y[i] * ts.y[i];
    }
    // floor keeps the critic problem strictly concave when stage-one
    // residuals vanish (near-noiseless data); negligible otherwise
    const double w2floor = 1e-8 * w2sum / dn + 1e-12 * (1.0 + y2sum / dn);
    for (std::size_t i = 0; i < n; ++i) w2[i] += w2floor;

    // fresh critic for the weighted stage
    f_spec.init_seed = cfg.seed + 2;
    phi = net_init(f_spec);
    run_stage(2, cfg.stage2_epochs, &w2);

    out.theta_hat = theta;
    out.f_params = phi;
    return out;
}

double SupplyFunction::eval_encoded_raw(const Vec& raw_row) const {
    return net_forward(spec, theta, scaler.transform(raw_row))[0];
}

Vec SupplyFunction::eval_market(const Vec& shares, const DerivativeMatrix& D,
                                const Mat& w, const Mat& H) const {
    Vec out(shares.size());
    for (std::size_t j = 0; j < shares.size(); ++j)
        out[j] = eval_encoded_raw(encode_state(shares, D, w, H, j, encoding));
    return out;
}

SupplyEvaluator SupplyFunction::evaluator() const {
    return [fn = *this](const Vec& s, const DerivativeMatrix& D, const Mat& w,
                        const Mat& H) { return fn.eval_market(s, D, w, H); };
}

EstimationResult fit(const Dataset& ds, const VmmConfig& cfg, const SupplyEncoding& enc) {
    cfg.validate();
    TrainingSet raw = build_training_set(ds, enc, true);
    if (raw.size() == 0) throw InvalidInput("fit: empty train split");

    EstimationResult est;
    est.supply.encoding = enc;
    est.supply.scaler = Standardizer::fit(raw.x);
    Standardizer zscale = Standardizer::fit(raw.z);

    TrainingSet ts;
    ts.y = raw.y;
    ts.index = raw.index;
    ts.x.reserve(raw.size());
    ts.z.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ts.x.push_back(est.supply.scaler.transform(raw.x[i]));
        ts.z.push_back(zscale.transform(raw.z[i]));
    }

    MinimaxFit mm = minimax_train(ts, cfg);
    est.theta_hat = mm.theta_hat;
    est.theta_tilde = mm.theta_tilde;
    est.f_params = mm.f_params;
    est.trace = std::move(mm.trace);
    est.h_spec = cfg.h_spec;
    est.h_spec.input_dim = ts.x[0].size();
    est.h_spec.init_seed = cfg.seed;
    est.f_spec = cfg.f_spec;
    est.f_spec.input_dim = ts.z[0].size();
    est.f_spec.init_seed = cfg.seed + 2;
    est.supply.spec = est.h_spec;
    est.supply.theta = est.theta_hat;

    // residual identity over the whole dataset, split MSEs on the side
    double tr = 0.0, te = 0.0;
    std::size_t ntr = 0, nte = 0;
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        const auto& m = ds.markets[t];
        const auto D = logit_derivatives(m.shares, ds.scenario.demand.alpha);
        for (std::size_t j = 0; j < m.J; ++j) {
            const double hv = est.supply.eval_encoded_raw(encode(m, D, j, enc));
            const double om = m.prices[j] - hv;
            est.obs_index.emplace_back(m.market_id, j);
            est.residuals.push_back(om);
            if (!ds.split_labels.empty() && ds.split_labels[t] == Split::Test) {
                te += om * om;
                ++nte;
            } else {
                tr += om * om;
                ++ntr;
            }
        }
    }
    est.train_mse = ntr ? tr / static_cast<double>(ntr) : 0.0;
    est.test_mse = nte ? te / static_cast<double>(nte) : 0.0;
    return est;
}

void save_estimation(const std::string& dir, const EstimationResult& est) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    net_save(dir + "/h.net", est.h_spec, est.theta_hat);
    net_save(dir + "/f.net", est.f_spec, est.f_params);

    std::ofstream res(dir + "/residuals.csv", std::ios::binary);
    res << "market_id,product,omega_hat\n";
    char buf[64];
    for (std::size_t i = 0; i < est.residuals.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", est.residuals[i]);
        res << est.obs_index[i].first << "," << (est.obs_index[i].second + 1) << ","
            << buf << "\n";
    }

    std::ofstream log(dir + "/training_log.txt", std::ios::binary);
    log << "stage epoch objective train_mse\n";
    for (const auto& row : est.trace) {
        std::snprintf(buf, sizeof(buf), "%d %d %.10g %.10g", row.stage, row.epoch,
                      row.objective, row.train_mse);
        log << buf << "\n";
    }

    std::ofstream pipe(dir + "/supply_pipeline.txt", std::ios::binary);
    pipe << "max_products " << est.supply.encoding.max_products << "\n";
    pipe << "include_derivatives " << (est.supply.encoding.include_derivatives ? 1 : 0)
         << "\n";
    auto dump = [&](const char* name, const Vec& v) {
        pipe << name;
        for (double x : v) {
            std::snprintf(buf, sizeof(buf), " %.17g", x);
            pipe << buf;
        }
        pipe << "\n";
    };
    dump("mu", est.supply.scaler.mu);
    dump("sd", est.supply.scaler.sd);
    pipe << "dead";
    for (auto d : est.supply.scaler.dead) pipe << " " << int(d);
    pipe << "\n";
    pipe << "train_mse " << est.train_mse << "\n";
    pipe << "test_mse " << est.test_mse << "\n";
}

}  // namespace mergerlab
