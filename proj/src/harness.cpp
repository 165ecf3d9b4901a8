#include "mergerlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mergerlab/errors.hpp"
#include "mergerlab/parallel.hpp"

namespace mergerlab {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentPlan::validate() const {
    scenario.validate();
    if (toolkit_models.empty() && vmm_estimators.empty())
        throw InvalidInput("ExperimentPlan: at least one estimator required");
    if (run_merger && (merger_firm_a < 1 || merger_firm_b < 1 ||
                       merger_firm_a == merger_firm_b))
        throw InvalidInput("ExperimentPlan: invalid merger firm pair");
    for (const auto& v : vmm_estimators) v.config.validate();
}

std::string conduct_label(const ConductSpec& c) {
    switch (c.kind) {
        case Conduct::Bertrand: return "bertrand";
        case Conduct::Monopoly: return "monopoly";
        case Conduct::PerfectCompetition: return "perfect_competition";
        case Conduct::ProfitWeight: return "profit_weight";
    }
    return "?";
}

ConductSpec conduct_from_label(const std::string& label, double kappa) {
    ConductSpec c;
    if (label == "bertrand") c.kind = Conduct::Bertrand;
    else if (label == "monopoly") c.kind = Conduct::Monopoly;
    else if (label == "perfect_competition") c.kind = Conduct::PerfectCompetition;
    else if (label == "profit_weight") {
        c.kind = Conduct::ProfitWeight;
        c.kappa = kappa;
    } else
        throw InvalidInput("unknown conduct label: " + label);
    return c;
}

namespace {

void require_keys(const json& obj, const std::set<std::string>& allowed,
                  const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw InvalidInput("plan schema: unknown key '" + it.key() + "' in " + where);
}

SolveMethod method_from_label(const std::string& s) {
    if (s == "zeta") return SolveMethod::ZetaFixedPoint;
    if (s == "newton") return SolveMethod::NewtonRoot;
    if (s == "hybrid") return SolveMethod::Hybrid;
    throw InvalidInput("unknown solver method: " + s);
}

ScenarioConfig scenario_from_json(const json& s) {
    require_keys(s, {"T", "duopoly_weight", "alpha", "beta", "gamma", "shock_corr",
                     "char_stddev", "conduct", "kappa", "seed", "split_fraction",
                     "target_observations", "solver"},
                 "scenario");
    ScenarioConfig cfg;
    cfg.T = s.value("T", cfg.T);
    cfg.duopoly_weight = s.value("duopoly_weight", cfg.duopoly_weight);
    cfg.demand.alpha = s.value("alpha", cfg.demand.alpha);
    if (s.contains("beta")) cfg.demand.beta = s["beta"].get<Vec>();
    if (s.contains("gamma")) cfg.gamma = s["gamma"].get<Vec>();
    cfg.shock_corr = s.value("shock_corr", cfg.shock_corr);
    cfg.char_stddev = s.value("char_stddev", cfg.char_stddev);
    cfg.conduct = conduct_from_label(s.value("conduct", std::string("bertrand")),
                                     s.value("kappa", 0.75));
    cfg.seed = s.value("seed", cfg.seed);
    cfg.split_fraction = s.value("split_fraction", cfg.split_fraction);
    cfg.target_observations = s.value("target_observations", 0);
    if (s.contains("solver")) {
        const json& sv = s["solver"];
        require_keys(sv, {"tol", "max_iter", "damping", "method"}, "scenario.solver");
        cfg.solver.tol = sv.value("tol", cfg.solver.tol);
        cfg.solver.max_iter = sv.value("max_iter", cfg.solver.max_iter);
        cfg.solver.damping = sv.value("damping", cfg.solver.damping);
        cfg.solver.method = method_from_label(sv.value("method", std::string("hybrid")));
    }
    return cfg;
}

VmmEstimatorSpec vmm_from_json(const json& v) {
    require_keys(v, {"label", "hidden", "critic_hidden", "activation", "stage1_epochs",
                     "stage2_epochs", "critic_steps", "lr_model", "lr_critic",
                     "momentum", "regularizer", "reg_lambda", "seed",
                     "early_stop_patience", "include_derivatives", "max_products"},
                 "vmm estimator");
    VmmEstimatorSpec spec;
    spec.label = v.value("label", std::string("vmm"));
    auto hidden = v.value("hidden", std::vector<std::size_t>{3, 3});
    spec.config.h_spec.hidden = hidden;
    spec.config.f_spec.hidden = v.value("critic_hidden", hidden);
    const std::string act = v.value("activation", std::string("softplus"));
    Activation a = Activation::SoftPlus;
    if (act == "sigmoid") a = Activation::Sigmoidal;
    else if (act == "rectified_smooth") a = Activation::RectifiedSmooth;
    else if (act != "softplus") throw InvalidInput("unknown activation: " + act);
    spec.config.h_spec.activation = a;
    spec.config.f_spec.activation = a;
    spec.config.stage1_epochs = v.value("stage1_epochs", spec.config.stage1_epochs);
    spec.config.stage2_epochs = v.value("stage2_epochs", spec.config.stage2_epochs);
    spec.config.critic_steps_per_model_step =
        v.value("critic_steps", spec.config.critic_steps_per_model_step);
    spec.config.lr_model = v.value("lr_model", spec.config.lr_model);
    spec.config.lr_critic = v.value("lr_critic", spec.config.lr_critic);
    spec.config.momentum = v.value("momentum", spec.config.momentum);
    const std::string reg = v.value("regularizer", std::string("none"));
    if (reg == "ridge") spec.config.regularizer = RegKind::Ridge;
    else if (reg == "monotonicity") spec.config.regularizer = RegKind::Monotonicity;
    else if (reg != "none") throw InvalidInput("unknown regularizer: " + reg);
    spec.config.reg_lambda = v.value("reg_lambda", 0.0);
    spec.config.seed = v.value("seed", spec.config.seed);
    spec.config.early_stop_patience =
        v.value("early_stop_patience", spec.config.early_stop_patience);
    spec.encoding.include_derivatives = v.value("include_derivatives", true);
    spec.encoding.max_products = v.value("max_products", std::size_t{3});
    return spec;
}

}  // namespace

ExperimentPlan plan_from_json_text(const std::string& text) {
    json j = json::parse(text);
    require_keys(j, {"scenario", "toolkit_models", "vmm", "merger", "passthrough",
                     "inference", "output_dir"},
                 "plan");
    ExperimentPlan plan;
    if (j.contains("scenario")) plan.scenario = scenario_from_json(j["scenario"]);
    if (j.contains("toolkit_models"))
        for (const auto& m : j["toolkit_models"])
            plan.toolkit_models.push_back(conduct_from_label(
                m.get<std::string>(), plan.scenario.conduct.kappa));
    if (j.contains("vmm"))
        for (const auto& v : j["vmm"]) plan.vmm_estimators.push_back(vmm_from_json(v));
    if (j.contains("merger")) {
        const json& m = j["merger"];
        require_keys(m, {"enabled", "firm_a", "firm_b"}, "merger");
        plan.run_merger = m.value("enabled", true);
        plan.merger_firm_a = m.value("firm_a", 2);
        plan.merger_firm_b = m.value("firm_b", 3);
    }
    if (j.contains("passthrough")) {
        const json& p = j["passthrough"];
        require_keys(p, {"enabled", "shock_fraction"}, "passthrough");
        plan.run_passthrough = p.value("enabled", true);
        plan.passthrough_shock = p.value("shock_fraction", 0.10);
    }
    if (j.contains("inference")) {
        const json& inf = j["inference"];
        require_keys(inf, {"enabled", "n_points", "alpha", "method", "iterations",
                           "lr_gamma", "lr_critic"},
                     "inference");
        plan.inference.enabled = inf.value("enabled", false);
        plan.inference.n_points = inf.value("n_points", 1);
        plan.inference.alpha = inf.value("alpha", 0.05);
        const std::string meth = inf.value("method", std::string("holm_exact"));
        if (meth == "bonferroni") plan.inference.method = CiMethod::Bonferroni;
        else if (meth != "holm_exact") throw InvalidInput("unknown ci method: " + meth);
        plan.inference.variance.iterations =
            inf.value("iterations", plan.inference.variance.iterations);
        plan.inference.variance.lr_gamma =
            inf.value("lr_gamma", plan.inference.variance.lr_gamma);
        plan.inference.variance.lr_critic =
            inf.value("lr_critic", plan.inference.variance.lr_critic);
    }
    plan.output_dir = j.value("output_dir", plan.output_dir);
    return plan;
}

ExperimentPlan plan_from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("cannot open plan file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return plan_from_json_text(ss.str());
}

std::string plan_to_json_text(const ExperimentPlan& plan) {
    json j;
    j["scenario"] = {{"T", plan.scenario.T},
                     {"duopoly_weight", plan.scenario.duopoly_weight},
                     {"alpha", plan.scenario.demand.alpha},
                     {"beta", plan.scenario.demand.beta},
                     {"gamma", plan.scenario.gamma},
                     {"shock_corr", plan.scenario.shock_corr},
                     {"char_stddev", plan.scenario.char_stddev},
                     {"conduct", conduct_label(plan.scenario.conduct)},
                     {"kappa", plan.scenario.conduct.kappa},
                     {"seed", plan.scenario.seed},
                     {"split_fraction", plan.scenario.split_fraction},
                     {"target_observations", plan.scenario.target_observations}};
    j["toolkit_models"] = json::array();
    for (const auto& m : plan.toolkit_models) j["toolkit_models"].push_back(conduct_label(m));
    j["vmm"] = json::array();
    for (const auto& v : plan.vmm_estimators)
        j["vmm"].push_back({{"label", v.label},
                            {"hidden", v.config.h_spec.hidden},
                            {"stage1_epochs", v.config.stage1_epochs},
                            {"stage2_epochs", v.config.stage2_epochs},
                            {"seed", v.config.seed},
                            {"include_derivatives", v.encoding.include_derivatives}});
    j["merger"] = {{"enabled", plan.run_merger},
                   {"firm_a", plan.merger_firm_a},
                   {"firm_b", plan.merger_firm_b}};
    j["passthrough"] = {{"enabled", plan.run_passthrough},
                        {"shock_fraction", plan.passthrough_shock}};
    j["inference"] = {{"enabled", plan.inference.enabled},
                      {"n_points", plan.inference.n_points},
                      {"alpha", plan.inference.alpha}};
    j["output_dir"] = plan.output_dir;
    return j.dump(2);
}

namespace {

std::string fmt17(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct Bundle {
    std::string dir;
    json manifest;
    std::vector<StageFailure> failures;

    void stage_ok(const std::string& stage) { manifest["stages"][stage] = "ok"; }
    void stage_fail(const std::string& stage, const std::string& msg) {
        manifest["stages"][stage] = std::string("failed: ") + msg;
        failures.push_back({stage, msg});
    }
    void write() const {
        std::ofstream f(dir + "/manifest.json", std::ios::binary);
        f << manifest.dump(2) << "\n";
    }
};

// percent-error histogram with fixed edges (-100..100 by 5); outliers land
// in the open end bins so counts always add up
void write_histogram(std::ofstream& out, const std::string& model,
                     const std::vector<Vec>& pred, const std::vector<Vec>& truth) {
    const double lo = -100.0, hi = 100.0, step = 5.0;
    const int nb = static_cast<int>((hi - lo) / step);
    std::vector<long> counts(nb + 2, 0);
    for (std::size_t t = 0; t < pred.size(); ++t)
        for (std::size_t j = 0; j < pred[t].size(); ++j) {
            const double pc = 100.0 * (pred[t][j] - truth[t][j]) / truth[t][j];
            int b;
            if (pc < lo) b = 0;
            else if (pc >= hi) b = nb + 1;
            else b = 1 + static_cast<int>((pc - lo) / step);
            ++counts[b];
        }
    out << model << ",-inf," << fmt17(lo) << "," << counts[0] << "\n";
    for (int b = 0; b < nb; ++b)
        out << model << "," << fmt17(lo + b * step) << "," << fmt17(lo + (b + 1) * step)
            << "," << counts[b + 1] << "\n";
    out << model << "," << fmt17(hi) << ",inf," << counts[nb + 1] << "\n";
}

}  // namespace

RunResult run_table(const ExperimentPlan& plan) {
    plan.validate();
    fs::create_directories(plan.output_dir);
    Bundle bundle{plan.output_dir, json::object(), {}};
    bundle.manifest["stages"] = json::object();
    bundle.manifest["failed_markets"] = json::object();
    RunResult rr;

    Dataset ds;
    bool have_data = false;
    try {
        ds = generate(plan.scenario);
        bundle.stage_ok("generate");
        have_data = true;
    } catch (const GenerationFailure& e) {
        bundle.stage_fail("generate", e.what());
        bundle.manifest["failed_markets"]["generate"] = e.failed_markets;
    } catch (const Error& e) {
        bundle.stage_fail("generate", e.what());
    }

    bool have_split = false;
    if (have_data) {
        try {
            ds = split(std::move(ds), plan.scenario.split_fraction,
                       plan.scenario.seed + 1000003);
            bundle.stage_ok("split");
            have_split = true;
        } catch (const Error& e) {
            bundle.stage_fail("split", e.what());
        }
        write_dataset_csv(plan.output_dir + "/dataset.csv", ds);
        write_scenario_text(plan.output_dir + "/scenario.txt", ds.scenario);
    }

    if (have_split) {
        try {
            const auto rep = check_exclusion(
                ds, instrument_names(ds.scenario.demand.beta.size()), {"w0", "w1", "w2"});
            write_exclusion_report(plan.output_dir, rep);
            bundle.stage_ok("validate");
        } catch (const Error& e) {
            bundle.stage_fail("validate", e.what());
        }
    }

    std::map<std::string, ToolkitFit> toolkit_fits;
    std::map<std::string, EstimationResult> vmm_fits;
    std::ofstream fitcsv;
    if (have_split) {
        fitcsv.open(plan.output_dir + "/fit_mse.csv", std::ios::binary);
        fitcsv << "model,train_mse,test_mse\n";
        try {
            for (const auto& model : plan.toolkit_models) {
                const std::string label = conduct_label(model);
                ToolkitFit tf = fit_toolkit(ds, model, ds.scenario.demand);
                save_toolkit(plan.output_dir, label, ds, tf);
                const auto fitted = toolkit_fitted_prices(ds, tf);
                double tr = 0.0, te = 0.0;
                std::size_t ntr = 0, nte = 0;
                for (std::size_t t = 0; t < ds.markets.size(); ++t)
                    for (std::size_t j = 0; j < ds.markets[t].J; ++j) {
                        const double e = fitted[t][j] - ds.markets[t].prices[j];
                        if (ds.split_labels[t] == Split::Test) {
                            te += e * e;
                            ++nte;
                        } else {
                            tr += e * e;
                            ++ntr;
                        }
                    }
                const double test_mse = nte ? te / nte : 0.0;
                fitcsv << label << "," << fmt17(ntr ? tr / ntr : 0.0) << ","
                       << fmt17(test_mse) << "\n";
                rr.fit_test_mse[label] = test_mse;
                toolkit_fits.emplace(label, std::move(tf));
            }
            bundle.stage_ok("fit-toolkit");
        } catch (const Error& e) {
            bundle.stage_fail("fit-toolkit", e.what());
        }
        try {
            for (const auto& spec : plan.vmm_estimators) {
                EstimationResult est = fit(ds, spec.config, spec.encoding);
                save_estimation(plan.output_dir + "/vmm_" + spec.label, est);
                fitcsv << spec.label << "," << fmt17(est.train_mse) << ","
                       << fmt17(est.test_mse) << "\n";
                rr.fit_test_mse[spec.label] = est.test_mse;
                vmm_fits.emplace(spec.label, std::move(est));
            }
            bundle.stage_ok("fit-vmm");
        } catch (const Error& e) {
            bundle.stage_fail("fit-vmm", e.what());
        }
    }

    Dataset post;
    std::vector<std::size_t> affected_test;
    std::vector<Vec> truth;  // aligned with affected_test
    bool have_truth = false;
    if (have_split && plan.run_merger) {
        try {
            post = apply_merger(ds, plan.merger_firm_a, plan.merger_firm_b);
            for (std::size_t t = 0; t < ds.markets.size(); ++t)
                if (ds.split_labels[t] == Split::Test &&
                    merger_affects(ds.markets[t], plan.merger_firm_a, plan.merger_firm_b))
                    affected_test.push_back(t);

            truth.resize(affected_test.size());
            std::vector<std::string> errs(affected_test.size());
            parallel_for(affected_test.size(), [&](std::size_t i) {
                const std::size_t t = affected_test[i];
                const auto& m = ds.markets[t];
                try {
                    const Vec cost = marginal_cost(m.w, ds.scenario.gamma, m.omega);
                    truth[i] = solve_structural(ds.scenario.demand, m.x, m.xi, cost,
                                                post.markets[t].ownership,
                                                ds.scenario.solver, m.market_id,
                                                &m.prices)
                                   .prices;
                } catch (const std::exception& e) {
                    errs[i] = e.what();
                }
            });
            for (const auto& e : errs)
                if (!e.empty()) throw NonConvergence(-1, 0.0, "true post-merger solve: " + e);
            bundle.stage_ok("simulate-merger:truth");
            have_truth = true;
        } catch (const Error& e) {
            bundle.stage_fail("simulate-merger", e.what());
        }
    }

    if (have_truth) {
        std::ofstream pred_csv(plan.output_dir + "/predictions.csv", std::ios::binary);
        pred_csv << "market_id,firm_id,pre_price,predicted_price,true_post_price,model\n";
        std::ofstream mse_csv(plan.output_dir + "/merger_mse.csv", std::ios::binary);
        mse_csv << "model,mse,n_obs,n_markets,failed_markets\n";
        std::ofstream hist_csv(plan.output_dir + "/histogram.csv", std::ios::binary);
        hist_csv << "model,bin_lo,bin_hi,count\n";

        SolverConfig toolkit_cfg = ds.scenario.solver;
        toolkit_cfg.max_iter = 5000;
        toolkit_cfg.damping = 0.5;
        toolkit_cfg.method = SolveMethod::Hybrid;
        SolverConfig flex_cfg = ds.scenario.solver;
        flex_cfg.max_iter = 200;
        flex_cfg.method = SolveMethod::NewtonRoot;

        auto evaluate = [&](const std::string& label, const MergerPrediction& mp) {
            std::vector<Vec> pred_ok, truth_ok;
            std::vector<int> ids_ok;
            for (std::size_t i = 0; i < affected_test.size(); ++i) {
                const std::size_t t = affected_test[i];
                if (!mp.converged[t]) continue;
                pred_ok.push_back(mp.prices[t]);
                truth_ok.push_back(truth[i]);
                ids_ok.push_back(ds.markets[t].market_id);
                for (std::size_t j = 0; j < ds.markets[t].J; ++j)
                    pred_csv << ds.markets[t].market_id << "," << (j + 1) << ","
                             << fmt17(ds.markets[t].prices[j]) << ","
                             << fmt17(mp.prices[t][j]) << "," << fmt17(truth[i][j])
                             << "," << label << "\n";
            }
            std::vector<int> failed;
            for (std::size_t i = 0; i < affected_test.size(); ++i)
                if (!mp.converged[affected_test[i]])
                    failed.push_back(ds.markets[affected_test[i]].market_id);
            if (!failed.empty()) {
                bundle.manifest["failed_markets"][label] = failed;
                rr.failed_markets[label] = failed;
                rr.partial = true;
            }
            if (!pred_ok.empty()) {
                const auto rep = prediction_error_report(pred_ok, truth_ok, ids_ok);
                mse_csv << label << "," << fmt17(rep.mse) << "," << rep.n_obs << ","
                        << rep.n_markets << "," << failed.size() << "\n";
                rr.merger_mse[label] = rep.mse;
                write_histogram(hist_csv, label, pred_ok, truth_ok);
            }
        };

        try {
            for (const auto& [label, tf] : toolkit_fits) {
                MergerPrediction mp =
                    predict_merger(ds, post, tf, ds.scenario.demand, toolkit_cfg);
                evaluate(label, mp);
            }
            for (const auto& [label, est] : vmm_fits) {
                MergerPrediction mp =
                    predict_merger_flexible(ds, post, est, ds.scenario.demand, flex_cfg);
                evaluate(label, mp);
            }
            bundle.stage_ok("simulate-merger");
        } catch (const Error& e) {
            bundle.stage_fail("simulate-merger", e.what());
        }
    }

    if (have_truth && plan.run_passthrough && !affected_test.empty()) {
        try {
            // median merger-affected market by post-merger total inside share
            std::vector<std::pair<double, std::size_t>> inside;
            for (std::size_t i = 0; i < affected_test.size(); ++i) {
                const std::size_t t = affected_test[i];
                const auto& m = ds.markets[t];
                const Vec s = logit_shares(ds.scenario.demand.mean_utility(
                    truth[i], m.x, m.xi));
                double tot = 0.0;
                for (double v : s) tot += v;
                inside.emplace_back(tot, t);
            }
            std::sort(inside.begin(), inside.end());
            const std::size_t t_med = inside[inside.size() / 2].second;
            const auto& m = ds.markets[t_med];
            const Mat& h_post = post.markets[t_med].ownership;
            const Vec cost = marginal_cost(m.w, ds.scenario.gamma, m.omega);

            std::ofstream pt_csv(plan.output_dir + "/passthrough.csv", std::ios::binary);
            pt_csv << "model,market_id,row,col,value\n";
            auto emit = [&](const std::string& label, const Mat& pt) {
                for (std::size_t r = 0; r < pt.rows(); ++r)
                    for (std::size_t c = 0; c < pt.cols(); ++c)
                        pt_csv << label << "," << m.market_id << "," << (r + 1) << ","
                               << (c + 1) << "," << fmt17(pt(r, c)) << "\n";
            };
            emit("true", passthrough_matrix(
                             structural_price_solver(ds.scenario.demand, m.x, m.xi, cost,
                                                     h_post, ds.scenario.solver),
                             cost, plan.passthrough_shock));
            SolverConfig flex_cfg = ds.scenario.solver;
            flex_cfg.max_iter = 200;
            flex_cfg.method = SolveMethod::NewtonRoot;
            for (const auto& [label, est] : vmm_fits) {
                Vec om(m.J);
                for (std::size_t i2 = 0; i2 < est.residuals.size(); ++i2)
                    if (est.obs_index[i2].first == m.market_id)
                        om[est.obs_index[i2].second] = est.residuals[i2];
                emit(label, passthrough_matrix(
                                flexible_price_solver(est.supply, ds.scenario.demand,
                                                      m.x, m.xi, om, m.w, h_post,
                                                      flex_cfg, m.prices),
                                cost, plan.passthrough_shock));
            }
            // audit echo of the selected market
            std::ofstream echo(plan.output_dir + "/passthrough_market.txt", std::ios::binary);
            echo << "market_id " << m.market_id << "\nJ " << m.J << "\ncosts";
            for (double c : cost) echo << " " << fmt17(c);
            echo << "\nshares";
            for (double s : m.shares) echo << " " << fmt17(s);
            echo << "\n";
            bundle.stage_ok("passthrough");
        } catch (const Error& e) {
            bundle.stage_fail("passthrough", e.what());
        }
    }

    if (have_split && plan.inference.enabled && !vmm_fits.empty()) {
        try {
            const auto& [label, est] = *vmm_fits.begin();
            TrainingSet raw = build_training_set(ds, est.supply.encoding, true);
            Standardizer zscale = Standardizer::fit(raw.z);
            TrainingSet ts;
            ts.y = raw.y;
            ts.index = raw.index;
            for (std::size_t i = 0; i < raw.size(); ++i) {
                ts.x.push_back(est.supply.scaler.transform(raw.x[i]));
                ts.z.push_back(zscale.transform(raw.z[i]));
            }
            // probes: test observations with prices closest to the test median
            std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>> cand;
            Vec test_prices;
            for (std::size_t t = 0; t < ds.markets.size(); ++t)
                if (ds.split_labels[t] == Split::Test)
                    for (std::size_t j = 0; j < ds.markets[t].J; ++j)
                        test_prices.push_back(ds.markets[t].prices[j]);
            std::sort(test_prices.begin(), test_prices.end());
            const double med = test_prices[test_prices.size() / 2];
            for (std::size_t t = 0; t < ds.markets.size(); ++t)
                if (ds.split_labels[t] == Split::Test)
                    for (std::size_t j = 0; j < ds.markets[t].J; ++j)
                        cand.push_back({std::abs(ds.markets[t].prices[j] - med), {t, j}});
            std::sort(cand.begin(), cand.end());
            const std::size_t d = std::min<std::size_t>(plan.inference.n_points, cand.size());
            std::vector<Vec> probes;
            std::ofstream probe_csv(plan.output_dir + "/inference_probes.csv",
                                    std::ios::binary);
            probe_csv << "point_id,market_id,product,price,systematic_price\n";
            for (std::size_t i = 0; i < d; ++i) {
                const auto [t, j] = cand[i].second;
                const auto& m = ds.markets[t];
                const auto D = logit_derivatives(m.shares, ds.scenario.demand.alpha);
                probes.push_back(est.supply.scaler.transform(
                    encode(m, D, j, est.supply.encoding)));
                probe_csv << i << "," << m.market_id << "," << (j + 1) << ","
                          << fmt17(m.prices[j]) << ","
                          << fmt17(m.prices[j] - (m.omega.empty() ? 0.0 : m.omega[j]))
                          << "\n";
            }
            VarianceProblem prob{ts, est.h_spec, est.theta_hat, est.f_spec};
            const auto ci = simultaneous_ci(probes, prob, plan.inference.alpha,
                                            plan.inference.method,
                                            plan.inference.variance);
            write_ci_csv(plan.output_dir + "/ci.csv", ci);
            bundle.stage_ok("infer");
        } catch (const Error& e) {
            bundle.stage_fail("infer", e.what());
        }
    }

    bundle.manifest["status"] =
        bundle.failures.empty() ? (rr.partial ? "partial" : "ok") : "failed";
    bundle.write();
    rr.failures = bundle.failures;
    rr.ok = bundle.failures.empty();
    return rr;
}

std::map<std::string, double> recompute_merger_mse_from_csv(
    const std::string& predictions_csv) {
    std::ifstream f(predictions_csv);
    if (!f) throw InvalidInput("cannot open " + predictions_csv);
    std::string line;
    std::getline(f, line);
    std::map<std::string, std::pair<double, long>> acc;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        const double pred = std::stod(fields[3]);
        const double tru = std::stod(fields[4]);
        auto& a = acc[fields[5]];
        a.first += (pred - tru) * (pred - tru);
        a.second += 1;
    }
    std::map<std::string, double> out;
    for (const auto& [k, v] : acc) out[k] = v.first / static_cast<double>(v.second);
    return out;
}

}  // namespace mergerlab
