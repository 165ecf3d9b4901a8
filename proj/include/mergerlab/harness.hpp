#pragma once

#include <map>
#include <optional>
#include <string>

#include "mergerlab/counterfactual.hpp"
#include "mergerlab/inference.hpp"
#include "mergerlab/validators.hpp"

namespace mergerlab {

struct VmmEstimatorSpec {
    std::string label = "vmm";
    VmmConfig config;
    SupplyEncoding encoding;
};

struct InferenceSpec {
    bool enabled = false;
    int n_points = 1;
    double alpha = 0.05;
    CiMethod method = CiMethod::HolmExact;
    VarianceConfig variance;
};

/// A full experiment: scenario, estimators, merger, what to evaluate.
struct ExperimentPlan {
    ScenarioConfig scenario;
    std::vector<ConductSpec> toolkit_models;
    std::vector<VmmEstimatorSpec> vmm_estimators;
    int merger_firm_a = 2;
    int merger_firm_b = 3;
    bool run_merger = true;
    bool run_passthrough = true;
    double passthrough_shock = 0.10;
    InferenceSpec inference;
    std::string output_dir = "out";

    void validate() const;
};

std::string conduct_label(const ConductSpec& c);
ConductSpec conduct_from_label(const std::string& label, double kappa);

ExperimentPlan plan_from_json_file(const std::string& path);
ExperimentPlan plan_from_json_text(const std::string& text);
std::string plan_to_json_text(const ExperimentPlan& plan);

struct StageFailure {
    std::string stage;
    std::string message;
};

struct RunResult {
    bool ok = true;
    bool partial = false;
    std::vector<StageFailure> failures;
    std::map<std::string, double> merger_mse;   // by model label
    std::map<std::string, double> fit_test_mse; // by model label
    std::map<std::string, std::vector<int>> failed_markets;  // by model label
};

/// Runs generate -> split -> validators -> fits -> merger -> pass-through ->
/// inference -> report, persisting the bundle under plan.output_dir. Stage
/// errors are captured with their stage label; partial results stay on disk
/// next to a failure manifest.
RunResult run_table(const ExperimentPlan& plan);

/// Re-aggregates the merger MSE table from the persisted prediction CSV; the
/// bundle must be recomputable without hidden state.
std::map<std::string, double> recompute_merger_mse_from_csv(const std::string& predictions_csv);

}  // namespace mergerlab
