#pragma once

#include <cstdint>
#include <string>

#include "mergerlab/equilibrium.hpp"
#include "mergerlab/market_model.hpp"

namespace mergerlab {

/// Monte Carlo scenario: logit demand, linear costs, correlated demand/cost
/// shocks, equilibrium prices under a chosen conduct model.
struct ScenarioConfig {
    int T = 1000;
    double duopoly_weight = 0.5;  // P(J=2); remainder is triopolies
    DemandSpec demand;
    Vec gamma = {3.0, 6.0, 4.0};
    double shock_corr = 0.9;
    double char_stddev = 0.25;  // draws are 1 + char_stddev * z
    ConductSpec conduct;
    std::uint64_t seed = 1;
    double split_fraction = 0.8;
    int target_observations = 0;  // when > 0, add markets until reached
    SolverConfig solver;

    void validate() const;
};

enum class Split { Train, Test };

struct Dataset {
    std::vector<MarketData> markets;
    std::vector<Split> split_labels;  // empty until split() assigns
    ScenarioConfig scenario;

    std::size_t observation_count() const;
};

/// Generates all markets. Each market draws from its own counter-based RNG
/// substream keyed by market_id, so output is independent of scheduling.
/// Markets whose equilibrium fails to converge are collected into a
/// GenerationFailure.
Dataset generate(const ScenarioConfig& cfg);

/// Market-level train/test assignment, stratified by firm count.
Dataset split(Dataset ds, double fraction, std::uint64_t seed);

/// Post-merger ownership: cross entries between the two firms' products are
/// set to one in every market where both are present (1-based firm ids;
/// products are single-firm at generation). Shocks and prices carry over.
Dataset apply_merger(Dataset ds, int firm_a, int firm_b);

/// True post-merger market? A market is affected when both merging firms
/// exist there.
bool merger_affects(const MarketData& m, int firm_a, int firm_b);

// --- persistence: one CSV row per product-market plus a sidecar scenario file
std::string dataset_to_csv(const Dataset& ds);
void write_dataset_csv(const std::string& path, const Dataset& ds);
Dataset read_dataset_csv(const std::string& path);

std::string scenario_to_text(const ScenarioConfig& cfg);
void write_scenario_text(const std::string& path, const ScenarioConfig& cfg);
ScenarioConfig read_scenario_text(const std::string& path);

}  // namespace mergerlab
