#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mergerlab/autodiff_net.hpp"
#include "mergerlab/datagen.hpp"
#include "mergerlab/equilibrium.hpp"

namespace mergerlab {

/// Input layout for the supply function. Shares and demand derivatives enter
/// at the decision-unit (firm) level: co-owned products' shares and
/// derivative blocks are summed, which is exact for logit pricing systems
/// and lets duopoly/triopoly variation carry over to post-merger structures.
///
/// Slots, own product first:
///   [0]                own firm share
///   [1 .. J-1]         rival firm shares, sorted descending, zero-padded
///   [J .. 2J-1]        own row of the firm-level derivative matrix, own
///                      entry first, rivals in share order (when enabled)
///   [..]               own cost shifters, constant column excluded
///   [..]               co-owned product count, co-owned partners' share sum,
///                      max cross-firm conduct weight in own row
///   [last]             firm count
struct SupplyEncoding {
    std::size_t max_products = 3;
    bool include_derivatives = true;

    std::size_t dim(std::size_t kw) const;
    std::size_t own_derivative_slot() const { return max_products; }
};

/// encode() for one product given the market state; the counterfactual path
/// re-encodes at candidate prices, so the state form is primary.
Vec encode_state(const Vec& shares, const DerivativeMatrix& D, const Mat& w,
                 const Mat& H, std::size_t j, const SupplyEncoding& enc);
Vec encode(const MarketData& market, const DerivativeMatrix& D, std::size_t j,
           const SupplyEncoding& enc);

/// Instruments: own excluded demand shifters, rival characteristic sums,
/// rival count. Cost shifters never enter.
Vec instruments_for(const MarketData& market, std::size_t j);
std::vector<std::string> instrument_names(std::size_t kx);

/// Zero-mean/unit-variance scaling fitted on training rows. Coordinates that
/// never vary in training are mapped to exactly zero, in and out of sample:
/// a constant input carries no signal and its untrained weights must not
/// leak into counterfactual evaluations.
struct Standardizer {
    Vec mu, sd;
    std::vector<unsigned char> dead;

    static Standardizer fit(const std::vector<Vec>& rows);
    Vec transform(const Vec& row) const;
};

/// Flat design for the minimax trainer. Rows are ordered by market, then
/// product; tests drive this directly with synthetic designs.
struct TrainingSet {
    std::vector<Vec> x;  // model inputs
    std::vector<Vec> z;  // critic inputs
    Vec y;               // targets (prices)
    std::vector<std::pair<int, std::size_t>> index;  // (market_id, product)

    std::size_t size() const { return y.size(); }
};

enum class RegKind { None, Ridge, Monotonicity };

struct VmmConfig {
    NetSpec h_spec{0, {3, 3}, 1, Activation::SoftPlus, 0};
    NetSpec f_spec{0, {3, 3}, 1, Activation::SoftPlus, 0};
    int stage1_epochs = 8000;
    int stage2_epochs = 12000;
    int critic_steps_per_model_step = 5;
    double lr_model = 1e-3;
    double lr_critic = 1e-2;
    double momentum = 0.9;
    RegKind regularizer = RegKind::None;
    double reg_lambda = 0.0;
    std::uint64_t seed = 0;
    int early_stop_patience = 0;  // stale validation checks before halting; 0 = run out
    double validation_fraction = 0.1;
    int snapshot_interval = 50;
    double lr_decay_floor = 0.02;

    void validate() const;
};

struct TraceRow {
    int stage;
    int epoch;
    double objective;
    double train_mse;
};

/// Fitted supply function: network plus the input pipeline it was trained
/// with. Evaluates h_j for all products of a market state.
struct SupplyFunction {
    NetSpec spec;
    ParamVector theta;
    SupplyEncoding encoding;
    Standardizer scaler;

    double eval_encoded_raw(const Vec& raw_row) const;
    Vec eval_market(const Vec& shares, const DerivativeMatrix& D, const Mat& w,
                    const Mat& H) const;
    SupplyEvaluator evaluator() const;
};

struct EstimationResult {
    ParamVector theta_hat;
    ParamVector theta_tilde;
    NetSpec h_spec, f_spec;
    ParamVector f_params;
    SupplyFunction supply;
    std::vector<std::pair<int, std::size_t>> obs_index;
    Vec residuals;  // omega_hat aligned with obs_index, full dataset
    double train_mse = 0.0;
    double test_mse = 0.0;
    std::vector<TraceRow> trace;
};

/// The empirical minimax objective: mean f(z) w(theta) minus one quarter of
/// the mean squared f(z) w(theta_tilde), minus the regularizer. Stage one
/// replaces the weighting residuals with ones (identity critic penalty).
double vmm_objective(const NetSpec& h_spec, const ParamVector& theta,
                     const NetSpec& f_spec, const ParamVector& f_params,
                     const ParamVector& theta_tilde, const TrainingSet& batch,
                     RegKind reg = RegKind::None, double reg_lambda = 0.0);

struct MinimaxFit {
    ParamVector theta_tilde;
    ParamVector theta_hat;
    ParamVector f_params;
    std::vector<TraceRow> trace;
};

/// Two-stage alternating ascent/descent on a prepared TrainingSet.
MinimaxFit minimax_train(const TrainingSet& ts, const VmmConfig& cfg);

/// End-to-end fit on a split dataset: encodings and instruments built from
/// the train markets, both standardized on the train split.
EstimationResult fit(const Dataset& ds, const VmmConfig& cfg, const SupplyEncoding& enc);

/// Squared positive first differences of h along a probe path that varies
/// only in `varying_slot` (sorted increasing). Zero iff h is nonincreasing.
double monotonicity_penalty(const std::function<double(const Vec&)>& h,
                            const std::vector<Vec>& probes, std::size_t varying_slot);

TrainingSet build_training_set(const Dataset& ds, const SupplyEncoding& enc,
                               bool train_only = true);

// estimation artifacts: checkpoints, residual CSV, training log
void save_estimation(const std::string& dir, const EstimationResult& est);

}  // namespace mergerlab
