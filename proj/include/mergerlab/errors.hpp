#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mergerlab {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidInput : Error {
    using Error::Error;
};

// Markup system (-H o D') could not be solved for some market.
struct SingularMarkupSystem : Error {
    int market_id;
    explicit SingularMarkupSystem(int mkt, const std::string& what)
        : Error(what), market_id(mkt) {}
};

struct NonConvergence : Error {
    int market_id;
    double residual;
    NonConvergence(int mkt, double res, const std::string& what)
        : Error(what), market_id(mkt), residual(res) {}
};

struct EncodingError : Error {
    using Error::Error;
};

struct GenerationFailure : Error {
    std::vector<int> failed_markets;
    GenerationFailure(std::vector<int> failed, const std::string& what)
        : Error(what), failed_markets(std::move(failed)) {}
};

struct StratificationError : Error {
    using Error::Error;
};

struct MergerScopeError : Error {
    using Error::Error;
};

struct TrainingDiverged : Error {
    using Error::Error;
};

struct RankDeficientDesign : Error {
    using Error::Error;
};

struct PermutationBudgetExceeded : Error {
    using Error::Error;
};

}  // namespace mergerlab
