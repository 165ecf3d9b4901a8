#include "mergerlab/market_model.hpp"

#include <algorithm>
#include <cmath>

#include "mergerlab/errors.hpp"

namespace mergerlab {

void DemandSpec::validate() const {
    if (!(alpha < 0.0)) throw InvalidInput("DemandSpec: alpha must be negative");
    if (beta.empty()) throw InvalidInput("DemandSpec: beta empty");
    for (double b : beta)
        if (!std::isfinite(b)) throw InvalidInput("DemandSpec: non-finite beta");
}

Vec DemandSpec::mean_utility(const Vec& prices, const Mat& x, const Vec& xi) const {
    if (x.cols() != beta.size() || prices.size() != x.rows() || xi.size() != x.rows())
        throw InvalidInput("mean_utility: dimension mismatch");
    Vec delta = matvec(x, beta);
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] += alpha * prices[j] + xi[j];
    return delta;
}

void MarketData::validate() const {
    if (J < 1) throw InvalidInput("MarketData: J < 1");
    if (prices.size() != J || shares.size() != J || xi.size() != J)
        throw InvalidInput("MarketData: vector length mismatch");
    if (x.rows() != J || w.rows() != J) throw InvalidInput("MarketData: matrix rows mismatch");
    if (!omega.empty() && omega.size() != J)
        throw InvalidInput("MarketData: omega length mismatch");
    if (ownership.rows() != J || ownership.cols() != J)
        throw InvalidInput("MarketData: ownership must be J x J");
    double ssum = 0.0;
    for (std::size_t j = 0; j < J; ++j) {
        if (!(shares[j] > 0.0 && shares[j] < 1.0))
            throw InvalidInput("MarketData: share outside (0,1)");
        if (!(prices[j] > 0.0)) throw InvalidInput("MarketData: nonpositive price");
        ssum += shares[j];
        if (std::abs(ownership(j, j) - 1.0) > 1e-12)
            throw InvalidInput("MarketData: ownership diagonal must be 1");
        for (std::size_t k = 0; k < J; ++k) {
            const double h = ownership(j, k);
            if (h < 0.0 || h > 1.0)
                throw InvalidInput("MarketData: ownership entry outside [0,1]");
        }
    }
    if (!(ssum < 1.0)) throw InvalidInput("MarketData: inside shares sum to >= 1");
}

void ConductSpec::validate() const {
    if (kind == Conduct::ProfitWeight) {
        if (!(kappa >= 0.0 && kappa <= 1.0))
            throw InvalidInput("ConductSpec: kappa outside [0,1]");
    }
}

Mat ConductSpec::matrix(std::size_t J) const {
    switch (kind) {
        case Conduct::Bertrand:
            return Mat::identity(J);
        case Conduct::Monopoly:
            return Mat::constant(J, J, 1.0);
        case Conduct::PerfectCompetition:
            // Markups are identically zero; the matrix is never used.
            return Mat::identity(J);
        case Conduct::ProfitWeight: {
            Mat h = Mat::constant(J, J, kappa);
            for (std::size_t j = 0; j < J; ++j) h(j, j) = 1.0;
            return h;
        }
    }
    throw InvalidInput("ConductSpec: unknown kind");
}

Vec logit_shares(const Vec& delta) {
    if (delta.empty()) throw InvalidInput("logit_shares: empty input");
    double dmax = 0.0;  // outside option contributes exp(0)
    for (double d : delta) {
        if (!std::isfinite(d)) throw InvalidInput("logit_shares: non-finite utility");
        dmax = std::max(dmax, d);
    }
    double denom = std::exp(-dmax);
    Vec s(delta.size());
    for (std::size_t j = 0; j < delta.size(); ++j) {
        s[j] = std::exp(delta[j] - dmax);
        denom += s[j];
    }
    for (double& v : s) v /= denom;
    return s;
}

DerivativeMatrix logit_derivatives(const Vec& shares, double alpha) {
    const std::size_t J = shares.size();
    for (double s : shares)
        if (!(s > 0.0 && s < 1.0))
            throw InvalidInput("logit_derivatives: share outside (0,1)");
    Mat D(J, J);
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < J; ++k)
            D(j, k) = j == k ? alpha * shares[j] * (1.0 - shares[j])
                             : -alpha * shares[j] * shares[k];
    return DerivativeMatrix{std::move(D)};
}

Vec conduct_markup(const Vec& shares, const DerivativeMatrix& D, const Mat& H,
                   int market_id) {
    const std::size_t J = shares.size();
    if (D.D.rows() != J || H.rows() != J || H.cols() != J)
        throw InvalidInput("conduct_markup: dimension mismatch");
    Mat m(J, J);
    for (std::size_t j = 0; j < J; ++j)
        for (std::size_t k = 0; k < J; ++k) m(j, k) = -H(j, k) * D.D(k, j);
    Vec markup;
    if (!lu_solve(m, shares, markup))
        throw SingularMarkupSystem(market_id, "conduct_markup: singular system");
    return markup;
}

Vec conduct_markup(const Vec& shares, const DerivativeMatrix& D,
                   const ConductSpec& conduct, int market_id) {
    if (conduct.kind == Conduct::PerfectCompetition) return Vec(shares.size(), 0.0);
    return conduct_markup(shares, D, conduct.matrix(shares.size()), market_id);
}

Vec marginal_cost(const Mat& w, const Vec& gamma, const Vec& omega) {
    if (w.cols() != gamma.size() || omega.size() != w.rows())
        throw InvalidInput("marginal_cost: dimension mismatch");
    Vec c = matvec(w, gamma);
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += omega[j];
    return c;
}

std::vector<int> firm_partition(const Mat& H) {
    const std::size_t J = H.rows();
    std::vector<int> label(J, -1);
    int next = 0;
    for (std::size_t j = 0; j < J; ++j) {
        if (label[j] >= 0) continue;
        label[j] = next;
        std::vector<std::size_t> stack{j};
        while (!stack.empty()) {
            const std::size_t a = stack.back();
            stack.pop_back();
            for (std::size_t k = 0; k < J; ++k) {
                if (label[k] < 0 && H(a, k) >= 1.0 - 1e-9) {
                    label[k] = next;
                    stack.push_back(k);
                }
            }
        }
        ++next;
    }
    return label;
}

int firm_count(const Mat& H) {
    const auto lab = firm_partition(H);
    return lab.empty() ? 0 : *std::max_element(lab.begin(), lab.end()) + 1;
}

}  // namespace mergerlab
