#include "mergerlab/toolkit.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mergerlab/errors.hpp"

namespace mergerlab {

Mat model_conduct_matrix(const ConductSpec& model, const Mat& ownership) {
    const std::size_t J = ownership.rows();
    switch (model.kind) {
        case Conduct::Bertrand:
            return ownership;
        case Conduct::Monopoly:
            return Mat::constant(J, J, 1.0);
        case Conduct::PerfectCompetition:
            return Mat::identity(J);  // unused, markups are zero
        case Conduct::ProfitWeight: {
            const auto lab = firm_partition(ownership);
            Mat h(J, J);
            for (std::size_t j = 0; j < J; ++j)
                for (std::size_t k = 0; k < J; ++k)
                    h(j, k) = lab[j] == lab[k] ? 1.0 : model.kappa;
            return h;
        }
    }
    throw InvalidInput("model_conduct_matrix: unknown conduct");
}

std::vector<Vec> invert_markups(const Dataset& ds, const ConductSpec& model,
                                const DemandSpec& demand) {
    std::vector<Vec> out;
    out.reserve(ds.markets.size());
    for (const auto& m : ds.markets) {
        if (model.kind == Conduct::PerfectCompetition) {
            out.emplace_back(m.J, 0.0);
            continue;
        }
        const auto D = logit_derivatives(m.shares, demand.alpha);
        out.push_back(conduct_markup(m.shares, D,
                                     model_conduct_matrix(model, m.ownership),
                                     m.market_id));
    }
    return out;
}

OlsFit fit_costs(const Vec& c_m, const Mat& w) {
    if (c_m.size() != w.rows()) throw InvalidInput("fit_costs: dimension mismatch");
    OlsFit fit;
    fit.gamma = qr_least_squares(w, c_m);
    Vec fitted = matvec(w, fit.gamma);
    fit.residuals.resize(c_m.size());
    double ssr = 0.0, sst = 0.0, mean = 0.0;
    for (double v : c_m) mean += v;
    mean /= static_cast<double>(c_m.size());
    for (std::size_t i = 0; i < c_m.size(); ++i) {
        fit.residuals[i] = c_m[i] - fitted[i];
        ssr += fit.residuals[i] * fit.residuals[i];
        sst += (c_m[i] - mean) * (c_m[i] - mean);
    }
    fit.r2 = sst > 0.0 ? 1.0 - ssr / sst : 1.0;
    return fit;
}

ToolkitFit fit_toolkit(const Dataset& ds, const ConductSpec& model,
                       const DemandSpec& demand) {
    ToolkitFit out;
    out.model = model;
    out.markups = invert_markups(ds, model, demand);

    // gamma from the train split only; residuals for every market
    std::vector<double> c_train;
    std::vector<Vec> w_train_rows;
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        if (!ds.split_labels.empty() && ds.split_labels[t] == Split::Test) continue;
        const auto& m = ds.markets[t];
        for (std::size_t j = 0; j < m.J; ++j) {
            c_train.push_back(m.prices[j] - out.markups[t][j]);
            w_train_rows.push_back(m.w.row(j));
        }
    }
    if (c_train.empty()) throw InvalidInput("fit_toolkit: empty train split");
    Mat wtr(w_train_rows.size(), w_train_rows[0].size());
    for (std::size_t r = 0; r < w_train_rows.size(); ++r)
        for (std::size_t c = 0; c < wtr.cols(); ++c) wtr(r, c) = w_train_rows[r][c];
    OlsFit ols = fit_costs(Vec(c_train.begin(), c_train.end()), wtr);
    out.gamma_hat = ols.gamma;
    out.r2 = ols.r2;

    out.omega_m.reserve(ds.markets.size());
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        const auto& m = ds.markets[t];
        Vec wq = matvec(m.w, out.gamma_hat);
        Vec om(m.J);
        for (std::size_t j = 0; j < m.J; ++j)
            om[j] = m.prices[j] - out.markups[t][j] - wq[j];
        out.omega_m.push_back(std::move(om));
    }
    return out;
}

MergerPrediction predict_merger(const Dataset& pre, const Dataset& post,
                                const ToolkitFit& fit, const DemandSpec& demand,
                                const SolverConfig& cfg) {
    if (pre.markets.size() != post.markets.size())
        throw InvalidInput("predict_merger: dataset size mismatch");
    MergerPrediction out;
    out.prices.resize(pre.markets.size());
    out.converged.assign(pre.markets.size(), false);
    for (std::size_t t = 0; t < pre.markets.size(); ++t) {
        const auto& m = pre.markets[t];
        // recovered cost = p - markup_m = w gamma + omega_m, exactly
        Vec cost(m.J);
        for (std::size_t j = 0; j < m.J; ++j) cost[j] = m.prices[j] - fit.markups[t][j];

        if (fit.model.kind == Conduct::PerfectCompetition) {
            out.prices[t] = cost;
            out.converged[t] = true;
            continue;
        }
        const Mat h_post = fit.model.kind == Conduct::ProfitWeight
                               ? model_conduct_matrix(fit.model, post.markets[t].ownership)
                               : post.markets[t].ownership;
        try {
            auto eq = solve_structural(demand, m.x, m.xi, cost, h_post, cfg,
                                       m.market_id, &m.prices);
            out.prices[t] = eq.prices;
            out.converged[t] = true;
        } catch (const NonConvergence&) {
            out.failed_market_ids.push_back(m.market_id);
        } catch (const SingularMarkupSystem&) {
            out.failed_market_ids.push_back(m.market_id);
        }
    }
    return out;
}

std::vector<Vec> toolkit_fitted_prices(const Dataset& ds, const ToolkitFit& fit) {
    std::vector<Vec> out;
    out.reserve(ds.markets.size());
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        const auto& m = ds.markets[t];
        Vec wq = matvec(m.w, fit.gamma_hat);
        Vec p(m.J);
        for (std::size_t j = 0; j < m.J; ++j) p[j] = fit.markups[t][j] + wq[j];
        out.push_back(std::move(p));
    }
    return out;
}

void save_toolkit(const std::string& dir, const std::string& label,
                  const Dataset& ds, const ToolkitFit& fit) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    char buf[64];
    std::ofstream csv(dir + "/toolkit_" + label + ".csv", std::ios::binary);
    csv << "market_id,product,markup,omega_m\n";
    for (std::size_t t = 0; t < ds.markets.size(); ++t)
        for (std::size_t j = 0; j < ds.markets[t].J; ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", fit.markups[t][j]);
            csv << ds.markets[t].market_id << "," << (j + 1) << "," << buf;
            std::snprintf(buf, sizeof(buf), "%.17g", fit.omega_m[t][j]);
            csv << "," << buf << "\n";
        }
    std::ofstream meta(dir + "/toolkit_" + label + ".txt", std::ios::binary);
    meta << "model " << label << "\n";
    meta << "kappa " << fit.model.kappa << "\n";
    meta << "gamma_hat";
    for (double g : fit.gamma_hat) {
        std::snprintf(buf, sizeof(buf), " %.17g", g);
        meta << buf;
    }
    meta << "\nr2 " << fit.r2 << "\n";
}

}  // namespace mergerlab
