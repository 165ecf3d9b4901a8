#include "mergerlab/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "mergerlab/errors.hpp"
#include "mergerlab/rng.hpp"

namespace mergerlab {

void ScenarioConfig::validate() const {
    if (T < 1) throw InvalidInput("ScenarioConfig: T must be >= 1");
    if (!(duopoly_weight >= 0.0 && duopoly_weight <= 1.0))
        throw InvalidInput("ScenarioConfig: duopoly_weight outside [0,1]");
    if (!(shock_corr > -1.0 && shock_corr < 1.0))
        throw InvalidInput("ScenarioConfig: shock_corr outside (-1,1)");
    if (!(split_fraction > 0.0 && split_fraction < 1.0))
        throw InvalidInput("ScenarioConfig: split_fraction outside (0,1)");
    if (!(char_stddev > 0.0)) throw InvalidInput("ScenarioConfig: char_stddev <= 0");
    demand.validate();
    conduct.validate();
    solver.validate();
}

std::size_t Dataset::observation_count() const {
    std::size_t n = 0;
    for (const auto& m : markets) n += m.J;
    return n;
}

namespace {

MarketData draw_market(const ScenarioConfig& cfg, int market_id) {
    PhiloxRng rng(cfg.seed, static_cast<std::uint64_t>(market_id));
    MarketData m;
    m.market_id = market_id;
    m.J = rng.uniform() < cfg.duopoly_weight ? 2 : 3;

    const std::size_t kx = cfg.demand.beta.size();
    const std::size_t kw = cfg.gamma.size();
    m.x = Mat(m.J, kx, 1.0);
    m.w = Mat(m.J, kw, 1.0);
    for (std::size_t j = 0; j < m.J; ++j)
        for (std::size_t c = 1; c < kx; ++c)
            m.x(j, c) = 1.0 + cfg.char_stddev * rng.normal();
    for (std::size_t j = 0; j < m.J; ++j)
        for (std::size_t c = 1; c < kw; ++c)
            m.w(j, c) = 1.0 + cfg.char_stddev * rng.normal();

    // Bivariate normal via Cholesky of [[1, rho],[rho, 1]].
    const double rho = cfg.shock_corr;
    const double l22 = std::sqrt(1.0 - rho * rho);
    m.xi.resize(m.J);
    m.omega.resize(m.J);
    for (std::size_t j = 0; j < m.J; ++j) {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        m.xi[j] = z1;
        m.omega[j] = rho * z1 + l22 * z2;
    }
    m.ownership = cfg.conduct.kind == Conduct::ProfitWeight
                      ? cfg.conduct.matrix(m.J)
                      : Mat::identity(m.J);
    return m;
}

}  // namespace

Dataset generate(const ScenarioConfig& cfg) {
    cfg.validate();
    Dataset ds;
    ds.scenario = cfg;
    std::vector<int> failed;

    const Vec cost_gamma = cfg.gamma;
    int t = 0;
    std::size_t obs = 0;
    while (true) {
        if (cfg.target_observations > 0) {
            if (obs >= static_cast<std::size_t>(cfg.target_observations)) break;
        } else if (t >= cfg.T) {
            break;
        }
        MarketData m = draw_market(cfg, t);
        const Vec cost = marginal_cost(m.w, cost_gamma, m.omega);
        try {
            auto eq = solve_structural(cfg.demand, m.x, m.xi, cost, m.ownership,
                                       cfg.solver, t);
            m.prices = eq.prices;
            m.shares = eq.shares;
            m.validate();
            obs += m.J;
            ds.markets.push_back(std::move(m));
        } catch (const NonConvergence&) {
            failed.push_back(t);
        } catch (const SingularMarkupSystem&) {
            failed.push_back(t);
        }
        ++t;
    }
    if (!failed.empty()) {
        std::ostringstream what;
        what << "generate: " << failed.size() << " market(s) failed to converge";
        throw GenerationFailure(failed, what.str());
    }
    return ds;
}

Dataset split(Dataset ds, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw InvalidInput("split: fraction outside (0,1)");
    const std::size_t T = ds.markets.size();
    ds.split_labels.assign(T, Split::Train);

    // Assignment is a pure function of market_id: sort each stratum by id
    // and shuffle with a stratum-keyed stream, so input order cannot matter.
    std::vector<std::size_t> order(T);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return ds.markets[a].market_id < ds.markets[b].market_id;
    });

    std::size_t n_test_total = 0;
    for (std::size_t stratum : {std::size_t{2}, std::size_t{3}, std::size_t{1},
                                std::size_t{4}, std::size_t{5}}) {
        std::vector<std::size_t> idx;
        for (std::size_t i : order)
            if (ds.markets[i].J == stratum) idx.push_back(i);
        if (idx.empty()) continue;
        PhiloxRng shuffler(seed, 1000 + stratum);
        for (std::size_t i = idx.size() - 1; i > 0; --i) {
            const std::size_t k =
                static_cast<std::size_t>(shuffler.uniform() * static_cast<double>(i + 1));
            std::swap(idx[i], idx[std::min(k, i)]);
        }
        const std::size_t n_test = static_cast<std::size_t>(
            std::llround((1.0 - fraction) * static_cast<double>(idx.size())));
        for (std::size_t i = 0; i < n_test; ++i) ds.split_labels[idx[i]] = Split::Test;
        n_test_total += n_test;
    }
    if (T < 2 || n_test_total == 0 || n_test_total == T)
        throw StratificationError("split: too few markets to stratify");
    return ds;
}

bool merger_affects(const MarketData& m, int firm_a, int firm_b) {
    return m.J >= static_cast<std::size_t>(std::max(firm_a, firm_b));
}

Dataset apply_merger(Dataset ds, int firm_a, int firm_b) {
    if (firm_a < 1 || firm_b < 1 || firm_a == firm_b)
        throw InvalidInput("apply_merger: invalid firm pair");
    bool any = false;
    for (auto& m : ds.markets) {
        if (!merger_affects(m, firm_a, firm_b)) continue;
        const std::size_t a = static_cast<std::size_t>(firm_a - 1);
        const std::size_t b = static_cast<std::size_t>(firm_b - 1);
        m.ownership(a, b) = 1.0;
        m.ownership(b, a) = 1.0;
        any = true;
    }
    if (!any)
        throw MergerScopeError("apply_merger: merging firms absent from every market");
    return ds;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream out;
    const std::size_t kx = ds.scenario.demand.beta.size();
    const std::size_t kw = ds.scenario.gamma.size();
    out << "market_id,firm_id,split,price,share";
    for (std::size_t c = 0; c < kx; ++c) out << ",x" << c;
    for (std::size_t c = 0; c < kw; ++c) out << ",w" << c;
    out << ",xi,omega,ownership_row\n";
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        const auto& m = ds.markets[t];
        const char* lab = ds.split_labels.empty()
                              ? ""
                              : (ds.split_labels[t] == Split::Train ? "train" : "test");
        for (std::size_t j = 0; j < m.J; ++j) {
            out << m.market_id << "," << (j + 1) << "," << lab << "," << fmt(m.prices[j])
                << "," << fmt(m.shares[j]);
            for (std::size_t c = 0; c < kx; ++c) out << "," << fmt(m.x(j, c));
            for (std::size_t c = 0; c < kw; ++c) out << "," << fmt(m.w(j, c));
            out << "," << fmt(m.xi[j]);
            out << "," << (m.omega.empty() ? "" : fmt(m.omega[j]));
            out << ",";
            for (std::size_t k = 0; k < m.J; ++k)
                out << (k ? ";" : "") << fmt(m.ownership(j, k));
            out << "\n";
        }
    }
    return out.str();
}

void write_dataset_csv(const std::string& path, const Dataset& ds) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("write_dataset_csv: cannot open " + path);
    f << dataset_to_csv(ds);
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("read_dataset_csv: cannot open " + path);
    std::string header;
    std::getline(f, header);
    std::size_t kx = 0, kw = 0;
    {
        std::istringstream hs(header);
        std::string col;
        while (std::getline(hs, col, ',')) {
            if (col.size() >= 2 && col[0] == 'x' && std::isdigit(col[1])) ++kx;
            if (col.size() >= 2 && col[0] == 'w' && std::isdigit(col[1])) ++kw;
        }
    }
    Dataset ds;
    std::string line;
    std::vector<std::vector<std::string>> rows;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream ls(line);
        std::string fval;
        while (std::getline(ls, fval, ',')) fields.push_back(fval);
        fields.resize(7 + kx + kw + 1);  // allow trailing empties
        rows.push_back(std::move(fields));
    }
    std::size_t i = 0;
    bool any_split = false;
    while (i < rows.size()) {
        const int mkt = std::stoi(rows[i][0]);
        std::size_t jend = i;
        while (jend < rows.size() && std::stoi(rows[jend][0]) == mkt) ++jend;
        const std::size_t J = jend - i;
        MarketData m;
        m.market_id = mkt;
        m.J = J;
        m.prices.resize(J);
        m.shares.resize(J);
        m.x = Mat(J, kx);
        m.w = Mat(J, kw);
        m.xi.resize(J);
        m.ownership = Mat(J, J);
        bool has_omega = !rows[i][5 + kx + kw].empty();
        if (has_omega) m.omega.resize(J);
        Split lab = Split::Train;
        for (std::size_t j = 0; j < J; ++j) {
            const auto& r = rows[i + j];
            if (r[2] == "test") lab = Split::Test;
            if (!r[2].empty()) any_split = true;
            m.prices[j] = std::stod(r[3]);
            m.shares[j] = std::stod(r[4]);
            for (std::size_t c = 0; c < kx; ++c) m.x(j, c) = std::stod(r[5 + c]);
            for (std::size_t c = 0; c < kw; ++c) m.w(j, c) = std::stod(r[5 + kx + c]);
            m.xi[j] = std::stod(r[5 + kx + kw]);
            if (has_omega) m.omega[j] = std::stod(r[6 + kx + kw]);
            std::istringstream os(r[7 + kx + kw]);
            std::string entry;
            std::size_t k = 0;
            while (std::getline(os, entry, ';') && k < J) m.ownership(j, k++) = std::stod(entry);
        }
        ds.markets.push_back(std::move(m));
        ds.split_labels.push_back(lab);
        i = jend;
    }
    if (!any_split) ds.split_labels.clear();
    return ds;
}

std::string scenario_to_text(const ScenarioConfig& cfg) {
    std::ostringstream out;
    out << "T = " << cfg.T << "\n";
    out << "duopoly_weight = " << fmt(cfg.duopoly_weight) << "\n";
    out << "alpha = " << fmt(cfg.demand.alpha) << "\n";
    out << "beta =";
    for (double b : cfg.demand.beta) out << " " << fmt(b);
    out << "\n";
    out << "gamma =";
    for (double g : cfg.gamma) out << " " << fmt(g);
    out << "\n";
    out << "shock_corr = " << fmt(cfg.shock_corr) << "\n";
    out << "char_stddev = " << fmt(cfg.char_stddev) << "\n";
    switch (cfg.conduct.kind) {
        case Conduct::Bertrand: out << "conduct = bertrand\n"; break;
        case Conduct::Monopoly: out << "conduct = monopoly\n"; break;
        case Conduct::PerfectCompetition: out << "conduct = perfect_competition\n"; break;
        case Conduct::ProfitWeight: out << "conduct = profit_weight\n"; break;
    }
    out << "kappa = " << fmt(cfg.conduct.kappa) << "\n";
    out << "seed = " << cfg.seed << "\n";
    out << "split_fraction = " << fmt(cfg.split_fraction) << "\n";
    out << "target_observations = " << cfg.target_observations << "\n";
    out << "solver_tol = " << fmt(cfg.solver.tol) << "\n";
    out << "solver_max_iter = " << cfg.solver.max_iter << "\n";
    out << "solver_damping = " << fmt(cfg.solver.damping) << "\n";
    return out.str();
}

void write_scenario_text(const std::string& path, const ScenarioConfig& cfg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InvalidInput("write_scenario_text: cannot open " + path);
    f << scenario_to_text(cfg);
}

ScenarioConfig read_scenario_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InvalidInput("read_scenario_text: cannot open " + path);
    ScenarioConfig cfg;
    std::string line;
    while (std::getline(f, line)) {
        std::istringstream ss(line);
        std::string key, eq;
        ss >> key >> eq;
        if (key == "T") ss >> cfg.T;
        else if (key == "duopoly_weight") ss >> cfg.duopoly_weight;
        else if (key == "alpha") ss >> cfg.demand.alpha;
        else if (key == "beta") {
            cfg.demand.beta.clear();
            double v;
            while (ss >> v) cfg.demand.beta.push_back(v);
        } else if (key == "gamma") {
            cfg.gamma.clear();
            double v;
            while (ss >> v) cfg.gamma.push_back(v);
        } else if (key == "shock_corr") ss >> cfg.shock_corr;
        else if (key == "char_stddev") ss >> cfg.char_stddev;
        else if (key == "conduct") {
            std::string c;
            ss >> c;
            if (c == "bertrand") cfg.conduct.kind = Conduct::Bertrand;
            else if (c == "monopoly") cfg.conduct.kind = Conduct::Monopoly;
            else if (c == "perfect_competition") cfg.conduct.kind = Conduct::PerfectCompetition;
            else if (c == "profit_weight") cfg.conduct.kind = Conduct::ProfitWeight;
            else throw InvalidInput("read_scenario_text: unknown conduct " + c);
        } else if (key == "kappa") ss >> cfg.conduct.kappa;
        else if (key == "seed") ss >> cfg.seed;
        else if (key == "split_fraction") ss >> cfg.split_fraction;
        else if (key == "target_observations") ss >> cfg.target_observations;
        else if (key == "solver_tol") ss >> cfg.solver.tol;
        else if (key == "solver_max_iter") ss >> cfg.solver.max_iter;
        else if (key == "solver_damping") ss >> cfg.solver.damping;
    }
    return cfg;
}

}  // namespace mergerlab
