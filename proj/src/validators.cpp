#include "mergerlab/validators.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mergerlab/errors.hpp"

namespace mergerlab {

ExclusionReport check_exclusion(const Dataset& ds,
                                const std::vector<std::string>& z_names,
                                const std::vector<std::string>& w_names) {
    ExclusionReport rep;
    rep.z_columns = z_names;
    for (const auto& zn : z_names) {
        if (zn.rfind("own_x", 0) == 0) rep.has_excluded_demand_shifter = true;
        if (std::find(w_names.begin(), w_names.end(), zn) != w_names.end()) {
            rep.cost_shifter_leak = true;
            rep.violations.push_back("cost shifter in instrument set: " + zn);
        }
    }
    if (!rep.has_excluded_demand_shifter)
        rep.violations.push_back("no excluded demand shifter among instruments");

    // first stage: own firm share on z, train split, plain OLS with intercept
    std::vector<Vec> zrows;
    Vec shares;
    for (std::size_t t = 0; t < ds.markets.size(); ++t) {
        if (!ds.split_labels.empty() && ds.split_labels[t] == Split::Test) continue;
        const auto& m = ds.markets[t];
        for (std::size_t j = 0; j < m.J; ++j) {
            Vec z = instruments_for(m, j);
            z.insert(z.begin(), 1.0);
            zrows.push_back(std::move(z));
            shares.push_back(m.shares[j]);
        }
    }
    if (!zrows.empty()) {
        Mat zm(zrows.size(), zrows[0].size());
        for (std::size_t r = 0; r < zrows.size(); ++r)
            for (std::size_t c = 0; c < zm.cols(); ++c) zm(r, c) = zrows[r][c];
        try {
            const Vec coef = qr_least_squares(zm, shares);
            const Vec fitted = matvec(zm, coef);
            double mean = 0.0;
            for (double s : shares) mean += s;
            mean /= static_cast<double>(shares.size());
            double ssr = 0.0, sst = 0.0;
            for (std::size_t i = 0; i < shares.size(); ++i) {
                ssr += (shares[i] - fitted[i]) * (shares[i] - fitted[i]);
                sst += (shares[i] - mean) * (shares[i] - mean);
            }
            rep.first_stage_r2_own_share = sst > 0.0 ? 1.0 - ssr / sst : 0.0;
        } catch (const RankDeficientDesign&) {
            rep.violations.push_back("first stage design rank-deficient");
        }
    }
    rep.notes =
        "completeness of the instrument set is not testable from data; "
        "only relevance proxies are reported";
    return rep;
}

std::string exclusion_report_text(const ExclusionReport& rep) {
    std::ostringstream out;
    out << "instrument exclusion check: " << (rep.pass() ? "pass" : "violation") << "\n";
    out << "instruments:";
    for (const auto& z : rep.z_columns) out << " " << z;
    out << "\n";
    out << "excluded demand shifter present: "
        << (rep.has_excluded_demand_shifter ? "yes" : "no") << "\n";
    out << "cost shifter leak: " << (rep.cost_shifter_leak ? "yes" : "no") << "\n";
    for (const auto& v : rep.violations) out << "violation: " << v << "\n";
    out << "first-stage R2 (own share on z): " << rep.first_stage_r2_own_share << "\n";
    out << rep.notes << "\n";
    return out.str();
}

void write_exclusion_report(const std::string& dir, const ExclusionReport& rep) {
    std::filesystem::create_directories(dir);
    std::ofstream txt(dir + "/exclusion_report.txt", std::ios::binary);
    txt << exclusion_report_text(rep);
    std::ofstream csv(dir + "/exclusion_report.csv", std::ios::binary);
    csv << "check,value\n";
    csv << "pass," << (rep.pass() ? 1 : 0) << "\n";
    csv << "has_excluded_demand_shifter," << (rep.has_excluded_demand_shifter ? 1 : 0)
        << "\n";
    csv << "cost_shifter_leak," << (rep.cost_shifter_leak ? 1 : 0) << "\n";
    csv << "first_stage_r2_own_share," << rep.first_stage_r2_own_share << "\n";
}

}  // namespace mergerlab
