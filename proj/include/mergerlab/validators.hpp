#pragma once

#include <string>

#include "mergerlab/datagen.hpp"
#include "mergerlab/vmm.hpp"

namespace mergerlab {

/// Diagnostics for the identification setup. Always reports, never throws:
/// structural violations are flags, relevance is a first-stage R-squared.
/// Completeness of the instrument set is not testable from data; the report
/// says so instead of pretending otherwise.
struct ExclusionReport {
    bool has_excluded_demand_shifter = false;
    bool cost_shifter_leak = false;        // some w column appears in z
    std::vector<std::string> z_columns;
    std::vector<std::string> violations;
    double first_stage_r2_own_share = 0.0;
    std::string notes;

    bool pass() const { return has_excluded_demand_shifter && !cost_shifter_leak; }
};

/// Structural check of the instrument layout plus a linear first-stage
/// projection of the own (firm) share on z over the train split.
ExclusionReport check_exclusion(const Dataset& ds,
                                const std::vector<std::string>& z_names,
                                const std::vector<std::string>& w_names);

std::string exclusion_report_text(const ExclusionReport& rep);
void write_exclusion_report(const std::string& dir, const ExclusionReport& rep);

}  // namespace mergerlab
