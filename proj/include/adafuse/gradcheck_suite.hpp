#pragma once

#include <string>
#include <vector>

namespace adafuse {

struct GradCheckReport {
    std::string module;
    double max_rel_error = 0.0;
    double tolerance = 1e-4;
    bool pass = false;
};

// Validates every registered hand-derived backward pass against central
// finite differences on randomized small instances, one report per module.
// `inject_error_module` perturbs that module's analytic gradient before
// comparison (fault-injection hook for testing the harness itself).
std::vector<GradCheckReport> run_gradcheck(std::size_t num_seeds = 20,
                                           const std::string& inject_error_module = "");

}  // namespace adafuse
