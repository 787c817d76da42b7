#pragma once

#include <functional>

#include "adafuse/common.hpp"

namespace adafuse {

using LossFn = std::function<double(const ParamStore&)>;

// Central finite differences (f(x+s) - f(x-s)) / (2s) over every scalar in
// the store. The loss function must be deterministic. This is the oracle
// every hand-derived backward pass is validated against.
ParamStore finite_diff_grad(const LossFn& loss, const ParamStore& params, double step);

// max over scalars of |a-b| / max(|a|, |b|, floor).
double max_rel_error(const ParamStore& a, const ParamStore& b, double floor = 1e-6);
double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                     double floor = 1e-6);

}  // namespace adafuse
