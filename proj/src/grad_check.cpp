#include "adafuse/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace adafuse {

ParamStore finite_diff_grad(const LossFn& loss, const ParamStore& params, double step) {
    if (step <= 0.0) throw UsageError("finite_diff_grad: step must be > 0");
    ParamStore work = params;
    ParamStore grads = ParamStore::zeros_like(params);
    for (std::size_t t = 0; t < work.count(); ++t) {
        auto& values = work[t].values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + step;
            const double fp = loss(work);
            values[i] = saved - step;
            const double fm = loss(work);
            values[i] = saved;
            if (!std::isfinite(fp) || !std::isfinite(fm)) {
                throw NumericError("finite_diff_grad: non-finite loss at tensor '" +
                                   work[t].name() + "'");
            }
            grads[t].values()[i] = (fp - fm) / (2.0 * step);
        }
    }
    return grads;
}

double max_rel_error(const ParamStore& a, const ParamStore& b, double floor) {
    if (a.count() != b.count()) throw DimensionError("max_rel_error: store size mismatch");
    double worst = 0.0;
    for (std::size_t t = 0; t < a.count(); ++t) {
        const auto& av = a[t].values();
        const auto& bv = b[t].values();
        if (av.size() != bv.size()) throw DimensionError("max_rel_error: tensor size mismatch");
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double denom = std::max({std::abs(av[i]), std::abs(bv[i]), floor});
            worst = std::max(worst, std::abs(av[i] - bv[i]) / denom);
        }
    }
    return worst;
}

double max_rel_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
    if (a.size() != b.size()) throw DimensionError("max_rel_error: vector size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace adafuse
