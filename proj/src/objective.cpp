#include "adafuse/objective.hpp"

#include <cmath>

namespace adafuse {

namespace {

void add_scaled(ParamStore& dst, const ParamStore& src, double scale) {
    for (std::size_t t = 0; t < dst.count(); ++t) {
        auto& d = dst[t].values();
        const auto& s = src[t].values();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
    }
}

// d(CV^2)/d(entry) over the given index set.
std::vector<double> cv2_gradient(const ImportanceVector& importance,
                                 const std::vector<std::size_t>& active, double eps) {
    const double n = static_cast<double>(active.size());
    double mean = 0.0;
    for (std::size_t i : active) mean += importance[i];
    mean /= n;
    double var = 0.0;
    for (std::size_t i : active) {
        var += (importance[i] - mean) * (importance[i] - mean);
    }
    var /= n;
    const double denom = mean * mean + eps;
    std::vector<double> grad(importance.size(), 0.0);
    for (std::size_t i : active) {
        grad[i] = (2.0 / n) * ((importance[i] - mean) * denom - var * mean) / (denom * denom);
    }
    return grad;
}

std::vector<std::size_t> feed_active_set(const ImportanceVector& importance,
                                         const ObjectiveConfig& config) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < importance.size(); ++i) {
        if (!config.feed_selected_only || importance[i] > 0.0) active.push_back(i);
    }
    return active;
}

}  // namespace

void ObjectiveConfig::validate() const {
    if (lambda_fuse < 0.0) throw ConfigError("objective: lambda_fuse must be >= 0");
    if (lambda_feed < 0.0) throw ConfigError("objective: lambda_feed must be >= 0");
    if (baseline_lambda < 0.0 || baseline_lambda > 1.0) {
        throw ConfigError("objective: baseline_lambda must be in [0,1]");
    }
    if (!(eps_feed > 0.0)) throw ConfigError("objective: eps_feed must be > 0");
}

double loss_lm(const ProbMatrix& target_out, const OneHotLabels& labels) {
    return cross_entropy_rows(target_out, labels);
}

double loss_fuse(const ProbMatrix& target_out, const ProbMatrix& fused) {
    return cross_entropy_rows(target_out, fused);
}

ImportanceVector importance_batch(const std::vector<SelectionResult>& batch,
                                  std::size_t num_sources) {
    if (batch.empty()) throw UsageError("importance_batch: empty batch");
    ImportanceVector importance(num_sources, 0.0);
    for (const auto& sel : batch) {
        for (std::size_t j = 0; j < sel.selected.size(); ++j) {
            if (sel.selected[j] >= num_sources) {
                throw DimensionError("importance_batch: selected index out of range");
            }
            importance[sel.selected[j]] += sel.weights[j];
        }
    }
    return importance;
}

double loss_feed_cv2(const ImportanceVector& importance, double eps_feed) {
    if (importance.size() < 2) throw DimensionError("loss_feed_cv2: need at least 2 entries");
    const double n = static_cast<double>(importance.size());
    double mean = 0.0;
    for (double x : importance) mean += x;
    mean /= n;
    double var = 0.0;
    for (double x : importance) var += (x - mean) * (x - mean);
    var /= n;
    return var / (mean * mean + eps_feed);
}

double loss_feed(const ImportanceVector& importance, const ObjectiveConfig& config) {
    if (!config.feed_selected_only) return loss_feed_cv2(importance, config.eps_feed);
    ImportanceVector active;
    for (double x : importance) {
        if (x > 0.0) active.push_back(x);
    }
    if (active.size() < 2) return 0.0;
    return loss_feed_cv2(active, config.eps_feed);
}

LossBreakdown total_loss(const ProbMatrix& target_out, const OneHotLabels& labels,
                         const ProbMatrix& fused, const ImportanceVector& importance,
                         const ObjectiveConfig& config) {
    config.validate();
    if (config.mode != ObjectiveMode::adaptive) {
        throw ConfigError("total_loss: requires adaptive mode");
    }
    LossBreakdown out;
    out.l_lm = loss_lm(target_out, labels);
    out.l_fuse = loss_fuse(target_out, fused);
    out.l_feed = loss_feed(importance, config);
    out.total = out.l_lm + config.lambda_fuse * out.l_fuse + config.lambda_feed * out.l_feed;
    return out;
}

LossBreakdown total_loss_baseline(const ProbMatrix& target_out, const OneHotLabels& labels,
                                  const ProbMatrix& fused, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) {
        throw ConfigError("total_loss_baseline: lambda must be in [0,1]");
    }
    LossBreakdown out;
    out.l_lm = loss_lm(target_out, labels);
    out.l_fuse = loss_fuse(target_out, fused);
    out.l_feed = 0.0;
    out.total = lambda * out.l_lm + (1.0 - lambda) * out.l_fuse;
    return out;
}

TotalGrads backward_total(const TinyLM& model, const AsnParams& asn_params,
                          const std::vector<SampleCache>& batch, const ObjectiveConfig& config) {
    config.validate();
    if (batch.empty()) throw UsageError("backward_total: empty batch");
    const bool adaptive = config.mode == ObjectiveMode::adaptive;
    const double B = static_cast<double>(batch.size());
    const std::size_t M = asn_params.num_sources();

    TotalGrads out;
    out.lm = ParamStore::zeros_like(model.params());
    out.asn = ParamStore::zeros_like(asn_params.params());

    double lm_sum = 0.0;
    double fuse_sum = 0.0;
    for (const auto& sample : batch) {
        if (!sample.lm.valid) throw UsageError("backward_total: missing forward cache");
        if (adaptive && (!sample.asn || !sample.asn->valid)) {
            throw UsageError("backward_total: missing selection cache");
        }
        lm_sum += loss_lm(sample.target_out, sample.labels);
        fuse_sum += loss_fuse(sample.target_out, sample.fused);
    }

    ImportanceVector importance;
    std::vector<double> feed_grad;  // lambda_feed * d(l_feed)/d(importance_i)
    double l_feed = 0.0;
    if (adaptive) {
        std::vector<SelectionResult> sels;
        sels.reserve(batch.size());
        for (const auto& sample : batch) sels.push_back(sample.asn->selection);
        importance = importance_batch(sels, M);
        l_feed = loss_feed(importance, config);
        if (config.lambda_feed > 0.0) {
            auto active = feed_active_set(importance, config);
            if (active.size() >= 2) {
                feed_grad = cv2_gradient(importance, active, config.eps_feed);
                for (double& g : feed_grad) g *= config.lambda_feed;
            }
        }
    }

    const double w_lm = adaptive ? 1.0 : config.baseline_lambda;
    const double w_fuse = adaptive ? config.lambda_fuse : 1.0 - config.baseline_lambda;

    for (const auto& sample : batch) {
        const auto& T = sample.target_out;
        const std::size_t N = T.rows();
        const std::size_t V = T.cols();
        const double inv_bn = 1.0 / (B * static_cast<double>(N));

        // Upstream on the target's output probabilities. The log is clamped
        // below kLogClampEps, so clamped entries carry no gradient.
        Mat up(N, V);
        for (std::size_t n = 0; n < N; ++n) {
            const double* t = T.row(n);
            const double* pf = sample.fused.row(n);
            double* u = up.row(n);
            for (std::size_t v = 0; v < V; ++v) {
                if (t[v] <= kLogClampEps) continue;
                double g = 0.0;
                if (v == sample.labels.hot(n)) g -= w_lm / t[v];
                g -= w_fuse * pf[v] / t[v];
                u[v] = g * inv_bn;
            }
        }
        add_scaled(out.lm, lm_backward(model, sample.lm, up), 1.0);

        const bool fuse_path = adaptive && config.lambda_fuse > 0.0 &&
                               sample.fused_depends_on_weights;
        if (!adaptive || (!fuse_path && feed_grad.empty())) continue;

        const auto& sel = sample.asn->selection;
        std::vector<double> d_weights(sel.selected.size(), 0.0);
        if (fuse_path) {
            Mat d_fused(N, V);
            for (std::size_t n = 0; n < N; ++n) {
                const double* t = T.row(n);
                double* d = d_fused.row(n);
                for (std::size_t v = 0; v < V; ++v) {
                    d[v] = -config.lambda_fuse * inv_bn * std::log(std::max(t[v], kLogClampEps));
                }
            }
            d_weights = fuse_backward(sample.selected_sources, d_fused);
        }
        if (!feed_grad.empty()) {
            for (std::size_t j = 0; j < sel.selected.size(); ++j) {
                d_weights[j] += feed_grad[sel.selected[j]];
            }
        }
        add_scaled(out.asn, asn_backward(asn_params, *sample.asn, d_weights, {}), 1.0);
    }

    out.loss.l_lm = lm_sum / B;
    out.loss.l_fuse = fuse_sum / B;
    out.loss.l_feed = l_feed;
    if (adaptive) {
        out.loss.total = out.loss.l_lm + config.lambda_fuse * out.loss.l_fuse +
                         config.lambda_feed * out.loss.l_feed;
    } else {
        out.loss.total = config.baseline_lambda * out.loss.l_lm +
                         (1.0 - config.baseline_lambda) * out.loss.l_fuse;
    }
    return out;
}

}  // namespace adafuse
