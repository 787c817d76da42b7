#pragma once

#include <optional>
#include <vector>

#include "adafuse/fusion.hpp"
#include "adafuse/prob.hpp"
#include "adafuse/selector.hpp"
#include "adafuse/tiny_lm.hpp"

namespace adafuse {

enum class ObjectiveMode { adaptive, fuse_all_baseline };

struct ObjectiveConfig {
    ObjectiveMode mode = ObjectiveMode::adaptive;
    double lambda_fuse = 0.1;
    double lambda_feed = 0.5;
    double baseline_lambda = 0.9;  // weight on the language-model term in baseline mode
    double eps_feed = 1e-10;
    // When set, the feedback loss is computed over only the sources with
    // nonzero batch importance instead of all M sources.
    bool feed_selected_only = false;

    void validate() const;
};

struct LossBreakdown {
    double l_lm = 0.0;
    double l_fuse = 0.0;
    double l_feed = 0.0;
    double total = 0.0;
};

// Per-source importance accumulated over a batch: each sample's compact
// weights scattered back to source indices and summed.
using ImportanceVector = std::vector<double>;

double loss_lm(const ProbMatrix& target_out, const OneHotLabels& labels);

// Cross entropy with the fused matrix as the soft target:
// mean over rows of -sum_v P_f * log(T).
double loss_fuse(const ProbMatrix& target_out, const ProbMatrix& fused);

ImportanceVector importance_batch(const std::vector<SelectionResult>& batch,
                                  std::size_t num_sources);

// Squared coefficient of variation: population variance over the entries
// divided by (mean^2 + eps).
double loss_feed_cv2(const ImportanceVector& importance, double eps_feed);

// Feedback loss as configured: all M entries, or only those with nonzero
// importance when feed_selected_only is set.
double loss_feed(const ImportanceVector& importance, const ObjectiveConfig& config);

LossBreakdown total_loss(const ProbMatrix& target_out, const OneHotLabels& labels,
                         const ProbMatrix& fused, const ImportanceVector& importance,
                         const ObjectiveConfig& config);

LossBreakdown total_loss_baseline(const ProbMatrix& target_out, const OneHotLabels& labels,
                                  const ProbMatrix& fused, double lambda);

// Cached forwards for one sample of a training batch.
struct SampleCache {
    OneHotLabels labels;
    LmCache lm;                            // includes the target output probabilities
    ProbMatrix target_out;
    std::vector<const ProbMatrix*> selected_sources;
    std::optional<AsnCache> asn;           // absent in baseline mode
    ProbMatrix fused;
    // False for the average/maximum fusion variants, whose output is
    // constant in the selection weights.
    bool fused_depends_on_weights = true;
};

struct TotalGrads {
    ParamStore lm;
    ParamStore asn;
    LossBreakdown loss;
};

// Joint backward over a batch. Language-model gradients flow to the target
// model only; fusion gradients flow to the target model (through its output)
// and to the selection network (through the fusion weights); feedback
// gradients flow to the selection network only. Source matrices are frozen.
// In baseline mode the selection network receives no gradient.
TotalGrads backward_total(const TinyLM& model, const AsnParams& asn_params,
                          const std::vector<SampleCache>& batch, const ObjectiveConfig& config);

}  // namespace adafuse
