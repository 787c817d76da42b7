#pragma once

#include <cstdint>
#include <vector>

#include "adafuse/common.hpp"
#include "adafuse/prob.hpp"
#include "adafuse/rng.hpp"

namespace adafuse {

enum class SelectionMetric { softmax, gumbel, noisy };
enum class CountMode { adaptive, top2, all };
enum class Pooling { mean_logits, mean_probs };

struct SelectionConfig {
    double threshold = 0.15;
    SelectionMetric metric = SelectionMetric::softmax;
    double gumbel_temperature = 1.0;
    double noise_scale = 1.0;
    CountMode count_mode = CountMode::adaptive;
    Pooling pooling = Pooling::mean_logits;
    int layers = 3;  // 1 (single linear) or 3 (MLP), ablation axis
    double renorm_eps = 1e-8;

    void validate() const;
};

// Selection network parameters. The 3-layer form maps the length-F
// concatenated per-position input (F = num_sources * vocab) through
// F -> 2F -> F -> M with GELU between layers; the 1-layer ablation maps
// F -> M directly. Weights are Xavier-uniform, biases zero.
class AsnParams {
public:
    static AsnParams xavier_init(std::size_t num_sources, std::size_t vocab,
                                 std::uint64_t seed, int layers = 3);
    static AsnParams zeros(std::size_t num_sources, std::size_t vocab, int layers = 3);

    std::size_t num_sources() const { return num_sources_; }
    std::size_t vocab() const { return vocab_; }
    std::size_t feature_dim() const { return num_sources_ * vocab_; }
    int layers() const { return layers_; }

    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    const ParamTensor& weight(int layer) const;  // 1-based
    const ParamTensor& bias(int layer) const;

private:
    AsnParams(std::size_t num_sources, std::size_t vocab, int layers);

    std::size_t num_sources_;
    std::size_t vocab_;
    int layers_;
    ParamStore params_;
};

// Per-sample selection output: pooled logits z, probabilities p, the binary
// mask, the selected source indices (ascending), and the compact
// renormalized weights over the selected set.
struct SelectionResult {
    std::vector<double> logits;
    std::vector<double> probs;
    std::vector<std::uint8_t> mask;
    std::vector<std::size_t> selected;
    std::vector<double> weights;

    std::size_t num_selected() const { return selected.size(); }
};

// Forward intermediates for the hand-derived backward pass.
struct AsnCache {
    bool valid = false;
    std::size_t positions = 0;
    Mat normalized;        // N x F layer-normalized inputs
    std::vector<Mat> pre;  // per layer, N x fan_out, pre-activation
    std::vector<Mat> act;  // per hidden layer, N x fan_out, post-GELU
    Mat position_logits;   // N x M
    Mat position_probs;    // N x M, only for probability pooling
    std::vector<double> pooled_logits;
    Pooling pooling = Pooling::mean_logits;
    // Derivative of p with respect to the (possibly noise-shifted) softmax
    // argument, as a scale on the pooled logits: 1 for softmax/noisy,
    // 1/temperature for the Gumbel metric.
    double logit_scale = 1.0;
    SelectionResult selection;
    double mass_sum = 0.0;  // sum of masked probabilities plus renorm_eps
};

// Runs the network over every position: the M source rows at position n are
// concatenated, layer-normalized, and mapped to M logits; pooled logits are
// the mean over positions.
void asn_forward(const AsnParams& params, const std::vector<ProbMatrix>& sources,
                 AsnCache& cache);

// Selection probabilities from pooled logits: plain softmax, Gumbel
// (softmax((z+g)/temperature)), or noisy (softmax(z + scale*eta)). The noise
// draws come from the provided stream.
std::vector<double> probs_from_logits(const std::vector<double>& z,
                                      const SelectionConfig& config, RngStream& rng);

// Thresholded candidate selection with the guaranteed-nonempty fallback:
// keep sources with p > tau; if none qualify, keep the single highest-p
// source (lowest index on ties).
std::pair<std::vector<std::size_t>, std::vector<std::uint8_t>> select_candidates(
    const std::vector<double>& p, double tau);

std::pair<std::vector<std::size_t>, std::vector<std::uint8_t>> select_top_k(
    const std::vector<double>& p, std::size_t k);

// Masked renormalization: p * m / (sum_i p_i m_i + eps), compacted to the
// selected entries in source-index order.
std::vector<double> renorm_weights(const std::vector<double>& p,
                                   const std::vector<std::uint8_t>& mask, double eps);

// Full selection pipeline for one sample; fills the cache for backward.
SelectionResult run_selection(const AsnParams& params, const std::vector<ProbMatrix>& sources,
                              const SelectionConfig& config, RngStream& rng, AsnCache& cache);

// Gradients for every network parameter given upstream gradients on the
// compact weights (length K) and optionally on the pooled logits (length M;
// pass empty for none). The selection mask is treated as a constant; source
// matrices are frozen and receive no gradient.
ParamStore asn_backward(const AsnParams& params, const AsnCache& cache,
                        const std::vector<double>& d_weights,
                        const std::vector<double>& d_logits);

}  // namespace adafuse
