#pragma once

#include <cstdint>

#include "adafuse/common.hpp"
#include "adafuse/prob.hpp"

namespace adafuse {

struct TinyLmConfig {
    std::size_t vocab = 32;
    std::size_t context = 4;
    std::size_t embed_dim = 16;
    std::size_t hidden_dim = 32;
};

// Fixed-context MLP language model: the trainable target. Position n is
// predicted from the kPadId-padded window of the preceding `context` ids:
// concatenated embeddings -> GELU hidden layer -> softmax over the vocab.
class TinyLM {
public:
    explicit TinyLM(TinyLmConfig cfg);  // all parameters zero
    static TinyLM xavier_init(TinyLmConfig cfg, std::uint64_t seed);

    const TinyLmConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::size_t param_count() const { return params_.scalar_count(); }

    const ParamTensor& embed() const { return params_.at("lm.embed"); }
    const ParamTensor& hidden_w() const { return params_.at("lm.hidden_w"); }
    const ParamTensor& hidden_b() const { return params_.at("lm.hidden_b"); }
    const ParamTensor& out_w() const { return params_.at("lm.out_w"); }
    const ParamTensor& out_b() const { return params_.at("lm.out_b"); }

private:
    TinyLmConfig cfg_;
    ParamStore params_;
};

// Forward intermediates kept for the hand-derived backward pass.
struct LmCache {
    bool valid = false;
    std::vector<std::uint32_t> context_ids;  // N * context, padded windows
    Mat x;       // N x (context*embed_dim) concatenated embeddings
    Mat pre;     // N x hidden, pre-GELU
    Mat hidden;  // N x hidden, post-GELU
    Mat probs;   // N x vocab
};

ProbMatrix lm_forward(const TinyLM& model, const TokenSeq& seq);
ProbMatrix lm_forward(const TinyLM& model, const TokenSeq& seq, LmCache& cache);

// Gradients of a scalar loss for every model parameter, given dL/dP where P
// is the forward output probability matrix. The softmax Jacobian is applied
// internally.
ParamStore lm_backward(const TinyLM& model, const LmCache& cache, const Mat& upstream);

}  // namespace adafuse
