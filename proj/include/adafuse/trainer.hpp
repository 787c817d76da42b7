#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "adafuse/dataset.hpp"
#include "adafuse/objective.hpp"
#include "adafuse/selector.hpp"
#include "adafuse/tiny_lm.hpp"

namespace adafuse {

struct OptimConfig {
    double beta1 = 0.9;
    double beta2 = 0.95;
    double weight_decay = 0.1;
    double clip_norm = 1.0;
    double eps = 1e-8;
};

struct TrainConfig {
    double max_lr = 3e-3;  // desk-scale default; larger models want 3e-5/1e-5
    double warmup_ratio = 0.008;
    std::size_t steps = 500;
    std::size_t batch_size = 8;
    std::size_t checkpoint_interval = 0;  // 0 = final checkpoint only
    std::uint64_t seed = 0;
    TinyLmConfig model;  // vocab is taken from the dataset at init

    void validate() const;
};

// Everything a training run needs besides the data.
struct TrainSetup {
    TrainConfig train;
    SelectionConfig selection;
    ObjectiveConfig objective;
    FusionMethod fusion = FusionMethod::weighted;
    OptimConfig optim;
    bool dump_fused = false;
    std::uint64_t config_hash = 0;
};

// Linear warmup from zero over ceil(warmup_ratio * total) steps, then cosine
// decay from max_lr to zero at step == total.
double cosine_lr(std::size_t step, std::size_t total, double max_lr, double warmup_ratio);

// Scales every gradient in place by max_norm/norm when the global L2 norm
// across all stores exceeds max_norm. Returns the pre-clip norm. Non-finite
// gradients abort with the offending tensor named.
double clip_grad_norm(const std::vector<ParamStore*>& grads, double max_norm);

// Decoupled-weight-decay Adam step with bias correction; t is the 1-based
// update count.
void adamw_update(ParamStore& params, const ParamStore& grads, ParamStore& m, ParamStore& v,
                  std::uint64_t t, double lr, const OptimConfig& cfg);

// First/second moment accumulators for both parameter sets, one shared step
// counter (the target model and the selection network share one optimizer).
struct OptimState {
    OptimState(const ParamStore& lm_params, const ParamStore& asn_params);
    ParamStore m_lm, v_lm, m_asn, v_asn;
    std::uint64_t step = 0;  // completed updates
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::uint64_t step = 0;
    std::uint64_t config_hash = 0;
    ParamStore tensors;
};

// "FXCK" container: magic, u32 version, u64 step, u64 config hash, then
// length-prefixed named tensors (u32 name length, name bytes, u32 rank,
// u32 dims, little-endian f64 values). Round-trips bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

struct TrainState {
    TinyLM model;
    AsnParams asn;
    OptimState opt;
};

TrainState init_train_state(const TrainSetup& setup, const Dataset& data);
Checkpoint state_to_checkpoint(const TrainState& state, std::uint64_t config_hash);
TrainState state_from_checkpoint(const Checkpoint& ckpt, const TrainSetup& setup,
                                 const Dataset& data);

struct StepResult {
    LossBreakdown loss;
    std::vector<SelectionResult> selections;
    ImportanceVector importance;
    double lr = 0.0;
    double grad_norm = 0.0;
    std::vector<ProbMatrix> fused;  // populated only when dumping is enabled
};

// One full update: per-sample forward (target model, selection, fusion),
// batch losses, joint backward, clip, AdamW. Throws NumericError on a
// non-finite loss or gradient.
StepResult train_step(const std::vector<const Sample*>& batch, TrainState& state,
                      const TrainSetup& setup, std::size_t step, bool keep_fused = false);

struct TrainOutcome {
    std::filesystem::path final_checkpoint;
    LossBreakdown final_loss;
    std::uint64_t steps_run = 0;
};

// Runs the configured number of steps over the dataset with a seeded
// shuffled-epoch schedule, appending one metrics line per step (and one
// selection-trace line per step in adaptive mode). Checkpoints at the
// configured interval and at the end. Resuming from a checkpoint replays
// the remaining steps byte-identically.
TrainOutcome run_training(const TrainSetup& setup, const Dataset& data,
                          const std::filesystem::path& out_dir,
                          const std::optional<std::filesystem::path>& resume = {});

}  // namespace adafuse
