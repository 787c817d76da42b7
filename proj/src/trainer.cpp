#include "adafuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "json.hpp"

#include "adafuse/binio.hpp"
#include "adafuse/rng.hpp"

namespace adafuse {

using nlohmann::json;

void TrainConfig::validate() const {
    if (!(max_lr > 0.0)) throw ConfigError("train: max_lr must be > 0");
    if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
        throw ConfigError("train: warmup_ratio must be in [0,1)");
    }
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
}

double cosine_lr(std::size_t step, std::size_t total, double max_lr, double warmup_ratio) {
    if (total == 0) return 0.0;
    const auto warmup = static_cast<std::size_t>(
        std::ceil(warmup_ratio * static_cast<double>(total)));
    if (step < warmup) {
        return max_lr * static_cast<double>(step) / static_cast<double>(warmup);
    }
    const double progress = (total == warmup)
                                ? 1.0
                                : static_cast<double>(step - warmup) /
                                      static_cast<double>(total - warmup);
    return max_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_grad_norm(const std::vector<ParamStore*>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto* store : grads) {
        for (const auto& t : *store) {
            for (double g : t.values()) {
                if (!std::isfinite(g)) {
                    throw NumericError("clip_grad_norm: non-finite gradient in tensor '" +
                                       t.name() + "'");
                }
                sq += g * g;
            }
        }
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto* store : grads) {
            for (auto& t : *store) {
                for (double& g : t.values()) g *= scale;
            }
        }
    }
    return norm;
}

void adamw_update(ParamStore& params, const ParamStore& grads, ParamStore& m, ParamStore& v,
                  std::uint64_t t, double lr, const OptimConfig& cfg) {
    if (t == 0) throw UsageError("adamw_update: step count is 1-based");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t k = 0; k < params.count(); ++k) {
        auto& p = params[k].values();
        const auto& g = grads[k].values();
        auto& mk = m[k].values();
        auto& vk = v[k].values();
        if (p.size() != g.size()) throw DimensionError("adamw_update: shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            mk[i] = cfg.beta1 * mk[i] + (1.0 - cfg.beta1) * g[i];
            vk[i] = cfg.beta2 * vk[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = mk[i] / bc1;
            const double vhat = vk[i] / bc2;
            p[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p[i]);
        }
    }
}

OptimState::OptimState(const ParamStore& lm_params, const ParamStore& asn_params)
    : m_lm(ParamStore::zeros_like(lm_params)),
      v_lm(ParamStore::zeros_like(lm_params)),
      m_asn(ParamStore::zeros_like(asn_params)),
      v_asn(ParamStore::zeros_like(asn_params)) {}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
    out.write("FXCK", 4);
    binio::write_u32(out, ckpt.version);
    binio::write_u64(out, ckpt.step);
    binio::write_u64(out, ckpt.config_hash);
    binio::write_u32(out, static_cast<std::uint32_t>(ckpt.tensors.count()));
    for (const auto& t : ckpt.tensors) {
        binio::write_u32(out, static_cast<std::uint32_t>(t.name().size()));
        out.write(t.name().data(), static_cast<std::streamsize>(t.name().size()));
        binio::write_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) binio::write_u32(out, static_cast<std::uint32_t>(d));
        for (double x : t.values()) binio::write_f64(out, x);
    }
    if (!out) throw IoError("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FXCK", 4) != 0) {
        throw IoError("load_checkpoint: bad magic in " + path.string());
    }
    Checkpoint ckpt;
    ckpt.version = binio::read_u32(in);
    if (ckpt.version != kCheckpointVersion) {
        throw IoError("load_checkpoint: version mismatch in " + path.string() + ": got " +
                      std::to_string(ckpt.version) + ", expected " +
                      std::to_string(kCheckpointVersion));
    }
    ckpt.step = binio::read_u64(in);
    ckpt.config_hash = binio::read_u64(in);
    const std::uint32_t count = binio::read_u32(in);
    for (std::uint32_t k = 0; k < count && in; ++k) {
        const std::uint32_t name_len = binio::read_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t rank = binio::read_u32(in);
        if (rank != 1 && rank != 2) {
            throw IoError("load_checkpoint: bad tensor rank in " + path.string());
        }
        std::uint32_t d0 = binio::read_u32(in);
        std::uint32_t d1 = rank == 2 ? binio::read_u32(in) : 0;
        ParamTensor t = rank == 1 ? ParamTensor(name, d0) : ParamTensor(name, d0, d1);
        for (double& x : t.values()) x = binio::read_f64(in);
        ckpt.tensors.add(std::move(t));
    }
    if (!in) throw IoError("load_checkpoint: truncated file " + path.string());
    return ckpt;
}

TrainState init_train_state(const TrainSetup& setup, const Dataset& data) {
    TinyLmConfig lm_cfg = setup.train.model;
    lm_cfg.vocab = data.vocab;
    TinyLM model = TinyLM::xavier_init(lm_cfg, setup.train.seed);
    AsnParams asn = AsnParams::xavier_init(data.num_sources, data.vocab, setup.train.seed,
                                           setup.selection.layers);
    OptimState opt(model.params(), asn.params());
    return TrainState{std::move(model), std::move(asn), std::move(opt)};
}

Checkpoint state_to_checkpoint(const TrainState& state, std::uint64_t config_hash) {
    Checkpoint ckpt;
    ckpt.step = state.opt.step;
    ckpt.config_hash = config_hash;
    auto copy_all = [&](const ParamStore& store, const std::string& prefix) {
        for (const auto& t : store) {
            ParamTensor named = t.rank() == 1
                                    ? ParamTensor(prefix + t.name(), t.shape()[0])
                                    : ParamTensor(prefix + t.name(), t.shape()[0], t.shape()[1]);
            named.values() = t.values();
            ckpt.tensors.add(std::move(named));
        }
    };
    copy_all(state.model.params(), "");
    copy_all(state.asn.params(), "");
    copy_all(state.opt.m_lm, "opt.m.");
    copy_all(state.opt.v_lm, "opt.v.");
    copy_all(state.opt.m_asn, "opt.m.");
    copy_all(state.opt.v_asn, "opt.v.");
    return ckpt;
}

TrainState state_from_checkpoint(const Checkpoint& ckpt, const TrainSetup& setup,
                                 const Dataset& data) {
    TrainState state = init_train_state(setup, data);
    auto restore = [&](ParamStore& store, const std::string& prefix) {
        for (auto& t : store) {
            const auto& src = ckpt.tensors.at(prefix + t.name());
            if (src.shape() != t.shape()) {
                throw IoError("checkpoint tensor '" + prefix + t.name() + "' has wrong shape");
            }
            t.values() = src.values();
        }
    };
    restore(state.model.params(), "");
    restore(state.asn.params(), "");
    restore(state.opt.m_lm, "opt.m.");
    restore(state.opt.v_lm, "opt.v.");
    restore(state.opt.m_asn, "opt.m.");
    restore(state.opt.v_asn, "opt.v.");
    state.opt.step = ckpt.step;
    return state;
}

StepResult train_step(const std::vector<const Sample*>& batch, TrainState& state,
                      const TrainSetup& setup, std::size_t step, bool keep_fused) {
    if (batch.empty()) throw UsageError("train_step: empty batch");
    const bool adaptive = setup.objective.mode == ObjectiveMode::adaptive;
    const std::size_t num_sources = state.asn.num_sources();

    std::vector<SampleCache> caches;
    caches.reserve(batch.size());
    StepResult result;

    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Sample& sample = *batch[b];
        if (sample.sources.size() != num_sources) {
            throw DimensionError("train_step: sample has wrong source count");
        }
        LmCache lm_cache;
        ProbMatrix target_out = lm_forward(state.model, sample.seq, lm_cache);

        std::vector<const ProbMatrix*> selected;
        std::optional<AsnCache> asn_cache;
        if (adaptive) {
            RngStream rng(setup.train.seed, "select", step, b);
            asn_cache.emplace();
            SelectionResult sel =
                run_selection(state.asn, sample.sources, setup.selection, rng, *asn_cache);
            for (std::size_t i : sel.selected) selected.push_back(&sample.sources[i]);
            result.selections.push_back(std::move(sel));
        } else {
            for (const auto& s : sample.sources) selected.push_back(&s);
        }

        bool depends_on_weights = false;
        ProbMatrix fused = [&]() -> ProbMatrix {
            if (!adaptive) return fuse_average(selected);
            switch (setup.fusion) {
                case FusionMethod::weighted:
                    depends_on_weights = true;
                    return fuse_weighted(selected, result.selections.back().weights);
                case FusionMethod::average:
                    return fuse_average(selected);
                case FusionMethod::maximum:
                    return fuse_max(selected);
                case FusionMethod::weighted_without_selection:
                    return fuse_average(selected);
            }
            throw ConfigError("train_step: unknown fusion method");
        }();
        if (keep_fused) result.fused.push_back(fused);

        caches.push_back(SampleCache{sample.labels, std::move(lm_cache), std::move(target_out),
                                     std::move(selected), std::move(asn_cache), std::move(fused),
                                     depends_on_weights});
    }

    TotalGrads grads = backward_total(state.model, state.asn, caches, setup.objective);
    if (!std::isfinite(grads.loss.total)) {
        throw NumericError("train_step: non-finite loss at step " + std::to_string(step));
    }
    result.loss = grads.loss;
    result.importance = adaptive ? importance_batch(result.selections, num_sources)
                                 : ImportanceVector(num_sources, 0.0);

    const bool asn_has_path =
        adaptive && (setup.objective.lambda_feed > 0.0 ||
                     (setup.objective.lambda_fuse > 0.0 && setup.fusion == FusionMethod::weighted));

    std::vector<ParamStore*> to_clip{&grads.lm};
    if (asn_has_path) to_clip.push_back(&grads.asn);
    result.grad_norm = clip_grad_norm(to_clip, setup.optim.clip_norm);

    result.lr = cosine_lr(step, setup.train.steps, setup.train.max_lr, setup.train.warmup_ratio);
    const std::uint64_t t = state.opt.step + 1;
    adamw_update(state.model.params(), grads.lm, state.opt.m_lm, state.opt.v_lm, t, result.lr,
                 setup.optim);
    if (asn_has_path) {
        adamw_update(state.asn.params(), grads.asn, state.opt.m_asn, state.opt.v_asn, t,
                     result.lr, setup.optim);
    }
    state.opt.step = t;
    return result;
}

namespace {

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::size_t epoch, std::size_t n) {
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    RngStream rng(seed, "shuffle", epoch);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.uniform_int(i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

json selection_to_json(const SelectionResult& sel, const Sample& sample, std::size_t slot) {
    json entry;
    entry["index"] = slot;
    entry["domain"] = sample.domain;
    entry["p"] = sel.probs;
    json selected = json::array();
    for (std::size_t i : sel.selected) selected.push_back(i);
    entry["selected"] = selected;
    entry["weights"] = sel.weights;
    return entry;
}

}  // namespace

TrainOutcome run_training(const TrainSetup& setup, const Dataset& data,
                          const std::filesystem::path& out_dir,
                          const std::optional<std::filesystem::path>& resume) {
    setup.train.validate();
    setup.selection.validate();
    setup.objective.validate();
    if (data.train.empty()) throw UsageError("run_training: empty training split");

    std::filesystem::create_directories(out_dir);
    const bool adaptive = setup.objective.mode == ObjectiveMode::adaptive;

    TrainState state = [&] {
        if (resume) {
            Checkpoint ckpt = load_checkpoint(*resume);
            if (ckpt.config_hash != setup.config_hash) {
                throw ConfigError("resume: checkpoint was produced by a different config");
            }
            return state_from_checkpoint(ckpt, setup, data);
        }
        return init_train_state(setup, data);
    }();
    const std::uint64_t start_step = state.opt.step;
    if (start_step > setup.train.steps) {
        throw ConfigError("resume: checkpoint is past the configured step count");
    }

    const auto mode = resume ? std::ios::app : std::ios::trunc;
    std::ofstream metrics(out_dir / "metrics.jsonl", mode);
    if (!metrics) throw IoError("run_training: cannot open metrics.jsonl");
    std::ofstream trace;
    if (adaptive) {
        trace.open(out_dir / "selection_trace.jsonl", mode);
        if (!trace) throw IoError("run_training: cannot open selection_trace.jsonl");
    }

    const std::size_t n_train = data.train.size();
    const std::size_t batch_size = setup.train.batch_size;
    std::size_t cached_epoch = static_cast<std::size_t>(-1);
    std::vector<std::size_t> perm;

    TrainOutcome outcome;
    for (std::size_t s = start_step; s < setup.train.steps; ++s) {
        std::vector<const Sample*> batch;
        batch.reserve(batch_size);
        for (std::size_t k = 0; k < batch_size; ++k) {
            const std::size_t g = s * batch_size + k;
            const std::size_t epoch = g / n_train;
            if (epoch != cached_epoch) {
                perm = epoch_permutation(setup.train.seed, epoch, n_train);
                cached_epoch = epoch;
            }
            batch.push_back(&data.train[perm[g % n_train]]);
        }

        StepResult res;
        try {
            res = train_step(batch, state, setup, s, setup.dump_fused);
        } catch (const NumericError& e) {
            json dump;
            dump["step"] = s;
            dump["error"] = e.what();
            std::ofstream abort_out(out_dir / "abort_dump.json");
            abort_out << dump.dump(2) << '\n';
            throw;
        }

        json line;
        line["step"] = s;
        line["l_lm"] = res.loss.l_lm;
        line["l_fuse"] = res.loss.l_fuse;
        line["l_feed"] = res.loss.l_feed;
        line["total"] = res.loss.total;
        line["importance"] = res.importance;
        line["lr"] = res.lr;
        line["grad_norm"] = res.grad_norm;
        metrics << line.dump() << '\n';

        if (adaptive) {
            json tline;
            tline["step"] = s;
            json samples = json::array();
            for (std::size_t b = 0; b < res.selections.size(); ++b) {
                samples.push_back(selection_to_json(res.selections[b], *batch[b], b));
            }
            tline["samples"] = samples;
            trace << tline.dump() << '\n';
        }

        if (setup.dump_fused && !res.fused.empty()) {
            const auto dir = out_dir / "fused";
            std::filesystem::create_directories(dir);
            char name[32];
            std::snprintf(name, sizeof(name), "step_%06zu.pdm", s);
            write_pdm(dir / name, res.fused.front());
        }

        outcome.final_loss = res.loss;
        const std::uint64_t completed = s + 1;
        if (setup.train.checkpoint_interval > 0 &&
            completed % setup.train.checkpoint_interval == 0 &&
            completed < setup.train.steps) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_step_%06llu.fxck",
                          static_cast<unsigned long long>(completed));
            save_checkpoint(out_dir / name, state_to_checkpoint(state, setup.config_hash));
        }
    }

    outcome.steps_run = setup.train.steps - start_step;
    outcome.final_checkpoint = out_dir / "checkpoint_final.fxck";
    save_checkpoint(outcome.final_checkpoint, state_to_checkpoint(state, setup.config_hash));
    return outcome;
}

}  // namespace adafuse
