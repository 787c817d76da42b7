#include "adafuse/tiny_lm.hpp"

#include <cmath>

#include "adafuse/rng.hpp"

namespace adafuse {

namespace {

void xavier_fill(ParamTensor& t, RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    for (double& x : t.values()) x = rng.uniform(-bound, bound);
}

}  // namespace

TinyLM::TinyLM(TinyLmConfig cfg) : cfg_(cfg) {
    if (cfg_.vocab < 2 || cfg_.context < 1 || cfg_.embed_dim < 1 || cfg_.hidden_dim < 1) {
        throw ConfigError("TinyLM: invalid dimensions");
    }
    params_.add(ParamTensor("lm.embed", cfg_.vocab, cfg_.embed_dim));
    params_.add(ParamTensor("lm.hidden_w", cfg_.context * cfg_.embed_dim, cfg_.hidden_dim));
    params_.add(ParamTensor("lm.hidden_b", cfg_.hidden_dim));
    params_.add(ParamTensor("lm.out_w", cfg_.hidden_dim, cfg_.vocab));
    params_.add(ParamTensor("lm.out_b", cfg_.vocab));
}

TinyLM TinyLM::xavier_init(TinyLmConfig cfg, std::uint64_t seed) {
    TinyLM model(cfg);
    RngStream rng(seed, "lm_init");
    xavier_fill(model.params_.at("lm.embed"), rng);
    xavier_fill(model.params_.at("lm.hidden_w"), rng);
    xavier_fill(model.params_.at("lm.out_w"), rng);
    return model;
}

ProbMatrix lm_forward(const TinyLM& model, const TokenSeq& seq) {
    LmCache cache;
    return lm_forward(model, seq, cache);
}

ProbMatrix lm_forward(const TinyLM& model, const TokenSeq& seq, LmCache& cache) {
    const auto& cfg = model.config();
    const std::size_t N = seq.length();
    if (N == 0) throw DimensionError("lm_forward: empty sequence");
    for (std::uint32_t id : seq.ids) {
        if (id >= cfg.vocab) throw VocabError("lm_forward: token id out of range");
    }

    const std::size_t c = cfg.context;
    const std::size_t d = cfg.embed_dim;
    const std::size_t h = cfg.hidden_dim;
    const std::size_t V = cfg.vocab;
    const auto& E = model.embed();
    const auto& Wh = model.hidden_w();
    const auto& bh = model.hidden_b();
    const auto& Wo = model.out_w();
    const auto& bo = model.out_b();

    cache.context_ids.assign(N * c, kPadId);
    cache.x = Mat(N, c * d);
    cache.pre = Mat(N, h);
    cache.hidden = Mat(N, h);
    cache.probs = Mat(N, V);

    for (std::size_t n = 0; n < N; ++n) {
        // Window of the c ids preceding position n, left-padded with kPadId.
        for (std::size_t k = 0; k < c; ++k) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(n) -
                                       static_cast<std::ptrdiff_t>(c) +
                                       static_cast<std::ptrdiff_t>(k);
            cache.context_ids[n * c + k] =
                (src >= 0) ? seq.ids[static_cast<std::size_t>(src)] : kPadId;
        }
        double* x = cache.x.row(n);
        for (std::size_t k = 0; k < c; ++k) {
            const std::uint32_t id = cache.context_ids[n * c + k];
            for (std::size_t j = 0; j < d; ++j) x[k * d + j] = E.at(id, j);
        }
        double* a = cache.pre.row(n);
        for (std::size_t j = 0; j < h; ++j) a[j] = bh[j];
        for (std::size_t i = 0; i < c * d; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            const double* wrow = &Wh.values()[i * h];
            for (std::size_t j = 0; j < h; ++j) a[j] += xi * wrow[j];
        }
        double* g = cache.hidden.row(n);
        for (std::size_t j = 0; j < h; ++j) g[j] = gelu_scalar(a[j]);

        std::vector<double> logits(V);
        for (std::size_t vtok = 0; vtok < V; ++vtok) logits[vtok] = bo[vtok];
        for (std::size_t j = 0; j < h; ++j) {
            const double gj = g[j];
            if (gj == 0.0) continue;
            const double* wrow = &Wo.values()[j * V];
            for (std::size_t vtok = 0; vtok < V; ++vtok) logits[vtok] += gj * wrow[vtok];
        }
        const auto probs = softmax_row(logits);
        double* p = cache.probs.row(n);
        for (std::size_t vtok = 0; vtok < V; ++vtok) p[vtok] = probs[vtok];
    }
    cache.valid = true;
    return ProbMatrix(cache.probs);
}

ParamStore lm_backward(const TinyLM& model, const LmCache& cache, const Mat& upstream) {
    if (!cache.valid) throw UsageError("lm_backward: missing forward cache");
    const auto& cfg = model.config();
    const std::size_t N = cache.probs.rows;
    const std::size_t c = cfg.context;
    const std::size_t d = cfg.embed_dim;
    const std::size_t h = cfg.hidden_dim;
    const std::size_t V = cfg.vocab;
    if (upstream.rows != N || upstream.cols != V) {
        throw DimensionError("lm_backward: upstream shape mismatch");
    }

    ParamStore grads = ParamStore::zeros_like(model.params());
    auto& dE = grads.at("lm.embed");
    auto& dWh = grads.at("lm.hidden_w");
    auto& dbh = grads.at("lm.hidden_b");
    auto& dWo = grads.at("lm.out_w");
    auto& dbo = grads.at("lm.out_b");
    const auto& Wh = model.hidden_w();
    const auto& Wo = model.out_w();

    std::vector<double> dlogits(V), dg(h), da(h), dx(c * d);
    for (std::size_t n = 0; n < N; ++n) {
        const double* p = cache.probs.row(n);
        const double* up = upstream.row(n);
        // Softmax backward: dz_j = p_j * (up_j - <up, p>).
        double dot = 0.0;
        for (std::size_t vtok = 0; vtok < V; ++vtok) dot += up[vtok] * p[vtok];
        for (std::size_t vtok = 0; vtok < V; ++vtok) dlogits[vtok] = p[vtok] * (up[vtok] - dot);

        const double* g = cache.hidden.row(n);
        for (std::size_t vtok = 0; vtok < V; ++vtok) dbo[vtok] += dlogits[vtok];
        for (std::size_t j = 0; j < h; ++j) {
            const double* wrow = &Wo.values()[j * V];
            double acc = 0.0;
            for (std::size_t vtok = 0; vtok < V; ++vtok) {
                dWo.values()[j * V + vtok] += g[j] * dlogits[vtok];
                acc += wrow[vtok] * dlogits[vtok];
            }
            dg[j] = acc;
        }

        const double* a = cache.pre.row(n);
        for (std::size_t j = 0; j < h; ++j) da[j] = dg[j] * gelu_derivative(a[j]);
        for (std::size_t j = 0; j < h; ++j) dbh[j] += da[j];

        const double* x = cache.x.row(n);
        for (std::size_t i = 0; i < c * d; ++i) {
            const double* wrow = &Wh.values()[i * h];
            double acc = 0.0;
            for (std::size_t j = 0; j < h; ++j) {
                dWh.values()[i * h + j] += x[i] * da[j];
                acc += wrow[j] * da[j];
            }
            dx[i] = acc;
        }
        for (std::size_t k = 0; k < c; ++k) {
            const std::uint32_t id = cache.context_ids[n * c + k];
            for (std::size_t j = 0; j < d; ++j) dE.at(id, j) += dx[k * d + j];
        }
    }
    return grads;
}

}  // namespace adafuse
