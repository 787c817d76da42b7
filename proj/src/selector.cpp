#include "adafuse/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace adafuse {

namespace {

void xavier_fill(ParamTensor& t, RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(t.rows() + t.cols()));
    for (double& x : t.values()) x = rng.uniform(-bound, bound);
}

std::vector<std::size_t> layer_widths(std::size_t feature_dim, std::size_t num_sources,
                                      int layers) {
    if (layers == 3) return {2 * feature_dim, feature_dim, num_sources};
    return {num_sources};
}

}  // namespace

void SelectionConfig::validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("selection: threshold must be in (0,1)");
    }
    if (!(gumbel_temperature > 0.0)) {
        throw ConfigError("selection: gumbel_temperature must be > 0");
    }
    if (noise_scale < 0.0) throw ConfigError("selection: noise_scale must be >= 0");
    if (layers != 1 && layers != 3) throw ConfigError("selection: layers must be 1 or 3");
    if (!(renorm_eps > 0.0)) throw ConfigError("selection: renorm_eps must be > 0");
    if (pooling == Pooling::mean_probs && metric != SelectionMetric::softmax) {
        throw ConfigError("selection: probability pooling supports only the softmax metric");
    }
}

AsnParams::AsnParams(std::size_t num_sources, std::size_t vocab, int layers)
    : num_sources_(num_sources), vocab_(vocab), layers_(layers) {
    if (num_sources_ < 2 || vocab_ < 2) throw ConfigError("AsnParams: need M >= 2 and V >= 2");
    if (layers_ != 1 && layers_ != 3) throw ConfigError("AsnParams: layers must be 1 or 3");
    std::size_t fan_in = feature_dim();
    int idx = 1;
    for (std::size_t width : layer_widths(feature_dim(), num_sources_, layers_)) {
        params_.add(ParamTensor("asn.w" + std::to_string(idx), fan_in, width));
        params_.add(ParamTensor("asn.b" + std::to_string(idx), width));
        fan_in = width;
        ++idx;
    }
}

AsnParams AsnParams::xavier_init(std::size_t num_sources, std::size_t vocab,
                                 std::uint64_t seed, int layers) {
    AsnParams p(num_sources, vocab, layers);
    RngStream rng(seed, "asn_init");
    for (int l = 1; l <= layers; ++l) {
        xavier_fill(p.params_.at("asn.w" + std::to_string(l)), rng);
    }
    return p;
}

AsnParams AsnParams::zeros(std::size_t num_sources, std::size_t vocab, int layers) {
    return AsnParams(num_sources, vocab, layers);
}

const ParamTensor& AsnParams::weight(int layer) const {
    return params_.at("asn.w" + std::to_string(layer));
}

const ParamTensor& AsnParams::bias(int layer) const {
    return params_.at("asn.b" + std::to_string(layer));
}

void asn_forward(const AsnParams& params, const std::vector<ProbMatrix>& sources,
                 AsnCache& cache) {
    const std::size_t M = params.num_sources();
    const std::size_t V = params.vocab();
    if (sources.size() != M) {
        throw DimensionError("asn_forward: expected " + std::to_string(M) + " sources");
    }
    const std::size_t N = sources[0].rows();
    for (const auto& s : sources) {
        if (s.rows() != N || s.cols() != V) {
            throw DimensionError("asn_forward: source shape mismatch");
        }
    }

    const std::size_t F = params.feature_dim();
    const int L = params.layers();
    const auto widths = layer_widths(F, M, L);

    cache = AsnCache{};
    cache.positions = N;
    cache.normalized = Mat(N, F);
    cache.pre.clear();
    cache.act.clear();
    for (int l = 0; l < L; ++l) cache.pre.emplace_back(N, widths[l]);
    for (int l = 0; l + 1 < L; ++l) cache.act.emplace_back(N, widths[l]);
    cache.position_logits = Mat(N, M);

    std::vector<double> concat(F);
    for (std::size_t n = 0; n < N; ++n) {
        for (std::size_t i = 0; i < M; ++i) {
            const double* row = sources[i].row(n);
            std::copy(row, row + V, concat.begin() + i * V);
        }
        const auto v = layer_norm_vec(concat);
        std::copy(v.begin(), v.end(), cache.normalized.row(n));

        const double* in = cache.normalized.row(n);
        std::size_t in_dim = F;
        for (int l = 0; l < L; ++l) {
            const auto& W = params.weight(l + 1);
            const auto& b = params.bias(l + 1);
            const std::size_t out_dim = widths[l];
            double* pre = cache.pre[l].row(n);
            for (std::size_t j = 0; j < out_dim; ++j) pre[j] = b[j];
            for (std::size_t i = 0; i < in_dim; ++i) {
                const double xi = in[i];
                if (xi == 0.0) continue;
                const double* wrow = &W.values()[i * out_dim];
                for (std::size_t j = 0; j < out_dim; ++j) pre[j] += xi * wrow[j];
            }
            if (l + 1 < L) {
                double* act = cache.act[l].row(n);
                for (std::size_t j = 0; j < out_dim; ++j) act[j] = gelu_scalar(pre[j]);
                in = act;
            }
            in_dim = out_dim;
        }
        const double* logits = cache.pre[L - 1].row(n);
        std::copy(logits, logits + M, cache.position_logits.row(n));
    }

    cache.pooled_logits.assign(M, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const double* row = cache.position_logits.row(n);
        for (std::size_t i = 0; i < M; ++i) cache.pooled_logits[i] += row[i];
    }
    for (double& z : cache.pooled_logits) z /= static_cast<double>(N);
    cache.valid = true;
}

std::vector<double> probs_from_logits(const std::vector<double>& z,
                                      const SelectionConfig& config, RngStream& rng) {
    std::vector<double> shifted(z);
    switch (config.metric) {
        case SelectionMetric::softmax:
            break;
        case SelectionMetric::gumbel:
            for (double& x : shifted) x = (x + rng.gumbel()) / config.gumbel_temperature;
            break;
        case SelectionMetric::noisy:
            for (double& x : shifted) x += config.noise_scale * rng.normal();
            break;
    }
    return softmax_row(shifted);
}

std::pair<std::vector<std::size_t>, std::vector<std::uint8_t>> select_candidates(
    const std::vector<double>& p, double tau) {
    if (p.empty()) throw DimensionError("select_candidates: empty probabilities");
    std::vector<std::size_t> selected;
    std::vector<std::uint8_t> mask(p.size(), 0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (!std::isfinite(p[i]) || p[i] < 0.0) {
            throw NumericError("select_candidates: invalid probability");
        }
        if (p[i] > tau) {
            selected.push_back(i);
            mask[i] = 1;
        }
    }
    if (selected.empty()) {
        // Fallback: the single highest-probability candidate, lowest index on ties.
        std::size_t best = 0;
        for (std::size_t i = 1; i < p.size(); ++i) {
            if (p[i] > p[best]) best = i;
        }
        selected.push_back(best);
        mask[best] = 1;
    }
    return {std::move(selected), std::move(mask)};
}

std::pair<std::vector<std::size_t>, std::vector<std::uint8_t>> select_top_k(
    const std::vector<double>& p, std::size_t k) {
    if (p.empty()) throw DimensionError("select_top_k: empty probabilities");
    k = std::min(k, p.size());
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    std::vector<std::size_t> selected(order.begin(), order.begin() + k);
    std::sort(selected.begin(), selected.end());
    std::vector<std::uint8_t> mask(p.size(), 0);
    for (std::size_t i : selected) mask[i] = 1;
    return {std::move(selected), std::move(mask)};
}

std::vector<double> renorm_weights(const std::vector<double>& p,
                                   const std::vector<std::uint8_t>& mask, double eps) {
    if (p.size() != mask.size()) throw DimensionError("renorm_weights: size mismatch");
    if (!(eps > 0.0)) throw UsageError("renorm_weights: eps must be > 0");
    double sum = 0.0;
    bool any = false;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (mask[i]) {
            sum += p[i];
            any = true;
        }
    }
    if (!any) throw UsageError("renorm_weights: all-zero mask violates the selection contract");
    std::vector<double> weights;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (mask[i]) weights.push_back(p[i] / (sum + eps));
    }
    return weights;
}

SelectionResult run_selection(const AsnParams& params, const std::vector<ProbMatrix>& sources,
                              const SelectionConfig& config, RngStream& rng, AsnCache& cache) {
    config.validate();
    asn_forward(params, sources, cache);
    cache.pooling = config.pooling;

    const std::size_t M = params.num_sources();
    std::vector<double> p;
    if (config.pooling == Pooling::mean_probs) {
        cache.position_probs = Mat(cache.positions, M);
        p.assign(M, 0.0);
        for (std::size_t n = 0; n < cache.positions; ++n) {
            const double* row = cache.position_logits.row(n);
            const auto probs = softmax_row(std::span<const double>(row, M));
            std::copy(probs.begin(), probs.end(), cache.position_probs.row(n));
            for (std::size_t i = 0; i < M; ++i) p[i] += probs[i];
        }
        for (double& x : p) x /= static_cast<double>(cache.positions);
        cache.logit_scale = 1.0;
    } else {
        p = probs_from_logits(cache.pooled_logits, config, rng);
        cache.logit_scale =
            config.metric == SelectionMetric::gumbel ? 1.0 / config.gumbel_temperature : 1.0;
    }

    std::pair<std::vector<std::size_t>, std::vector<std::uint8_t>> sel;
    switch (config.count_mode) {
        case CountMode::adaptive:
            sel = select_candidates(p, config.threshold);
            break;
        case CountMode::top2:
            sel = select_top_k(p, 2);
            break;
        case CountMode::all:
            sel.first.resize(M);
            std::iota(sel.first.begin(), sel.first.end(), 0);
            sel.second.assign(M, 1);
            break;
    }

    SelectionResult result;
    result.logits = cache.pooled_logits;
    result.probs = p;
    result.mask = sel.second;
    result.selected = sel.first;
    result.weights = renorm_weights(p, sel.second, config.renorm_eps);

    double mass = 0.0;
    for (std::size_t i : result.selected) mass += p[i];
    cache.mass_sum = mass + config.renorm_eps;
    cache.selection = result;
    return result;
}

ParamStore asn_backward(const AsnParams& params, const AsnCache& cache,
                        const std::vector<double>& d_weights,
                        const std::vector<double>& d_logits) {
    if (!cache.valid) throw UsageError("asn_backward: missing forward cache");
    const std::size_t M = params.num_sources();
    const std::size_t N = cache.positions;
    const auto& sel = cache.selection;
    if (!d_weights.empty() && d_weights.size() != sel.selected.size()) {
        throw DimensionError("asn_backward: d_weights size mismatch");
    }
    if (!d_logits.empty() && d_logits.size() != M) {
        throw DimensionError("asn_backward: d_logits size mismatch");
    }

    // Renormalization backward, mask held constant:
    // d/dp_k [p_k / S] picks up the shared -sum_i d_w_i * w_i term through S.
    std::vector<double> dp(M, 0.0);
    if (!d_weights.empty()) {
        double coupled = 0.0;
        for (std::size_t j = 0; j < sel.selected.size(); ++j) {
            coupled += d_weights[j] * sel.weights[j];
        }
        for (std::size_t j = 0; j < sel.selected.size(); ++j) {
            dp[sel.selected[j]] = (d_weights[j] - coupled) / cache.mass_sum;
        }
    }

    std::vector<double> dz(M, 0.0);
    if (cache.pooling == Pooling::mean_logits) {
        double dot = 0.0;
        for (std::size_t i = 0; i < M; ++i) dot += dp[i] * sel.probs[i];
        for (std::size_t i = 0; i < M; ++i) {
            dz[i] = cache.logit_scale * sel.probs[i] * (dp[i] - dot);
        }
    }
    if (!d_logits.empty()) {
        for (std::size_t i = 0; i < M; ++i) dz[i] += d_logits[i];
    }

    const int L = params.layers();
    ParamStore grads = ParamStore::zeros_like(params.params());
    const double inv_n = 1.0 / static_cast<double>(N);

    std::vector<double> delta, next;
    for (std::size_t n = 0; n < N; ++n) {
        delta.assign(M, 0.0);
        for (std::size_t i = 0; i < M; ++i) delta[i] = dz[i] * inv_n;
        if (cache.pooling == Pooling::mean_probs) {
            // Mean of per-position softmax probabilities: route dp through
            // each position's softmax Jacobian.
            const double* probs = cache.position_probs.row(n);
            double dot = 0.0;
            for (std::size_t i = 0; i < M; ++i) dot += dp[i] * probs[i];
            for (std::size_t i = 0; i < M; ++i) {
                delta[i] += inv_n * probs[i] * (dp[i] - dot);
            }
        }

        for (int l = L - 1; l >= 0; --l) {
            const auto& W = params.weight(l + 1);
            auto& dW = grads.at("asn.w" + std::to_string(l + 1));
            auto& db = grads.at("asn.b" + std::to_string(l + 1));
            const std::size_t out_dim = W.cols();
            const std::size_t in_dim = W.rows();
            const double* in =
                (l == 0) ? cache.normalized.row(n) : cache.act[l - 1].row(n);

            for (std::size_t j = 0; j < out_dim; ++j) db[j] += delta[j];
            next.assign(in_dim, 0.0);
            for (std::size_t i = 0; i < in_dim; ++i) {
                const double* wrow = &W.values()[i * out_dim];
                double* dwrow = &dW.values()[i * out_dim];
                double acc = 0.0;
                const double xi = in[i];
                for (std::size_t j = 0; j < out_dim; ++j) {
                    dwrow[j] += xi * delta[j];
                    acc += wrow[j] * delta[j];
                }
                next[i] = acc;
            }
            if (l > 0) {
                const double* pre = cache.pre[l - 1].row(n);
                for (std::size_t i = 0; i < in_dim; ++i) {
                    next[i] *= gelu_derivative(pre[i]);
                }
                delta = next;
            }
        }
    }
    return grads;
}

}  // namespace adafuse
