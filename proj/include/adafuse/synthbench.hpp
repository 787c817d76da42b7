#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "adafuse/dataset.hpp"
#include "adafuse/prob.hpp"
#include "adafuse/tiny_lm.hpp"

namespace adafuse {

// A planted domain: a sparse Markov chain over the content vocabulary.
// Row r of the transition matrix is the next-token distribution after token
// r; row kPadId doubles as the start distribution. The pad column is always
// zero, so generated corpora never emit the pad id as content.
struct DomainSpec {
    std::uint32_t id = 0;
    Mat transition;  // V x V, row-stochastic
    std::size_t seq_len = 24;
    std::size_t train_seqs = 16;
    std::size_t eval_seqs = 8;
};

// A synthetic source model: per-domain quality q in [0,1] (1 = emits the
// true chain rows, 0 = uninformative noise) and the smoothing weight of a
// fixed seeded perturbation mixed into the noise floor.
struct SourceModelSpec {
    std::uint32_t id = 0;
    std::vector<double> quality;
    double alpha = 0.05;
    std::uint64_t noise_seed = 0;
};

struct BenchmarkConfig {
    std::size_t num_domains = 12;
    std::size_t vocab = 32;
    std::size_t num_sources = 4;
    std::size_t seq_len = 24;
    std::size_t train_seqs_per_domain = 16;
    std::size_t eval_seqs_per_domain = 8;
    double alpha = 0.05;
    double min_tv_distance = 0.2;
    std::size_t planted_source = 3;
    std::size_t planted_domains = 6;  // the planted expert covers domains [0, planted_domains)
    double planted_quality = 0.9;

    void validate() const;
};

double tv_distance(const std::vector<double>& a, const std::vector<double>& b);

// Long-run next-token distribution of a chain via power iteration from the
// start row.
std::vector<double> stationary_next_token(const Mat& transition);

// D seeded sparse chains, regenerated (up to 100 attempts) until every pair
// of stationary next-token distributions is at least min_tv_distance apart.
std::vector<DomainSpec> gen_domains(const BenchmarkConfig& cfg, std::uint64_t seed);

struct CorpusEntry {
    std::uint32_t domain = 0;
    std::uint32_t index = 0;
    TokenSeq seq;
};

std::vector<CorpusEntry> gen_corpus(const std::vector<DomainSpec>& domains, std::uint64_t seed,
                                    bool eval_split);

// Source distribution matrix for one sequence: row n mixes the true
// transition row for the preceding token (weight q) with the noise floor
// (weight 1-q), where the floor is (1-alpha) * uniform-over-content plus
// alpha * a fixed seeded perturbation per (source, domain).
ProbMatrix gen_source_matrix(const SourceModelSpec& spec, const TokenSeq& seq,
                             const DomainSpec& domain);

// The default planted-expert layout: source `planted_source` has quality
// planted_quality on the first planted_domains domains and 0.2 elsewhere;
// every other source alternates 0.5/0.2 by (source + domain) parity.
std::vector<SourceModelSpec> default_source_specs(const BenchmarkConfig& cfg, std::uint64_t seed);

// Generates domains, corpora, and all per-sample source matrices under
// out_dir and writes the manifest JSON tying them together. Returns the
// manifest path.
std::filesystem::path generate_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed,
                                         const std::filesystem::path& out_dir);

// Selection-trace records parsed back from the JSONL export.
struct TraceSample {
    std::uint32_t domain = 0;
    std::vector<double> probs;
    std::vector<std::size_t> selected;
    std::vector<double> weights;
};

struct TraceStep {
    std::uint64_t step = 0;
    std::vector<TraceSample> samples;
};

std::vector<TraceStep> load_selection_trace(const std::filesystem::path& path);

// Normalized per-source selection counts over the given traces, optionally
// restricted to a step range [from, to) and/or a domain subset.
std::vector<double> selection_frequency(const std::vector<TraceStep>& traces,
                                        std::size_t num_sources,
                                        std::optional<std::uint64_t> step_from = {},
                                        std::optional<std::uint64_t> step_to = {},
                                        const std::vector<std::uint32_t>* domains = nullptr);

struct EvalReport {
    std::vector<double> fused_ppl;     // per domain
    std::vector<double> baseline_ppl;  // per domain
    double fused_overall_ppl = 0.0;
    double baseline_overall_ppl = 0.0;
    double degradation_rate = 0.0;  // fraction of domains where fused PPL > baseline PPL
    bool histogram_present = false;
    std::vector<double> selection_histogram;
    std::vector<double> cv2_trace;  // per-step CV^2 of trace importance
};

// Held-out comparison of two trained targets plus the selection statistics.
// Passing no traces yields a partial report with the histogram omitted.
EvalReport eval_report(const TinyLM& fused_model, const TinyLM& baseline_model,
                       const Dataset& data, const std::vector<TraceStep>* traces);

void write_eval_report_json(const std::filesystem::path& path, const EvalReport& report);
void write_eval_report_csv(const std::filesystem::path& path, const EvalReport& report);

}  // namespace adafuse
