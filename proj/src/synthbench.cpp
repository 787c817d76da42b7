#include "adafuse/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

#include "adafuse/objective.hpp"
#include "adafuse/rng.hpp"

namespace adafuse {

using nlohmann::json;

void BenchmarkConfig::validate() const {
    if (num_domains < 2) throw ConfigError("benchmark: need at least 2 domains");
    if (vocab < 4) throw ConfigError("benchmark: need vocab >= 4");
    if (num_sources < 2) throw ConfigError("benchmark: need at least 2 sources");
    if (seq_len < 2) throw ConfigError("benchmark: need seq_len >= 2");
    if (train_seqs_per_domain == 0 || eval_seqs_per_domain == 0) {
        throw ConfigError("benchmark: per-domain sequence counts must be >= 1");
    }
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("benchmark: alpha must be in [0,1]");
    if (min_tv_distance < 0.0 || min_tv_distance >= 1.0) {
        throw ConfigError("benchmark: min_tv_distance must be in [0,1)");
    }
    if (planted_source >= num_sources) {
        throw ConfigError("benchmark: planted_source out of range");
    }
    if (planted_domains > num_domains) {
        throw ConfigError("benchmark: planted_domains out of range");
    }
    if (planted_quality < 0.0 || planted_quality > 1.0) {
        throw ConfigError("benchmark: planted_quality must be in [0,1]");
    }
}

double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionError("tv_distance: size mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
    return 0.5 * sum;
}

std::vector<double> stationary_next_token(const Mat& transition) {
    const std::size_t V = transition.rows;
    std::vector<double> mu(transition.row(kPadId), transition.row(kPadId) + V);
    std::vector<double> next(V);
    for (int iter = 0; iter < 200; ++iter) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t r = 0; r < V; ++r) {
            const double w = mu[r];
            if (w == 0.0) continue;
            const double* row = transition.row(r);
            for (std::size_t c = 0; c < V; ++c) next[c] += w * row[c];
        }
        double sum = 0.0;
        for (double x : next) sum += x;
        for (double& x : next) x /= sum;
        mu = next;
    }
    return mu;
}

namespace {

// Sparse row: a few successors drawn from the domain's preferred pool with
// moderately uneven weights. The pad column stays zero.
void fill_row(double* row, std::size_t vocab, const std::vector<std::uint32_t>& pool,
              RngStream& rng) {
    const std::size_t fanout = std::min<std::size_t>(4, pool.size());
    std::vector<std::uint32_t> chosen(pool);
    for (std::size_t i = 0; i < fanout; ++i) {
        const std::size_t j = i + rng.uniform_int(chosen.size() - i);
        std::swap(chosen[i], chosen[j]);
    }
    std::fill(row, row + vocab, 0.0);
    double sum = 0.0;
    std::vector<double> w(fanout);
    for (std::size_t i = 0; i < fanout; ++i) {
        w[i] = rng.uniform(0.5, 1.5);
        sum += w[i];
    }
    for (std::size_t i = 0; i < fanout; ++i) row[chosen[i]] = w[i] / sum;
}

Mat gen_chain(std::size_t vocab, RngStream& rng) {
    // Preferred pool of roughly a third of the content tokens; overlap
    // between independently drawn pools is small, which keeps domains apart.
    const std::size_t content = vocab - 1;
    const std::size_t pool_size = std::max<std::size_t>(4, content / 3);
    std::vector<std::uint32_t> tokens(content);
    for (std::size_t i = 0; i < content; ++i) tokens[i] = static_cast<std::uint32_t>(i + 1);
    for (std::size_t i = 0; i < pool_size; ++i) {
        const std::size_t j = i + rng.uniform_int(tokens.size() - i);
        std::swap(tokens[i], tokens[j]);
    }
    std::vector<std::uint32_t> pool(tokens.begin(), tokens.begin() + pool_size);
    std::sort(pool.begin(), pool.end());

    Mat transition(vocab, vocab);
    for (std::size_t r = 0; r < vocab; ++r) {
        fill_row(transition.row(r), vocab, pool, rng);
    }
    return transition;
}

}  // namespace

std::vector<DomainSpec> gen_domains(const BenchmarkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    for (std::uint64_t attempt = 0; attempt < 100; ++attempt) {
        std::vector<DomainSpec> domains;
        std::vector<std::vector<double>> stationary;
        for (std::size_t d = 0; d < cfg.num_domains; ++d) {
            RngStream rng(seed, "domains", attempt, d);
            DomainSpec spec;
            spec.id = static_cast<std::uint32_t>(d);
            spec.transition = gen_chain(cfg.vocab, rng);
            spec.seq_len = cfg.seq_len;
            spec.train_seqs = cfg.train_seqs_per_domain;
            spec.eval_seqs = cfg.eval_seqs_per_domain;
            stationary.push_back(stationary_next_token(spec.transition));
            domains.push_back(std::move(spec));
        }
        bool ok = true;
        for (std::size_t i = 0; i < domains.size() && ok; ++i) {
            for (std::size_t j = i + 1; j < domains.size() && ok; ++j) {
                if (tv_distance(stationary[i], stationary[j]) < cfg.min_tv_distance) ok = false;
            }
        }
        if (ok) return domains;
    }
    throw Error("gen_domains: could not satisfy the pairwise distinguishability constraint");
}

std::vector<CorpusEntry> gen_corpus(const std::vector<DomainSpec>& domains, std::uint64_t seed,
                                    bool eval_split) {
    if (domains.empty()) throw UsageError("gen_corpus: no domains");
    std::vector<CorpusEntry> corpus;
    const char* stream = eval_split ? "corpus_eval" : "corpus_train";
    for (const auto& domain : domains) {
        const std::size_t count = eval_split ? domain.eval_seqs : domain.train_seqs;
        const std::size_t V = domain.transition.rows;
        for (std::size_t k = 0; k < count; ++k) {
            RngStream rng(seed, stream, domain.id, k);
            CorpusEntry entry;
            entry.domain = domain.id;
            entry.index = static_cast<std::uint32_t>(k);
            entry.seq.ids.reserve(domain.seq_len);
            std::uint32_t prev = kPadId;
            std::vector<double> row(V);
            for (std::size_t n = 0; n < domain.seq_len; ++n) {
                const double* src = domain.transition.row(prev);
                std::copy(src, src + V, row.begin());
                const auto tok = static_cast<std::uint32_t>(rng.categorical(row));
                entry.seq.ids.push_back(tok);
                prev = tok;
            }
            corpus.push_back(std::move(entry));
        }
    }
    return corpus;
}

ProbMatrix gen_source_matrix(const SourceModelSpec& spec, const TokenSeq& seq,
                             const DomainSpec& domain) {
    if (domain.id >= spec.quality.size()) {
        throw UsageError("gen_source_matrix: no quality entry for domain");
    }
    const std::size_t V = domain.transition.rows;
    const std::size_t N = seq.length();
    if (N == 0) throw DimensionError("gen_source_matrix: empty sequence");
    const double q = spec.quality[domain.id];
    const double alpha = spec.alpha;

    // Noise floor: near-uniform over content tokens, with a fixed seeded
    // perturbation so low-quality sources are uninformative but distinct.
    std::vector<double> noise(V, 0.0);
    {
        RngStream rng(spec.noise_seed, "perturb", domain.id);
        std::vector<double> perturb(V, 0.0);
        double sum = 0.0;
        for (std::size_t c = 1; c < V; ++c) {
            perturb[c] = rng.uniform_open();
            sum += perturb[c];
        }
        const double uniform = 1.0 / static_cast<double>(V - 1);
        for (std::size_t c = 1; c < V; ++c) {
            noise[c] = (1.0 - alpha) * uniform + alpha * perturb[c] / sum;
        }
    }

    Mat out(N, V);
    for (std::size_t n = 0; n < N; ++n) {
        const std::uint32_t prev = (n == 0) ? kPadId : seq.ids[n - 1];
        if (prev >= V) throw VocabError("gen_source_matrix: token id out of range");
        const double* truth = domain.transition.row(prev);
        double* row = out.row(n);
        for (std::size_t c = 0; c < V; ++c) row[c] = q * truth[c] + (1.0 - q) * noise[c];
    }
    return ProbMatrix(std::move(out));
}

std::vector<SourceModelSpec> default_source_specs(const BenchmarkConfig& cfg,
                                                  std::uint64_t seed) {
    cfg.validate();
    std::vector<SourceModelSpec> specs;
    for (std::size_t s = 0; s < cfg.num_sources; ++s) {
        SourceModelSpec spec;
        spec.id = static_cast<std::uint32_t>(s);
        spec.alpha = cfg.alpha;
        spec.noise_seed = RngStream(seed, "source_noise", s).next_u64();
        spec.quality.resize(cfg.num_domains);
        for (std::size_t d = 0; d < cfg.num_domains; ++d) {
            if (s == cfg.planted_source) {
                spec.quality[d] = d < cfg.planted_domains ? cfg.planted_quality : 0.2;
            } else {
                spec.quality[d] = ((s + d) % 2 == 0) ? 0.5 : 0.2;
            }
        }
        specs.push_back(std::move(spec));
    }
    return specs;
}

std::filesystem::path generate_benchmark(const BenchmarkConfig& cfg, std::uint64_t seed,
                                         const std::filesystem::path& out_dir) {
    cfg.validate();
    std::filesystem::create_directories(out_dir / "matrices");
    const auto domains = gen_domains(cfg, seed);
    const auto sources = default_source_specs(cfg, seed);

    std::vector<std::string> files;
    json manifest;
    manifest["version"] = 1;
    manifest["seed"] = seed;
    manifest["vocab"] = cfg.vocab;
    manifest["num_sources"] = cfg.num_sources;
    manifest["num_domains"] = cfg.num_domains;
    manifest["seq_len"] = cfg.seq_len;
    manifest["alpha"] = cfg.alpha;
    manifest["min_tv_distance"] = cfg.min_tv_distance;
    manifest["planted_source"] = cfg.planted_source;
    manifest["planted_domains"] = cfg.planted_domains;
    manifest["planted_quality"] = cfg.planted_quality;

    json jdomains = json::array();
    for (const auto& d : domains) {
        json jd;
        jd["id"] = d.id;
        jd["seq_len"] = d.seq_len;
        jd["train_seqs"] = d.train_seqs;
        jd["eval_seqs"] = d.eval_seqs;
        jdomains.push_back(jd);
    }
    manifest["domains"] = jdomains;

    json jsources = json::array();
    for (const auto& s : sources) {
        json js;
        js["id"] = s.id;
        js["quality"] = s.quality;
        js["alpha"] = s.alpha;
        js["noise_seed"] = s.noise_seed;
        jsources.push_back(js);
    }
    manifest["sources"] = jsources;

    for (const bool eval_split : {false, true}) {
        const std::string corpus_name = eval_split ? "corpus_eval.jsonl" : "corpus_train.jsonl";
        std::ofstream corpus_out(out_dir / corpus_name);
        if (!corpus_out) throw IoError("generate_benchmark: cannot open " + corpus_name);
        const auto corpus = gen_corpus(domains, seed, eval_split);
        for (const auto& entry : corpus) {
            json line;
            line["domain"] = entry.domain;
            line["index"] = entry.index;
            line["seq"] = entry.seq.ids;
            json paths = json::array();
            for (const auto& spec : sources) {
                char name[64];
                std::snprintf(name, sizeof(name), "matrices/%s_d%02u_k%03u_m%u.pdm",
                              eval_split ? "eval" : "train", entry.domain, entry.index, spec.id);
                const ProbMatrix m = gen_source_matrix(spec, entry.seq, domains[entry.domain]);
                write_pdm(out_dir / name, m);
                paths.push_back(name);
                files.push_back(name);
            }
            line["matrices"] = paths;
            corpus_out << line.dump() << '\n';
        }
        manifest["corpus"][eval_split ? "eval" : "train"] = corpus_name;
        files.push_back(corpus_name);
    }
    manifest["files"] = files;

    const auto manifest_path = out_dir / "manifest.json";
    std::ofstream out(manifest_path);
    if (!out) throw IoError("generate_benchmark: cannot open manifest.json");
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError("generate_benchmark: manifest write failed");
    return manifest_path;
}

std::vector<TraceStep> load_selection_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("load_selection_trace: cannot open " + path.string());
    std::vector<TraceStep> traces;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        TraceStep step;
        step.step = j.at("step").get<std::uint64_t>();
        for (const auto& js : j.at("samples")) {
            TraceSample sample;
            sample.domain = js.at("domain").get<std::uint32_t>();
            sample.probs = js.at("p").get<std::vector<double>>();
            sample.selected = js.at("selected").get<std::vector<std::size_t>>();
            sample.weights = js.at("weights").get<std::vector<double>>();
            step.samples.push_back(std::move(sample));
        }
        traces.push_back(std::move(step));
    }
    return traces;
}

std::vector<double> selection_frequency(const std::vector<TraceStep>& traces,
                                        std::size_t num_sources,
                                        std::optional<std::uint64_t> step_from,
                                        std::optional<std::uint64_t> step_to,
                                        const std::vector<std::uint32_t>* domains) {
    std::vector<double> counts(num_sources, 0.0);
    double total = 0.0;
    for (const auto& step : traces) {
        if (step_from && step.step < *step_from) continue;
        if (step_to && step.step >= *step_to) continue;
        for (const auto& sample : step.samples) {
            if (domains &&
                std::find(domains->begin(), domains->end(), sample.domain) == domains->end()) {
                continue;
            }
            for (std::size_t i : sample.selected) {
                if (i >= num_sources) throw DimensionError("selection_frequency: bad index");
                counts[i] += 1.0;
                total += 1.0;
            }
        }
    }
    if (total > 0.0) {
        for (double& c : counts) c /= total;
    }
    return counts;
}

namespace {

double domain_ppl(const TinyLM& model, const Dataset& data, std::uint32_t domain) {
    double ce_sum = 0.0;
    std::size_t count = 0;
    for (const auto& sample : data.eval) {
        if (sample.domain != domain) continue;
        const ProbMatrix out = lm_forward(model, sample.seq);
        ce_sum += cross_entropy_rows(out, sample.labels);
        ++count;
    }
    if (count == 0) throw UsageError("eval_report: domain has no held-out sequences");
    return std::exp(ce_sum / static_cast<double>(count));
}

double overall_ppl(const TinyLM& model, const Dataset& data) {
    double ce_sum = 0.0;
    for (const auto& sample : data.eval) {
        const ProbMatrix out = lm_forward(model, sample.seq);
        ce_sum += cross_entropy_rows(out, sample.labels);
    }
    return std::exp(ce_sum / static_cast<double>(data.eval.size()));
}

}  // namespace

EvalReport eval_report(const TinyLM& fused_model, const TinyLM& baseline_model,
                       const Dataset& data, const std::vector<TraceStep>* traces) {
    if (data.eval.empty()) throw UsageError("eval_report: empty held-out split");
    EvalReport report;
    std::size_t degraded = 0;
    for (std::size_t d = 0; d < data.num_domains; ++d) {
        const auto domain = static_cast<std::uint32_t>(d);
        report.fused_ppl.push_back(domain_ppl(fused_model, data, domain));
        report.baseline_ppl.push_back(domain_ppl(baseline_model, data, domain));
        if (report.fused_ppl.back() > report.baseline_ppl.back()) ++degraded;
    }
    report.fused_overall_ppl = overall_ppl(fused_model, data);
    report.baseline_overall_ppl = overall_ppl(baseline_model, data);
    report.degradation_rate =
        static_cast<double>(degraded) / static_cast<double>(data.num_domains);

    if (traces && !traces->empty()) {
        report.histogram_present = true;
        report.selection_histogram = selection_frequency(*traces, data.num_sources);
        for (const auto& step : *traces) {
            ImportanceVector importance(data.num_sources, 0.0);
            for (const auto& sample : step.samples) {
                for (std::size_t j = 0; j < sample.selected.size(); ++j) {
                    importance[sample.selected[j]] += sample.weights[j];
                }
            }
            report.cv2_trace.push_back(loss_feed_cv2(importance, 1e-10));
        }
    }
    return report;
}

void write_eval_report_json(const std::filesystem::path& path, const EvalReport& report) {
    json j;
    j["fused_ppl"] = report.fused_ppl;
    j["baseline_ppl"] = report.baseline_ppl;
    j["fused_overall_ppl"] = report.fused_overall_ppl;
    j["baseline_overall_ppl"] = report.baseline_overall_ppl;
    j["degradation_rate"] = report.degradation_rate;
    j["histogram_present"] = report.histogram_present;
    if (report.histogram_present) {
        j["selection_histogram"] = report.selection_histogram;
        j["cv2_trace"] = report.cv2_trace;
    }
    std::ofstream out(path);
    if (!out) throw IoError("write_eval_report_json: cannot open " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write_eval_report_json: write failed");
}

void write_eval_report_csv(const std::filesystem::path& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("write_eval_report_csv: cannot open " + path.string());
    out << "domain,fused_ppl,baseline_ppl,degraded\n";
    for (std::size_t d = 0; d < report.fused_ppl.size(); ++d) {
        out << d << ',' << report.fused_ppl[d] << ',' << report.baseline_ppl[d] << ','
            << (report.fused_ppl[d] > report.baseline_ppl[d] ? 1 : 0) << '\n';
    }
    if (!out) throw IoError("write_eval_report_csv: write failed");
}

}  // namespace adafuse
