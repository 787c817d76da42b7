#include "adafuse/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace adafuse {

namespace {

struct TomlValue {
    enum class Kind { string, integer, floating, boolean } kind;
    std::string s;
    long long i = 0;
    double d = 0.0;
    bool b = false;
};

std::string trim(const std::string& s) {
    std::size_t a = 0;
    std::size_t b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

// Flat TOML subset: [sections], key = value with string/integer/float/bool
// values, '#' comments. Arrays and nested tables are not part of the schema.
std::map<std::string, TomlValue> parse_toml(const std::string& text) {
    std::map<std::string, TomlValue> out;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        // Strip comments outside of quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line = line.substr(0, i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
            }
            section = trim(line.substr(1, line.size() - 2));
            if (section.empty()) {
                throw ConfigError("config line " + std::to_string(lineno) + ": empty section");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string raw = trim(line.substr(eq + 1));
        if (key.empty() || raw.empty()) {
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        }
        const std::string full = section.empty() ? key : section + "." + key;
        if (out.count(full)) throw ConfigError("config: duplicate key '" + full + "'");

        TomlValue value{};
        if (raw.front() == '"') {
            if (raw.size() < 2 || raw.back() != '"') {
                throw ConfigError("config line " + std::to_string(lineno) + ": unterminated string");
            }
            value.kind = TomlValue::Kind::string;
            value.s = raw.substr(1, raw.size() - 2);
        } else if (raw == "true" || raw == "false") {
            value.kind = TomlValue::Kind::boolean;
            value.b = raw == "true";
        } else if (raw.find_first_of(".eE") != std::string::npos &&
                   raw.find("0x") == std::string::npos) {
            value.kind = TomlValue::Kind::floating;
            char* end = nullptr;
            value.d = std::strtod(raw.c_str(), &end);
            if (end == nullptr || *end != '\0') {
                throw ConfigError("config line " + std::to_string(lineno) + ": bad number '" +
                                  raw + "'");
            }
        } else {
            value.kind = TomlValue::Kind::integer;
            const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), value.i);
            if (res.ec != std::errc{} || res.ptr != raw.data() + raw.size()) {
                throw ConfigError("config line " + std::to_string(lineno) + ": bad integer '" +
                                  raw + "'");
            }
        }
        out.emplace(full, std::move(value));
    }
    return out;
}

class Schema {
public:
    explicit Schema(std::map<std::string, TomlValue> values) : values_(std::move(values)) {}

    template <typename T>
    void read(const std::string& key, T& into) {
        auto it = values_.find(key);
        if (it == values_.end()) return;
        seen_.push_back(key);
        assign(key, it->second, into);
    }

    void finish() const {
        for (const auto& [key, _] : values_) {
            if (std::find(seen_.begin(), seen_.end(), key) == seen_.end()) {
                throw ConfigError("config: unknown key '" + key + "'");
            }
        }
    }

private:
    static void assign(const std::string& key, const TomlValue& v, double& into) {
        if (v.kind == TomlValue::Kind::floating) into = v.d;
        else if (v.kind == TomlValue::Kind::integer) into = static_cast<double>(v.i);
        else throw ConfigError("config: key '" + key + "' must be a number");
    }
    static void assign(const std::string& key, const TomlValue& v, std::size_t& into) {
        if (v.kind != TomlValue::Kind::integer || v.i < 0) {
            throw ConfigError("config: key '" + key + "' must be a nonnegative integer");
        }
        into = static_cast<std::size_t>(v.i);
    }
    static void assign(const std::string& key, const TomlValue& v, int& into) {
        if (v.kind != TomlValue::Kind::integer) {
            throw ConfigError("config: key '" + key + "' must be an integer");
        }
        into = static_cast<int>(v.i);
    }
    static void assign(const std::string& key, const TomlValue& v, bool& into) {
        if (v.kind != TomlValue::Kind::boolean) {
            throw ConfigError("config: key '" + key + "' must be true or false");
        }
        into = v.b;
    }
    static void assign(const std::string& key, const TomlValue& v, std::string& into) {
        if (v.kind != TomlValue::Kind::string) {
            throw ConfigError("config: key '" + key + "' must be a quoted string");
        }
        into = v.s;
    }

    std::map<std::string, TomlValue> values_;
    std::vector<std::string> seen_;
};

SelectionMetric metric_from_string(const std::string& name) {
    if (name == "softmax") return SelectionMetric::softmax;
    if (name == "gumbel") return SelectionMetric::gumbel;
    if (name == "noisy") return SelectionMetric::noisy;
    throw ConfigError("config: unknown selection metric '" + name + "'");
}

CountMode count_mode_from_string(const std::string& name) {
    if (name == "adaptive") return CountMode::adaptive;
    if (name == "top2") return CountMode::top2;
    if (name == "all") return CountMode::all;
    throw ConfigError("config: unknown count mode '" + name + "'");
}

Pooling pooling_from_string(const std::string& name) {
    if (name == "logits") return Pooling::mean_logits;
    if (name == "probs") return Pooling::mean_probs;
    throw ConfigError("config: unknown pooling '" + name + "'");
}

ObjectiveMode objective_mode_from_string(const std::string& name) {
    if (name == "adaptive") return ObjectiveMode::adaptive;
    if (name == "fuse_all_baseline") return ObjectiveMode::fuse_all_baseline;
    throw ConfigError("config: unknown objective mode '" + name + "'");
}

}  // namespace

std::string to_string(SelectionMetric metric) {
    switch (metric) {
        case SelectionMetric::softmax: return "softmax";
        case SelectionMetric::gumbel: return "gumbel";
        case SelectionMetric::noisy: return "noisy";
    }
    return "unknown";
}

std::string to_string(CountMode mode) {
    switch (mode) {
        case CountMode::adaptive: return "adaptive";
        case CountMode::top2: return "top2";
        case CountMode::all: return "all";
    }
    return "unknown";
}

std::string to_string(Pooling pooling) {
    return pooling == Pooling::mean_logits ? "logits" : "probs";
}

std::string to_string(ObjectiveMode mode) {
    return mode == ObjectiveMode::adaptive ? "adaptive" : "fuse_all_baseline";
}

RunConfig RunConfig::from_toml_string(const std::string& text) {
    Schema schema(parse_toml(text));
    RunConfig cfg;

    schema.read("seed", cfg.seed);
    schema.read("out_dir", cfg.out_dir);
    schema.read("manifest", cfg.manifest);

    schema.read("train.max_lr", cfg.train.max_lr);
    schema.read("train.warmup_ratio", cfg.train.warmup_ratio);
    schema.read("train.steps", cfg.train.steps);
    schema.read("train.batch_size", cfg.train.batch_size);
    schema.read("train.checkpoint_interval", cfg.train.checkpoint_interval);
    schema.read("train.context", cfg.train.model.context);
    schema.read("train.embed_dim", cfg.train.model.embed_dim);
    schema.read("train.hidden_dim", cfg.train.model.hidden_dim);

    schema.read("selection.threshold", cfg.selection.threshold);
    std::string metric = to_string(cfg.selection.metric);
    schema.read("selection.metric", metric);
    cfg.selection.metric = metric_from_string(metric);
    schema.read("selection.gumbel_temperature", cfg.selection.gumbel_temperature);
    schema.read("selection.noise_scale", cfg.selection.noise_scale);
    std::string count_mode = to_string(cfg.selection.count_mode);
    schema.read("selection.count_mode", count_mode);
    cfg.selection.count_mode = count_mode_from_string(count_mode);
    std::string pooling = to_string(cfg.selection.pooling);
    schema.read("selection.pooling", pooling);
    cfg.selection.pooling = pooling_from_string(pooling);
    schema.read("selection.layers", cfg.selection.layers);
    schema.read("selection.renorm_eps", cfg.selection.renorm_eps);

    std::string mode = to_string(cfg.objective.mode);
    schema.read("objective.mode", mode);
    cfg.objective.mode = objective_mode_from_string(mode);
    schema.read("objective.lambda_fuse", cfg.objective.lambda_fuse);
    schema.read("objective.lambda_feed", cfg.objective.lambda_feed);
    schema.read("objective.baseline_lambda", cfg.objective.baseline_lambda);
    schema.read("objective.eps_feed", cfg.objective.eps_feed);
    schema.read("objective.feed_selected_only", cfg.objective.feed_selected_only);

    std::string fusion = to_string(cfg.fusion);
    schema.read("fusion.method", fusion);
    cfg.fusion = fusion_method_from_string(fusion);
    schema.read("fusion.dump_fused", cfg.dump_fused);

    schema.read("benchmark.domains", cfg.benchmark.num_domains);
    schema.read("benchmark.vocab", cfg.benchmark.vocab);
    schema.read("benchmark.sources", cfg.benchmark.num_sources);
    schema.read("benchmark.seq_len", cfg.benchmark.seq_len);
    schema.read("benchmark.train_seqs_per_domain", cfg.benchmark.train_seqs_per_domain);
    schema.read("benchmark.eval_seqs_per_domain", cfg.benchmark.eval_seqs_per_domain);
    schema.read("benchmark.alpha", cfg.benchmark.alpha);
    schema.read("benchmark.min_tv_distance", cfg.benchmark.min_tv_distance);
    schema.read("benchmark.planted_source", cfg.benchmark.planted_source);
    schema.read("benchmark.planted_domains", cfg.benchmark.planted_domains);
    schema.read("benchmark.planted_quality", cfg.benchmark.planted_quality);

    schema.finish();
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_toml_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return from_toml_string(buffer.str());
}

void RunConfig::validate() const {
    if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
    train.validate();
    selection.validate();
    objective.validate();
    benchmark.validate();
}

std::string RunConfig::canonical_echo() const {
    std::ostringstream out;
    out.precision(17);
    out << "seed = " << seed << '\n';
    out << "out_dir = \"" << out_dir << "\"\n";
    out << "manifest = \"" << manifest << "\"\n";
    out << "\n[train]\n";
    out << "max_lr = " << train.max_lr << '\n';
    out << "warmup_ratio = " << train.warmup_ratio << '\n';
    out << "steps = " << train.steps << '\n';
    out << "batch_size = " << train.batch_size << '\n';
    out << "checkpoint_interval = " << train.checkpoint_interval << '\n';
    out << "context = " << train.model.context << '\n';
    out << "embed_dim = " << train.model.embed_dim << '\n';
    out << "hidden_dim = " << train.model.hidden_dim << '\n';
    out << "\n[selection]\n";
    out << "threshold = " << selection.threshold << '\n';
    out << "metric = \"" << to_string(selection.metric) << "\"\n";
    out << "gumbel_temperature = " << selection.gumbel_temperature << '\n';
    out << "noise_scale = " << selection.noise_scale << '\n';
    out << "count_mode = \"" << to_string(selection.count_mode) << "\"\n";
    out << "pooling = \"" << to_string(selection.pooling) << "\"\n";
    out << "layers = " << selection.layers << '\n';
    out << "renorm_eps = " << selection.renorm_eps << '\n';
    out << "\n[objective]\n";
    out << "mode = \"" << to_string(objective.mode) << "\"\n";
    out << "lambda_fuse = " << objective.lambda_fuse << '\n';
    out << "lambda_feed = " << objective.lambda_feed << '\n';
    out << "baseline_lambda = " << objective.baseline_lambda << '\n';
    out << "eps_feed = " << objective.eps_feed << '\n';
    out << "feed_selected_only = " << (objective.feed_selected_only ? "true" : "false") << '\n';
    out << "\n[fusion]\n";
    out << "method = \"" << to_string(fusion) << "\"\n";
    out << "dump_fused = " << (dump_fused ? "true" : "false") << '\n';
    out << "\n[benchmark]\n";
    out << "domains = " << benchmark.num_domains << '\n';
    out << "vocab = " << benchmark.vocab << '\n';
    out << "sources = " << benchmark.num_sources << '\n';
    out << "seq_len = " << benchmark.seq_len << '\n';
    out << "train_seqs_per_domain = " << benchmark.train_seqs_per_domain << '\n';
    out << "eval_seqs_per_domain = " << benchmark.eval_seqs_per_domain << '\n';
    out << "alpha = " << benchmark.alpha << '\n';
    out << "min_tv_distance = " << benchmark.min_tv_distance << '\n';
    out << "planted_source = " << benchmark.planted_source << '\n';
    out << "planted_domains = " << benchmark.planted_domains << '\n';
    out << "planted_quality = " << benchmark.planted_quality << '\n';
    return out.str();
}

std::uint64_t RunConfig::hash() const {
    return fnv1a64(canonical_echo());
}

TrainSetup RunConfig::to_setup() const {
    TrainSetup setup;
    setup.train = train;
    setup.train.seed = seed;
    setup.selection = selection;
    setup.objective = objective;
    setup.fusion = fusion;
    setup.dump_fused = dump_fused;
    setup.config_hash = hash();
    return setup;
}

std::filesystem::path RunConfig::manifest_path() const {
    if (!manifest.empty()) return manifest;
    return std::filesystem::path(out_dir) / "manifest.json";
}

}  // namespace adafuse
