#include "adafuse/commands.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "adafuse/gradcheck_suite.hpp"
#include "adafuse/synthbench.hpp"

namespace adafuse {

using nlohmann::json;

namespace {

// Timestamps are confined to the log file so every other artifact of a run
// is byte-reproducible.
void append_log(const std::filesystem::path& out_dir, const std::string& message) {
    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "log.txt", std::ios::app);
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%d %H:%M:%S", std::gmtime(&t));
    log << '[' << stamp << "] " << message << '\n';
}

void write_config_echo(const RunConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "config_echo.toml");
    if (!out) throw IoError("cannot write config echo in " + dir.string());
    out << cfg.canonical_echo();
}

void require_exists(const std::filesystem::path& path, const std::string& what) {
    if (!std::filesystem::exists(path)) {
        throw IoError(what + " not found: " + path.string());
    }
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    if (dynamic_cast<const IoError*>(&e)) return kExitIo;
    return 1;
}

TinyLM model_from_checkpoint(const Checkpoint& ckpt) {
    const auto& embed = ckpt.tensors.at("lm.embed");
    const auto& hidden_w = ckpt.tensors.at("lm.hidden_w");
    TinyLmConfig cfg;
    cfg.vocab = embed.rows();
    cfg.embed_dim = embed.cols();
    cfg.hidden_dim = hidden_w.cols();
    cfg.context = hidden_w.rows() / cfg.embed_dim;
    if (ckpt.tensors.at("lm.out_w").cols() != cfg.vocab) {
        throw IoError("model_from_checkpoint: inconsistent tensor shapes");
    }
    TinyLM model(cfg);
    for (auto& t : model.params()) t.values() = ckpt.tensors.at(t.name()).values();
    return model;
}

void cmd_generate(const RunConfig& cfg) {
    cfg.validate();
    const std::filesystem::path out_dir(cfg.out_dir);
    write_config_echo(cfg, out_dir);
    append_log(out_dir, "generate: start (seed " + std::to_string(cfg.seed) + ")");
    const auto manifest = generate_benchmark(cfg.benchmark, cfg.seed, out_dir);
    append_log(out_dir, "generate: wrote " + manifest.string());
    std::cout << "manifest: " << manifest.string() << '\n';
}

void cmd_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume) {
    cfg.validate();
    const std::filesystem::path out_dir(cfg.out_dir);
    require_exists(cfg.manifest_path(), "benchmark manifest");
    const Dataset data = load_dataset(cfg.manifest_path());
    write_config_echo(cfg, out_dir);
    append_log(out_dir, "train: start (seed " + std::to_string(cfg.seed) + ", steps " +
                            std::to_string(cfg.train.steps) + ")");
    const TrainOutcome outcome = run_training(cfg.to_setup(), data, out_dir, resume);
    append_log(out_dir, "train: done, final total loss " +
                            std::to_string(outcome.final_loss.total));
    std::cout << "checkpoint: " << outcome.final_checkpoint.string() << '\n';
}

void cmd_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
              const std::filesystem::path& baseline,
              const std::optional<std::filesystem::path>& traces) {
    cfg.validate();
    const std::filesystem::path out_dir(cfg.out_dir);
    require_exists(checkpoint, "checkpoint");
    require_exists(baseline, "baseline checkpoint");
    require_exists(cfg.manifest_path(), "benchmark manifest");

    const TinyLM fused_model = model_from_checkpoint(load_checkpoint(checkpoint));
    const TinyLM baseline_model = model_from_checkpoint(load_checkpoint(baseline));
    const Dataset data = load_dataset(cfg.manifest_path());

    std::vector<TraceStep> trace_data;
    const std::vector<TraceStep>* trace_ptr = nullptr;
    if (traces) {
        trace_data = load_selection_trace(*traces);
        trace_ptr = &trace_data;
    }

    const EvalReport report = eval_report(fused_model, baseline_model, data, trace_ptr);
    std::filesystem::create_directories(out_dir);
    write_eval_report_json(out_dir / "eval_report.json", report);
    write_eval_report_csv(out_dir / "eval_report.csv", report);
    append_log(out_dir, "eval: degradation rate " + std::to_string(report.degradation_rate));
    std::cout << "degradation_rate: " << report.degradation_rate << '\n';
    std::cout << "fused_overall_ppl: " << report.fused_overall_ppl << '\n';
    std::cout << "baseline_overall_ppl: " << report.baseline_overall_ppl << '\n';
    if (!report.histogram_present) {
        std::cout << "selection histogram omitted (no traces provided)\n";
    }
}

namespace {

struct AblateRun {
    std::string axis;
    std::string setting;
    RunConfig cfg;
};

std::vector<AblateRun> ablate_runs_for_axis(const RunConfig& base, const std::string& axis) {
    std::vector<AblateRun> runs;
    auto push = [&](const std::string& setting, RunConfig cfg) {
        runs.push_back(AblateRun{axis, setting, std::move(cfg)});
    };
    if (axis == "count") {
        for (const auto mode : {CountMode::top2, CountMode::adaptive, CountMode::all}) {
            RunConfig cfg = base;
            cfg.selection.count_mode = mode;
            push(to_string(mode), std::move(cfg));
        }
    } else if (axis == "metric") {
        for (const auto metric :
             {SelectionMetric::softmax, SelectionMetric::gumbel, SelectionMetric::noisy}) {
            RunConfig cfg = base;
            cfg.selection.metric = metric;
            push(to_string(metric), std::move(cfg));
        }
    } else if (axis == "layers") {
        for (const int layers : {1, 3}) {
            RunConfig cfg = base;
            cfg.selection.layers = layers;
            push(std::to_string(layers) + "x_linear", std::move(cfg));
        }
    } else if (axis == "fusion") {
        for (const auto method :
             {FusionMethod::average, FusionMethod::maximum,
              FusionMethod::weighted_without_selection, FusionMethod::weighted}) {
            RunConfig cfg = base;
            cfg.fusion = method;
            push(to_string(method), std::move(cfg));
        }
    } else if (axis == "threshold") {
        for (const double tau : {0.2, 0.15, 0.12}) {
            RunConfig cfg = base;
            cfg.selection.threshold = tau;
            std::ostringstream label;
            label << tau;
            push(label.str(), std::move(cfg));
        }
    } else if (axis == "feedback") {
        RunConfig off = base;
        off.objective.lambda_feed = 0.0;
        push("off", std::move(off));
        RunConfig on = base;
        if (on.objective.lambda_feed <= 0.0) on.objective.lambda_feed = 0.5;
        push("on", std::move(on));
    } else {
        throw UsageError("unknown ablation axis '" + axis +
                         "'; valid axes: count, metric, layers, fusion, threshold, feedback, all");
    }
    return runs;
}

}  // namespace

void cmd_ablate(const RunConfig& cfg, const std::string& axis) {
    cfg.validate();
    const std::filesystem::path out_dir(cfg.out_dir);
    require_exists(cfg.manifest_path(), "benchmark manifest");

    std::vector<std::string> axes;
    if (axis == "all") {
        axes = {"count", "metric", "layers", "fusion", "threshold", "feedback"};
    } else {
        axes = {axis};
    }
    std::vector<AblateRun> runs;
    for (const auto& a : axes) {
        auto axis_runs = ablate_runs_for_axis(cfg, a);
        runs.insert(runs.end(), std::make_move_iterator(axis_runs.begin()),
                    std::make_move_iterator(axis_runs.end()));
    }

    const Dataset data = load_dataset(cfg.manifest_path());
    write_config_echo(cfg, out_dir);
    append_log(out_dir, "ablate: axis " + axis);

    // Shared continued-training baseline: same seed, no fusion objective.
    RunConfig ct = cfg;
    ct.objective.lambda_fuse = 0.0;
    ct.objective.lambda_feed = 0.0;
    const auto ct_dir = out_dir / "ablate" / "ct_baseline";
    const TrainOutcome ct_outcome = run_training(ct.to_setup(), data, ct_dir);
    const TinyLM ct_model = model_from_checkpoint(load_checkpoint(ct_outcome.final_checkpoint));

    std::ofstream csv(out_dir / "ablate.csv");
    if (!csv) throw IoError("cmd_ablate: cannot open ablate.csv");
    csv << "axis,setting,seed,held_out_ppl,degradation_rate\n";

    std::string best_fusion_setting;
    double best_fusion_ppl = 0.0;
    for (const auto& run : runs) {
        std::string dir_name = run.setting;
        for (char& c : dir_name) {
            if (c == '.') c = 'p';
        }
        const auto run_dir = out_dir / "ablate" / run.axis / dir_name;
        write_config_echo(run.cfg, run_dir);
        const TrainOutcome outcome = run_training(run.cfg.to_setup(), data, run_dir);
        const TinyLM model = model_from_checkpoint(load_checkpoint(outcome.final_checkpoint));

        std::vector<TraceStep> traces;
        const std::vector<TraceStep>* trace_ptr = nullptr;
        const auto trace_path = run_dir / "selection_trace.jsonl";
        if (std::filesystem::exists(trace_path)) {
            traces = load_selection_trace(trace_path);
            trace_ptr = &traces;
        }
        const EvalReport report = eval_report(model, ct_model, data, trace_ptr);
        csv << run.axis << ',' << run.setting << ',' << cfg.seed << ','
            << report.fused_overall_ppl << ',' << report.degradation_rate << '\n';

        if (run.axis == "fusion" &&
            (best_fusion_setting.empty() || report.fused_overall_ppl < best_fusion_ppl)) {
            best_fusion_setting = run.setting;
            best_fusion_ppl = report.fused_overall_ppl;
        }
    }
    if (!best_fusion_setting.empty()) {
        std::cout << "best fusion method by held-out perplexity: " << best_fusion_setting
                  << " (" << best_fusion_ppl << ")\n";
    }
    append_log(out_dir, "ablate: wrote ablate.csv");
    std::cout << "wrote " << (out_dir / "ablate.csv").string() << '\n';
}

bool cmd_gradcheck(const RunConfig& cfg, const std::string& inject_error_module) {
    const std::filesystem::path out_dir(cfg.out_dir);
    const auto reports = run_gradcheck(20, inject_error_module);

    json j = json::array();
    bool all_pass = true;
    for (const auto& report : reports) {
        json entry;
        entry["module"] = report.module;
        entry["max_rel_error"] = report.max_rel_error;
        entry["tolerance"] = report.tolerance;
        entry["pass"] = report.pass;
        j.push_back(entry);
        all_pass = all_pass && report.pass;
        std::cout << report.module << ": max_rel_error=" << report.max_rel_error
                  << " tolerance=" << report.tolerance << ' '
                  << (report.pass ? "PASS" : "FAIL") << '\n';
    }
    std::filesystem::create_directories(out_dir);
    std::ofstream out(out_dir / "gradcheck.json");
    if (!out) throw IoError("cmd_gradcheck: cannot open gradcheck.json");
    out << j.dump(2) << '\n';
    return all_pass;
}

}  // namespace adafuse
