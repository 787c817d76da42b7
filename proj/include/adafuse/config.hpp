#pragma once

#include <filesystem>
#include <string>

#include "adafuse/fusion.hpp"
#include "adafuse/objective.hpp"
#include "adafuse/selector.hpp"
#include "adafuse/synthbench.hpp"
#include "adafuse/trainer.hpp"

namespace adafuse {

// One experiment's full configuration. Lives on disk as TOML; parsing
// rejects any key outside the schema, and every run starts by echoing the
// canonical form (which also feeds the config hash recorded in checkpoints).
struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string manifest;  // empty: <out_dir>/manifest.json

    TrainConfig train;
    SelectionConfig selection;
    ObjectiveConfig objective;
    FusionMethod fusion = FusionMethod::weighted;
    bool dump_fused = false;
    BenchmarkConfig benchmark;

    void validate() const;
    std::string canonical_echo() const;
    std::uint64_t hash() const;
    TrainSetup to_setup() const;
    std::filesystem::path manifest_path() const;

    static RunConfig from_toml_file(const std::filesystem::path& path);
    static RunConfig from_toml_string(const std::string& text);
};

std::string to_string(SelectionMetric metric);
std::string to_string(CountMode mode);
std::string to_string(Pooling pooling);
std::string to_string(ObjectiveMode mode);

}  // namespace adafuse
