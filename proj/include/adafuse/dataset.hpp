#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "adafuse/prob.hpp"

namespace adafuse {

// One training/evaluation text: the token sequence, its one-hot labels, and
// the M source distribution matrices already aligned to the target
// vocabulary.
struct Sample {
    std::uint32_t domain = 0;
    std::uint32_t index_in_domain = 0;
    TokenSeq seq;
    OneHotLabels labels;
    std::vector<ProbMatrix> sources;
};

struct Dataset {
    std::size_t vocab = 0;
    std::size_t num_sources = 0;
    std::size_t num_domains = 0;
    std::vector<Sample> train;
    std::vector<Sample> eval;
};

// Loads the corpus and the per-sample ".pdm" source matrices referenced by a
// benchmark manifest.
Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace adafuse
