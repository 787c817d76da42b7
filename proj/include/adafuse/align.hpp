#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "adafuse/prob.hpp"

namespace adafuse {

// Bijective id <-> string table with dense ids. Comparison is exact bytes;
// tokenizer strings get no normalization.
class Vocab {
public:
    explicit Vocab(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    const std::string& token(std::uint32_t id) const;
    std::uint32_t id_of(const std::string& token) const;  // throws VocabError
    bool contains(const std::string& token) const;

    // Newline-delimited UTF-8; line k is the string of id k.
    static Vocab load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

// Total map from source ids to the target id at minimal edit distance.
struct AlignmentMap {
    std::vector<std::uint32_t> target_id;  // indexed by source id
    std::vector<std::uint32_t> distance;   // stored edit distance per entry
};

// Monotone token-level alignment from the sequence DP: matched
// (source position, target position) pairs, strictly increasing in both
// coordinates, plus the minimal total cost.
struct TokenAlignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t cost = 0;
};

// Levenshtein distance with unit insert/delete/substitute costs.
std::size_t edit_distance(std::string_view a, std::string_view b);

// Minimal-cost monotone alignment of two tokenizations. A matched pair costs
// the edit distance of the two token strings; skipping a token costs its
// string length. Ties prefer the diagonal (match) move, then skipping a
// source token, so the result is deterministic.
TokenAlignment token_align_dp(const TokenSeq& src, const Vocab& src_vocab,
                              const TokenSeq& tgt, const Vocab& tgt_vocab);

// Maps every source token to the target token with minimal edit distance;
// ties go to the lowest target id.
AlignmentMap vocab_map_min_ed(const Vocab& src, const Vocab& tgt);

// Column scatter-add of source probability mass into mapped target columns,
// before row renormalization. Exposed for mass-conservation checks.
Mat scatter_columns(const ProbMatrix& src, const AlignmentMap& map, std::size_t target_vocab);

// Projects a source-vocabulary distribution matrix onto the target
// vocabulary: mass is accumulated per mapped column, then each row is
// renormalized to absorb rounding.
ProbMatrix project_distribution(const ProbMatrix& src, const AlignmentMap& map,
                                std::size_t target_vocab);

// CSV export: "src_id,tgt_id,edit_distance" with a header row.
void save_alignment_csv(const std::filesystem::path& path, const AlignmentMap& map);

}  // namespace adafuse
