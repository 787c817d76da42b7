#include "adafuse/align.hpp"

#include <algorithm>
#include <fstream>

namespace adafuse {

Vocab::Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.empty()) throw VocabError("Vocab: empty token table");
    index_.reserve(tokens_.size());
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) {
            throw VocabError("Vocab: empty token string at id " + std::to_string(i));
        }
        auto [_, inserted] = index_.emplace(tokens_[i], static_cast<std::uint32_t>(i));
        if (!inserted) throw VocabError("Vocab: duplicate token '" + tokens_[i] + "'");
    }
}

const std::string& Vocab::token(std::uint32_t id) const {
    if (id >= tokens_.size()) throw VocabError("Vocab: id out of range");
    return tokens_[id];
}

std::uint32_t Vocab::id_of(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) throw VocabError("Vocab: unknown token '" + token + "'");
    return it->second;
}

bool Vocab::contains(const std::string& token) const {
    return index_.count(token) > 0;
}

Vocab Vocab::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("Vocab::load: cannot open " + path.string());
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
}

void Vocab::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("Vocab::save: cannot open " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
    if (!out) throw IoError("Vocab::save: write failed for " + path.string());
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    if (n == 0) return m;
    if (m == 0) return n;
    std::vector<std::size_t> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

TokenAlignment token_align_dp(const TokenSeq& src, const Vocab& src_vocab,
                              const TokenSeq& tgt, const Vocab& tgt_vocab) {
    const std::size_t n = src.length();
    const std::size_t m = tgt.length();
    if (n == 0 || m == 0) throw AlignmentError("token_align_dp: empty sequence");

    std::vector<std::size_t> src_gap(n), tgt_gap(m);
    for (std::size_t i = 0; i < n; ++i) src_gap[i] = src_vocab.token(src.ids[i]).size();
    for (std::size_t j = 0; j < m; ++j) tgt_gap[j] = tgt_vocab.token(tgt.ids[j]).size();

    Mat cost(n + 1, m + 1);
    // Moves: 0 = diagonal match, 1 = skip source token, 2 = skip target token.
    std::vector<std::uint8_t> move((n + 1) * (m + 1), 0);
    cost.at(0, 0) = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        cost.at(i, 0) = cost.at(i - 1, 0) + static_cast<double>(src_gap[i - 1]);
        move[i * (m + 1)] = 1;
    }
    for (std::size_t j = 1; j <= m; ++j) {
        cost.at(0, j) = cost.at(0, j - 1) + static_cast<double>(tgt_gap[j - 1]);
        move[j] = 2;
    }
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const double diag = cost.at(i - 1, j - 1) +
                                static_cast<double>(edit_distance(src_vocab.token(src.ids[i - 1]),
                                                                  tgt_vocab.token(tgt.ids[j - 1])));
            const double up = cost.at(i - 1, j) + static_cast<double>(src_gap[i - 1]);
            const double left = cost.at(i, j - 1) + static_cast<double>(tgt_gap[j - 1]);
            double best = diag;
            std::uint8_t mv = 0;
            if (up < best) { best = up; mv = 1; }
            if (left < best) { best = left; mv = 2; }
            cost.at(i, j) = best;
            move[i * (m + 1) + j] = mv;
        }
    }

    TokenAlignment out;
    out.cost = static_cast<std::size_t>(cost.at(n, m) + 0.5);
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        const std::uint8_t mv = move[i * (m + 1) + j];
        if (i > 0 && j > 0 && mv == 0) {
            out.pairs.emplace_back(i - 1, j - 1);
            --i;
            --j;
        } else if (i > 0 && (mv == 1 || j == 0)) {
            --i;
        } else {
            --j;
        }
    }
    std::reverse(out.pairs.begin(), out.pairs.end());
    return out;
}

AlignmentMap vocab_map_min_ed(const Vocab& src, const Vocab& tgt) {
    AlignmentMap map;
    map.target_id.resize(src.size());
    map.distance.resize(src.size());
    for (std::uint32_t s = 0; s < src.size(); ++s) {
        const std::string& token = src.token(s);
        std::size_t best = edit_distance(token, tgt.token(0));
        std::uint32_t best_id = 0;
        for (std::uint32_t t = 1; t < tgt.size(); ++t) {
            const std::size_t d = edit_distance(token, tgt.token(t));
            if (d < best) {
                best = d;
                best_id = t;
            }
        }
        map.target_id[s] = best_id;
        map.distance[s] = static_cast<std::uint32_t>(best);
    }
    return map;
}

Mat scatter_columns(const ProbMatrix& src, const AlignmentMap& map, std::size_t target_vocab) {
    if (map.target_id.size() != src.cols()) {
        throw AlignmentError("scatter_columns: map does not cover the source vocabulary");
    }
    for (std::uint32_t t : map.target_id) {
        if (t >= target_vocab) throw AlignmentError("scatter_columns: target id out of range");
    }
    Mat out(src.rows(), target_vocab);
    for (std::size_t r = 0; r < src.rows(); ++r) {
        const double* in = src.row(r);
        double* o = out.row(r);
        for (std::size_t c = 0; c < src.cols(); ++c) o[map.target_id[c]] += in[c];
    }
    return out;
}

ProbMatrix project_distribution(const ProbMatrix& src, const AlignmentMap& map,
                                std::size_t target_vocab) {
    Mat out = scatter_columns(src, map, target_vocab);
    for (std::size_t r = 0; r < out.rows; ++r) {
        double* row = out.row(r);
        double sum = 0.0;
        for (std::size_t c = 0; c < out.cols; ++c) sum += row[c];
        for (std::size_t c = 0; c < out.cols; ++c) row[c] /= sum;
    }
    return ProbMatrix(std::move(out));
}

void save_alignment_csv(const std::filesystem::path& path, const AlignmentMap& map) {
    std::ofstream out(path);
    if (!out) throw IoError("save_alignment_csv: cannot open " + path.string());
    out << "src_id,tgt_id,edit_distance\n";
    for (std::size_t s = 0; s < map.target_id.size(); ++s) {
        out << s << ',' << map.target_id[s] << ',' << map.distance[s] << '\n';
    }
    if (!out) throw IoError("save_alignment_csv: write failed for " + path.string());
}

}  // namespace adafuse
