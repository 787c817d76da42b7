#include "adafuse/dataset.hpp"

#include <fstream>

#include "json.hpp"

namespace adafuse {

using nlohmann::json;

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("load_dataset: cannot open manifest " + manifest_path.string());
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError("load_dataset: bad manifest " + manifest_path.string() + ": " + e.what());
    }

    Dataset data;
    data.vocab = manifest.at("vocab").get<std::size_t>();
    data.num_sources = manifest.at("num_sources").get<std::size_t>();
    data.num_domains = manifest.at("num_domains").get<std::size_t>();
    const auto base = manifest_path.parent_path();

    auto load_split = [&](const std::string& corpus_file, std::vector<Sample>& out) {
        std::ifstream corpus(base / corpus_file);
        if (!corpus) throw IoError("load_dataset: cannot open corpus " + corpus_file);
        std::string line;
        while (std::getline(corpus, line)) {
            if (line.empty()) continue;
            json j = json::parse(line);
            TokenSeq seq;
            seq.ids = j.at("seq").get<std::vector<std::uint32_t>>();
            for (std::uint32_t id : seq.ids) {
                if (id >= data.vocab) throw VocabError("load_dataset: token id out of range");
            }
            std::vector<ProbMatrix> sources;
            for (const auto& rel : j.at("matrices")) {
                ProbMatrix m = read_pdm(base / rel.get<std::string>());
                if (m.rows() != seq.ids.size() || m.cols() != data.vocab) {
                    throw DimensionError("load_dataset: matrix shape does not match sequence");
                }
                sources.push_back(std::move(m));
            }
            if (sources.size() != data.num_sources) {
                throw DimensionError("load_dataset: wrong source count in corpus line");
            }
            OneHotLabels labels = OneHotLabels::from_sequence(seq, data.vocab);
            out.push_back(Sample{j.at("domain").get<std::uint32_t>(),
                                 j.at("index").get<std::uint32_t>(), std::move(seq),
                                 std::move(labels), std::move(sources)});
        }
    };

    load_split(manifest.at("corpus").at("train").get<std::string>(), data.train);
    load_split(manifest.at("corpus").at("eval").get<std::string>(), data.eval);
    if (data.train.empty() || data.eval.empty()) {
        throw IoError("load_dataset: empty corpus split");
    }
    return data;
}

}  // namespace adafuse
