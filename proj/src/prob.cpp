#include "adafuse/prob.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "adafuse/binio.hpp"

namespace adafuse {

namespace {

void validate_prob_mat(const Mat& m) {
    if (m.rows == 0 || m.cols == 0) {
        throw DimensionError("ProbMatrix: empty matrix");
    }
    for (std::size_t r = 0; r < m.rows; ++r) {
        double sum = 0.0;
        const double* row = m.row(r);
        for (std::size_t c = 0; c < m.cols; ++c) {
            const double x = row[c];
            if (!std::isfinite(x)) {
                throw NumericError("ProbMatrix: non-finite entry at row " + std::to_string(r));
            }
            if (x < 0.0) {
                throw NumericError("ProbMatrix: negative entry at row " + std::to_string(r));
            }
            sum += x;
        }
        if (std::abs(sum - 1.0) > kRowSumTol) {
            throw NumericError("ProbMatrix: row " + std::to_string(r) +
                               " sums to " + std::to_string(sum));
        }
    }
}

}  // namespace

ProbMatrix::ProbMatrix(Mat m) : m_(std::move(m)) {
    validate_prob_mat(m_);
}

ProbMatrix ProbMatrix::uniform(std::size_t rows, std::size_t cols) {
    Mat m(rows, cols, 1.0 / static_cast<double>(cols));
    return ProbMatrix(std::move(m));
}

OneHotLabels::OneHotLabels(std::size_t vocab, std::vector<std::uint32_t> hot)
    : vocab_(vocab), hot_(std::move(hot)) {
    if (vocab_ == 0 || hot_.empty()) {
        throw DimensionError("OneHotLabels: empty");
    }
    for (std::uint32_t h : hot_) {
        if (h >= vocab_) throw VocabError("OneHotLabels: hot index out of range");
    }
}

OneHotLabels OneHotLabels::from_sequence(const TokenSeq& seq, std::size_t vocab) {
    return OneHotLabels(vocab, seq.ids);
}

std::vector<double> softmax_row(std::span<const double> logits) {
    if (logits.empty()) throw DimensionError("softmax_row: empty input");
    double mx = logits[0];
    for (double z : logits) {
        if (!std::isfinite(z)) throw NumericError("softmax_row: non-finite logit");
        mx = std::max(mx, z);
    }
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

double gelu_scalar(double x) {
    return x * 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

double gelu_derivative(double x) {
    const double phi = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return phi + x * pdf;
}

std::vector<double> gelu(std::span<const double> x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) throw NumericError("gelu: non-finite input");
        out[i] = gelu_scalar(x[i]);
    }
    return out;
}

std::vector<double> layer_norm_vec(std::span<const double> x) {
    if (x.size() < 2) throw DimensionError("layer_norm_vec: need length >= 2");
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) {
        if (!std::isfinite(v)) throw NumericError("layer_norm_vec: non-finite input");
        mean += v;
    }
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double denom = std::sqrt(var + kLayerNormEps);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean) / denom;
    return out;
}

double cross_entropy_rows(const ProbMatrix& pred, const ProbMatrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw DimensionError("cross_entropy_rows: shape mismatch");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < pred.rows(); ++r) {
        const double* p = pred.row(r);
        const double* t = target.row(r);
        double row = 0.0;
        for (std::size_t c = 0; c < pred.cols(); ++c) {
            row -= t[c] * std::log(std::max(p[c], kLogClampEps));
        }
        total += row;
    }
    return total / static_cast<double>(pred.rows());
}

double cross_entropy_rows(const ProbMatrix& pred, const OneHotLabels& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw DimensionError("cross_entropy_rows: shape mismatch");
    }
    double total = 0.0;
    for (std::size_t r = 0; r < pred.rows(); ++r) {
        total -= std::log(std::max(pred.at(r, target.hot(r)), kLogClampEps));
    }
    return total / static_cast<double>(pred.rows());
}

double perplexity(const ProbMatrix& pred, const OneHotLabels& labels) {
    return std::exp(cross_entropy_rows(pred, labels));
}

void write_pdm(const std::filesystem::path& path, const ProbMatrix& m) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_pdm: cannot open " + path.string());
    out.write("PDM1", 4);
    binio::write_u32(out, static_cast<std::uint32_t>(m.rows()));
    binio::write_u32(out, static_cast<std::uint32_t>(m.cols()));
    binio::write_u32(out, 1);  // dtype code: f64
    for (double x : m.mat().v) binio::write_f64(out, x);
    if (!out) throw IoError("write_pdm: write failed for " + path.string());
}

ProbMatrix read_pdm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_pdm: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "PDM1", 4) != 0) {
        throw IoError("read_pdm: bad magic in " + path.string());
    }
    const std::uint32_t rows = binio::read_u32(in);
    const std::uint32_t cols = binio::read_u32(in);
    const std::uint32_t dtype = binio::read_u32(in);
    if (!in || dtype != 1) throw IoError("read_pdm: unsupported dtype in " + path.string());
    if (rows == 0 || cols == 0) throw IoError("read_pdm: empty shape in " + path.string());
    Mat m(rows, cols);
    for (double& x : m.v) x = binio::read_f64(in);
    if (!in) throw IoError("read_pdm: truncated file " + path.string());
    return ProbMatrix(std::move(m));
}

}  // namespace adafuse
