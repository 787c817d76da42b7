#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "adafuse/common.hpp"

namespace adafuse {

inline constexpr double kRowSumTol = 1e-9;
inline constexpr double kLogClampEps = 1e-12;
inline constexpr double kLayerNormEps = 1e-5;

// Token id 0 is reserved as the padding id for positions with insufficient
// context; generated corpora never emit it as a content token.
inline constexpr std::uint32_t kPadId = 0;

struct TokenSeq {
    std::vector<std::uint32_t> ids;

    std::size_t length() const { return ids.size(); }
};

// Row-stochastic N x V matrix of per-position predictive distributions.
// Construction validates the invariants (finite, nonnegative, rows summing
// to 1 within kRowSumTol); a violation throws, never passes silently.
class ProbMatrix {
public:
    explicit ProbMatrix(Mat m);
    static ProbMatrix uniform(std::size_t rows, std::size_t cols);

    const Mat& mat() const { return m_; }
    std::size_t rows() const { return m_.rows; }
    std::size_t cols() const { return m_.cols; }
    double at(std::size_t r, std::size_t c) const { return m_.at(r, c); }
    const double* row(std::size_t r) const { return m_.row(r); }

private:
    Mat m_;
};

// One-hot label matrix: row n carries a single 1 at the hot index.
class OneHotLabels {
public:
    OneHotLabels(std::size_t vocab, std::vector<std::uint32_t> hot);
    static OneHotLabels from_sequence(const TokenSeq& seq, std::size_t vocab);

    std::size_t rows() const { return hot_.size(); }
    std::size_t cols() const { return vocab_; }
    std::uint32_t hot(std::size_t n) const { return hot_[n]; }

private:
    std::size_t vocab_;
    std::vector<std::uint32_t> hot_;
};

// Numerically stable softmax (max-subtraction). Throws NumericError on
// non-finite input.
std::vector<double> softmax_row(std::span<const double> logits);

// Exact Gaussian-CDF GELU: x * Phi(x).
double gelu_scalar(double x);
double gelu_derivative(double x);
std::vector<double> gelu(std::span<const double> x);

// Zero-mean unit-variance normalization with population variance and an
// epsilon-stabilized denominator; no learned affine parameters. A constant
// vector maps to zeros.
std::vector<double> layer_norm_vec(std::span<const double> x);

// Mean over rows of -sum_v target * log(pred), with pred clamped below at
// kLogClampEps before the log.
double cross_entropy_rows(const ProbMatrix& pred, const ProbMatrix& target);
double cross_entropy_rows(const ProbMatrix& pred, const OneHotLabels& target);

double perplexity(const ProbMatrix& pred, const OneHotLabels& labels);

// ".pdm" container: 16-byte header (magic "PDM1", u32 LE rows, u32 LE cols,
// u32 LE dtype code 1 = f64) followed by row-major little-endian f64 values.
// Loading re-validates the row-stochastic invariants.
void write_pdm(const std::filesystem::path& path, const ProbMatrix& m);
ProbMatrix read_pdm(const std::filesystem::path& path);

}  // namespace adafuse
