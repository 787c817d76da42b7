#include "adafuse/fusion.hpp"

#include <cmath>

namespace adafuse {

namespace {

void check_shapes(const std::vector<const ProbMatrix*>& selected) {
    if (selected.empty()) throw DimensionError("fusion: no selected matrices");
    const std::size_t rows = selected[0]->rows();
    const std::size_t cols = selected[0]->cols();
    for (const auto* m : selected) {
        if (m == nullptr) throw UsageError("fusion: null matrix");
        if (m->rows() != rows || m->cols() != cols) {
            throw DimensionError("fusion: matrix shape mismatch");
        }
    }
}

}  // namespace

FusionMethod fusion_method_from_string(const std::string& name) {
    if (name == "weighted") return FusionMethod::weighted;
    if (name == "average") return FusionMethod::average;
    if (name == "maximum") return FusionMethod::maximum;
    if (name == "weighted_without_selection") return FusionMethod::weighted_without_selection;
    throw ConfigError("unknown fusion method '" + name + "'");
}

std::string to_string(FusionMethod method) {
    switch (method) {
        case FusionMethod::weighted: return "weighted";
        case FusionMethod::average: return "average";
        case FusionMethod::maximum: return "maximum";
        case FusionMethod::weighted_without_selection: return "weighted_without_selection";
    }
    return "unknown";
}

ProbMatrix fuse_weighted(const std::vector<const ProbMatrix*>& selected,
                         const std::vector<double>& weights) {
    check_shapes(selected);
    if (weights.size() != selected.size()) {
        throw DimensionError("fuse_weighted: weight/matrix count mismatch");
    }
    double sum = 0.0;
    for (double w : weights) sum += w;
    if (std::abs(sum - 1.0) > 1e-6) {
        throw NumericError("fuse_weighted: weights sum to " + std::to_string(sum));
    }
    Mat out(selected[0]->rows(), selected[0]->cols());
    for (std::size_t j = 0; j < selected.size(); ++j) {
        const double w = weights[j];
        const auto& src = selected[j]->mat().v;
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += w * src[i];
    }
    // Scalar renormalization absorbs the epsilon deficit the masked weight
    // renormalization leaves in sum(weights). Division by an exact 1.0 is a
    // bitwise no-op.
    for (double& x : out.v) x /= sum;
    return ProbMatrix(std::move(out));
}

ProbMatrix fuse_average(const std::vector<const ProbMatrix*>& selected) {
    check_shapes(selected);
    const std::vector<double> weights(selected.size(), 1.0 / static_cast<double>(selected.size()));
    return fuse_weighted(selected, weights);
}

ProbMatrix fuse_max(const std::vector<const ProbMatrix*>& selected) {
    check_shapes(selected);
    const std::size_t rows = selected[0]->rows();
    const std::size_t cols = selected[0]->cols();
    Mat out(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t winner = 0;
        double best = -1.0;
        for (std::size_t j = 0; j < selected.size(); ++j) {
            const double* row = selected[j]->row(r);
            double top = 0.0;
            for (std::size_t c = 0; c < cols; ++c) top = std::max(top, row[c]);
            if (top > best) {
                best = top;
                winner = j;
            }
        }
        const double* src = selected[winner]->row(r);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sum += src[c];
        for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = src[c] / sum;
    }
    return ProbMatrix(std::move(out));
}

std::vector<double> fuse_backward(const std::vector<const ProbMatrix*>& selected,
                                  const Mat& upstream) {
    check_shapes(selected);
    if (upstream.rows != selected[0]->rows() || upstream.cols != selected[0]->cols()) {
        throw DimensionError("fuse_backward: upstream shape mismatch");
    }
    std::vector<double> grads(selected.size(), 0.0);
    for (std::size_t j = 0; j < selected.size(); ++j) {
        const auto& src = selected[j]->mat().v;
        double acc = 0.0;
        for (std::size_t i = 0; i < src.size(); ++i) acc += upstream.v[i] * src[i];
        grads[j] = acc;
    }
    return grads;
}

}  // namespace adafuse
