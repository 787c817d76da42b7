#pragma once

#include <string>
#include <vector>

#include "adafuse/prob.hpp"

namespace adafuse {

enum class FusionMethod { weighted, average, maximum, weighted_without_selection };

FusionMethod fusion_method_from_string(const std::string& name);
std::string to_string(FusionMethod method);

// Convex combination sum_j weights[j] * matrices[j]. Weights must sum to 1
// within 1e-6.
ProbMatrix fuse_weighted(const std::vector<const ProbMatrix*>& selected,
                         const std::vector<double>& weights);

// fuse_weighted with uniform 1/K weights.
ProbMatrix fuse_average(const std::vector<const ProbMatrix*>& selected);

// Per-position winner-take-all: each row is taken from the source whose
// top-token probability at that position is highest (lowest source index on
// ties), then renormalized.
ProbMatrix fuse_max(const std::vector<const ProbMatrix*>& selected);

// Gradient of a scalar loss with respect to the fusion weights:
// dL/dw_j = <upstream, P_j> (Frobenius inner product). Source matrices are
// frozen.
std::vector<double> fuse_backward(const std::vector<const ProbMatrix*>& selected,
                                  const Mat& upstream);

}  // namespace adafuse
