/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "wc4dvar/criteria.hpp"
#include "wc4dvar/problem.hpp"

namespace wc4dvar {

/// Reshaped view stacking the per-snapshot blocks of a block-column matrix,
/// so column s collects the sensor-s column of every block. A pure index
/// permutation; matvecs delegate to the source operator.
LinearOperator reshape_block_columns(const BlockColumnMatrix& matrix);

struct TruncatedSVD {
  Vector singular_values;
  Matrix right_vectors;  // cols x rank
};

enum class SvdMethod { randomized, lanczos_bidiag };

/// Matrix-free truncated SVD: randomized range finder with power iterations
/// (default) or Golub-Kahan bidiagonalization with full reorthogonalization.
TruncatedSVD truncated_svd(const LinearOperator& op, Index rank, SvdMethod method,
                           Index oversampling, Index power_iterations, std::uint64_t seed);

/// Near-optimality interval for a selected design: the criterion lies in
/// [sum log(1 + sigma_j^2 / zeta^2), sum log(1 + sigma_j^2)] over the top
/// K = n_blocks * k singular values, zeta the inverse smallest singular
/// value of the selected right-singular-vector rows.
struct GksBound {
  double lower = 0.0;
  double upper = 0.0;
  double zeta = 0.0;  // +inf collapses the lower bound to 0
  Vector singular_values;
};

std::optional<GksBound> gks_bound(const BlockColumnMatrix& matrix, const SensorDesign& design,
                                  Index densify_budget = 2000);

struct DesignSearchResult {
  SensorDesign design{1, {}};
  double criterion = 0.0;
  std::string method;
  std::optional<GksBound> bound;
  std::uint64_t seed = 0;
  bool rank_deficient = false;
  std::uint64_t sketch_transpose_applications = 0;  // adjoint-free audit (raf)
  std::vector<double> greedy_gains;
  std::string warning;
};

struct GksOptions {
  Index svd_rank = 0;  // 0: use k
  SvdMethod svd_method = SvdMethod::randomized;
  Index oversampling = 10;
  Index power_iterations = 2;
  std::uint64_t seed = 0;
  bool compute_bound = true;
  Index bound_densify_budget = 2000;
};

/// Column subset selection: truncated SVD of the reshaped matrix, then
/// column-pivoted QR on the right singular vectors; the first k pivots are
/// the design.
DesignSearchResult gks_select(const BlockColumnMatrix& matrix, Index k,
                              const GksOptions& options = {});

struct RafOptions {
  Index oversampling = 20;
  std::optional<Index> sketch_rows;  // override for n_windows * k + oversampling
  std::uint64_t seed = 0;
  bool compute_bound = true;
  Index bound_densify_budget = 2000;
};

/// Gaussian sketch Y = Omega A of the criterion matrix, formed column-by-
/// column through the transpose direction only (forward dynamics, no
/// adjoint model applications).
Matrix sketch_criterion_matrix(const DAProblem& problem, Index sketch_rows, std::uint64_t seed);

/// Randomized adjoint-free selection: sketch, reshape, dense GKS tail.
/// Asserts that the sketch never applied a transposed window map.
DesignSearchResult raf_select(const DAProblem& problem, Index k, const RafOptions& options = {});

using DesignEvaluator = std::function<double(const SensorDesign&)>;

/// Add the argmax-gain sensor k times; ties go to the smallest index.
DesignSearchResult greedy_select(Index n_sensors, Index k, const DesignEvaluator& evaluate);

/// Exact argmax over all k-subsets in lexicographic order (ties to the
/// lexicographically smallest). Refuses when C(n_sensors, k) exceeds the budget.
DesignSearchResult exhaustive_select(Index n_sensors, Index k, const DesignEvaluator& evaluate,
                                     std::uint64_t budget = 200000);

struct RandomDesignSample {
  std::vector<double> values;  // criterion per sampled design, in draw order
  std::uint64_t seed = 0;
  /// Share of sampled designs strictly below v, in percent rounded to 0.1.
  double percentile(double v) const;
};

RandomDesignSample random_design_sample(Index n_sensors, Index k, Index count, std::uint64_t seed,
                                        const DesignEvaluator& evaluate);

}  // namespace wc4dvar
