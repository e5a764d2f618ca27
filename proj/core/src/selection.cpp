/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/selection.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace wc4dvar {

LinearOperator reshape_block_columns(const BlockColumnMatrix& matrix) {
  const Index block_rows = matrix.op.rows();
  const Index n_blocks = matrix.n_blocks;
  const Index n_s = matrix.cols_per_block;
  const LinearOperator a = matrix.op;
  auto forward = [a, block_rows, n_blocks, n_s](const Vector& x) {
    Vector y(block_rows * n_blocks);
    Vector padded = Vector::Zero(n_blocks * n_s);
    for (Index b = 0; b < n_blocks; ++b) {
      padded.segment(b * n_s, n_s) = x;
      y.segment(b * block_rows, block_rows) = a.apply(padded);
      padded.segment(b * n_s, n_s).setZero();
    }
    return y;
  };
  auto transpose = [a, block_rows, n_blocks, n_s](const Vector& y) {
    Vector x = Vector::Zero(n_s);
    for (Index b = 0; b < n_blocks; ++b) {
      const Vector full = a.apply_transpose(y.segment(b * block_rows, block_rows));
      x += full.segment(b * n_s, n_s);
    }
    return x;
  };
  return LinearOperator(block_rows * n_blocks, n_s, forward, transpose);
}

namespace {

Matrix thin_qr_q(const Matrix& m) {
  Eigen::HouseholderQR<Matrix> qr(m);
  return qr.householderQ() * Matrix::Identity(m.rows(), std::min(m.rows(), m.cols()));
}

TruncatedSVD randomized_truncated_svd(const LinearOperator& op, Index rank, Index oversampling,
                                      Index power_iterations, std::uint64_t seed) {
  const Index max_rank = std::min(op.rows(), op.cols());
  const Index sample = std::min(rank + oversampling, max_rank);
  Matrix omega(op.cols(), sample);
  for (Index j = 0; j < sample; ++j) {
    Philox rng(seed, static_cast<std::uint64_t>(j));
    omega.col(j) = rng.gaussian_vector(op.cols());
  }
  Matrix y(op.rows(), sample);
  for (Index j = 0; j < sample; ++j) y.col(j) = op.apply(omega.col(j));
  Matrix q = thin_qr_q(y);
  for (Index t = 0; t < power_iterations; ++t) {
    Matrix z(op.cols(), q.cols());
    for (Index j = 0; j < q.cols(); ++j) z.col(j) = op.apply_transpose(q.col(j));
    z = thin_qr_q(z);
    Matrix y2(op.rows(), z.cols());
    for (Index j = 0; j < z.cols(); ++j) y2.col(j) = op.apply(z.col(j));
    q = thin_qr_q(y2);
  }
  Matrix b(q.cols(), op.cols());  // Q^T A
  for (Index j = 0; j < q.cols(); ++j) b.row(j) = op.apply_transpose(q.col(j)).transpose();
  Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinV);
  const Index keep = std::min(rank, static_cast<Index>(svd.singularValues().size()));
  return TruncatedSVD{svd.singularValues().head(keep),
                      svd.matrixV().leftCols(keep)};
}

TruncatedSVD lanczos_bidiag_truncated_svd(const LinearOperator& op, Index rank, Index oversampling,
                                          std::uint64_t seed) {
  const Index max_rank = std::min(op.rows(), op.cols());
  const Index m = std::min(rank + oversampling, max_rank);
  Matrix u_basis(op.rows(), m), v_basis(op.cols(), m);
  Vector alpha(m), beta(m);
  Philox rng(seed, 0);
  Vector v = rng.gaussian_vector(op.cols()).normalized();
  Index steps = 0;
  for (Index j = 0; j < m; ++j) {
    v_basis.col(j) = v;
    Vector p = op.apply(v);
    if (j > 0) p -= beta[j - 1] * u_basis.col(j - 1);
    for (int pass = 0; pass < 2 && j > 0; ++pass) {
      p -= u_basis.leftCols(j) * (u_basis.leftCols(j).transpose() * p);
    }
    alpha[j] = p.norm();
    steps = j + 1;
    if (alpha[j] <= 1e-14) break;
    u_basis.col(j) = p / alpha[j];
    Vector q = op.apply_transpose(u_basis.col(j)) - alpha[j] * v;
    for (int pass = 0; pass < 2; ++pass) {
      q -= v_basis.leftCols(j + 1) * (v_basis.leftCols(j + 1).transpose() * q);
    }
    beta[j] = q.norm();
    if (beta[j] <= 1e-14) break;
    v = q / beta[j];
  }
  Matrix bidiag = Matrix::Zero(steps, steps);
  for (Index j = 0; j < steps; ++j) {
    bidiag(j, j) = alpha[j];
    if (j + 1 < steps) bidiag(j, j + 1) = beta[j];
  }
  Eigen::JacobiSVD<Matrix> svd(bidiag, Eigen::ComputeThinV);
  const Index keep = std::min(rank, steps);
  return TruncatedSVD{svd.singularValues().head(keep),
                      v_basis.leftCols(steps) * svd.matrixV().leftCols(keep)};
}

/// First-k CPQR pivots of V^T, returned as a sorted design.
SensorDesign cpqr_design(const Matrix& right_vectors, Index n_sensors, Index k) {
  Eigen::ColPivHouseholderQR<Matrix> qr(right_vectors.transpose());
  const auto& pivots = qr.colsPermutation().indices();
  std::vector<Index> chosen;
  chosen.reserve(static_cast<std::size_t>(k));
  for (Index i = 0; i < k; ++i) chosen.push_back(static_cast<Index>(pivots[i]));
  std::sort(chosen.begin(), chosen.end());
  return SensorDesign(n_sensors, std::move(chosen));
}

/// Exact criterion of the selected columns via the smaller Gram side.
double selected_criterion(const BlockColumnMatrix& matrix, const SensorDesign& design) {
  if (design.n_selected() == 0) return 0.0;
  const LinearOperator sel = select_columns(matrix, design);
  const Matrix dense = densify(sel);
  Matrix gram;
  if (dense.cols() <= dense.rows()) {
    gram = dense.transpose() * dense;
  } else {
    gram = dense * dense.transpose();
  }
  gram.diagonal().array() += 1.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  double sum = 0.0;
  for (Index i = 0; i < es.eigenvalues().size(); ++i) sum += std::log(es.eigenvalues()[i]);
  return sum;
}

std::uint64_t binomial_capped(Index n, Index k, std::uint64_t cap) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (Index i = 1; i <= k; ++i) {
    const double next = static_cast<double>(result) * static_cast<double>(n - k + i) /
                        static_cast<double>(i);
    if (next > static_cast<double>(cap) * 2.0) return cap * 2;  // saturate, caller only compares
    result = result * static_cast<std::uint64_t>(n - k + i) / static_cast<std::uint64_t>(i);
  }
  return result;
}

std::uint64_t bounded_draw(Philox& rng, std::uint64_t n) {
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t span = (std::numeric_limits<std::uint64_t>::max() / n) * n;
  std::uint64_t x;
  do {
    x = rng.next_u64();
  } while (x >= span);
  return x % n;
}

}  // namespace

TruncatedSVD truncated_svd(const LinearOperator& op, Index rank, SvdMethod method,
                           Index oversampling, Index power_iterations, std::uint64_t seed) {
  require_dim(rank >= 1, "truncated_svd: rank must be >= 1");
  if (method == SvdMethod::randomized) {
    return randomized_truncated_svd(op, rank, oversampling, power_iterations, seed);
  }
  return lanczos_bidiag_truncated_svd(op, rank, oversampling, seed);
}

std::optional<GksBound> gks_bound(const BlockColumnMatrix& matrix, const SensorDesign& design,
                                  Index densify_budget) {
  const Index k = design.n_selected();
  const Index big_k = matrix.n_blocks * k;
  if (big_k == 0) return std::nullopt;
  if (big_k > densify_budget || matrix.op.rows() > 4 * densify_budget ||
      matrix.op.cols() > 4 * densify_budget) {
    return std::nullopt;
  }
  const Matrix dense = densify(matrix.op);
  if (big_k > std::min(dense.rows(), dense.cols())) return std::nullopt;
  Eigen::BDCSVD<Matrix> svd(dense, Eigen::ComputeThinV);
  const Vector sigma = svd.singularValues().head(big_k);
  const Matrix v_k = svd.matrixV().leftCols(big_k);

  Matrix selected(big_k, big_k);
  Index at = 0;
  for (Index b = 0; b < matrix.n_blocks; ++b) {
    for (Index j = 0; j < k; ++j) {
      const Index row = b * matrix.cols_per_block + design.indices()[static_cast<std::size_t>(j)];
      selected.col(at++) = v_k.row(row).transpose();
    }
  }
  Eigen::JacobiSVD<Matrix> sel_svd(selected);
  const double smin = sel_svd.singularValues().tail(1)(0);

  GksBound bound;
  bound.singular_values = sigma;
  bound.upper = (sigma.array().square() + 1.0).log().sum();
  if (smin <= 1e-14 * sel_svd.singularValues()(0)) {
    bound.zeta = std::numeric_limits<double>::infinity();
    bound.lower = 0.0;
  } else {
    bound.zeta = 1.0 / smin;
    bound.lower = (sigma.array().square() / (bound.zeta * bound.zeta) + 1.0).log().sum();
  }
  return bound;
}

DesignSearchResult gks_select(const BlockColumnMatrix& matrix, Index k, const GksOptions& options) {
  const Index n_s = matrix.cols_per_block;
  require_dim(k >= 1 && k <= n_s, "gks_select: need 1 <= k <= n_sensors");

  const LinearOperator reshaped = reshape_block_columns(matrix);
  const Index rank = options.svd_rank > 0 ? options.svd_rank : k;
  TruncatedSVD svd = truncated_svd(reshaped, std::min(rank, std::min(reshaped.rows(), n_s)),
                                   options.svd_method, options.oversampling,
                                   options.power_iterations, options.seed);

  DesignSearchResult result;
  result.method = "gks";
  result.seed = options.seed;
  const double sigma_max = svd.singular_values(0);
  Index effective = svd.singular_values.size();
  while (effective > 1 && svd.singular_values(effective - 1) <= 1e-12 * sigma_max) --effective;
  if (effective < svd.singular_values.size()) {
    result.rank_deficient = true;
    result.warning = "reshaped matrix is numerically rank deficient; selecting on the leading " +
                     std::to_string(effective) + " singular vectors";
  }
  result.design = cpqr_design(svd.right_vectors.leftCols(effective), n_s, k);
  result.criterion = selected_criterion(matrix, result.design);
  if (options.compute_bound) {
    result.bound = gks_bound(matrix, result.design, options.bound_densify_budget);
  }
  return result;
}

Matrix sketch_criterion_matrix(const DAProblem& problem, Index sketch_rows, std::uint64_t seed) {
  const BlockColumnMatrix a = criterion_matrix(problem);
  const double scale = 1.0 / std::sqrt(static_cast<double>(sketch_rows));
  Matrix y(sketch_rows, a.op.cols());
  for (Index i = 0; i < sketch_rows; ++i) {
    Philox rng(seed, static_cast<std::uint64_t>(i));
    const Vector omega_row = scale * rng.gaussian_vector(a.op.rows());
    y.row(i) = a.op.apply_transpose(omega_row).transpose();
  }
  return y;
}

DesignSearchResult raf_select(const DAProblem& problem, Index k, const RafOptions& options) {
  const Index n_s = problem.dims.n_sensors;
  require_dim(k >= 1 && k <= n_s, "raf_select: need 1 <= k <= n_sensors");
  const Index sketch_rows =
      options.sketch_rows ? *options.sketch_rows : problem.dims.n_windows * k + options.oversampling;
  require_dim(sketch_rows >= k, "raf_select: sketch must have at least k rows");

  DesignSearchResult result;
  result.method = "raf";
  result.seed = options.seed;
  if (sketch_rows > problem.dims.trajectory_dim()) {
    result.warning = "sketch has more rows than the trajectory dimension; sketching is redundant";
  }

  problem.evolution.reset_transpose_counter();
  const Matrix y = sketch_criterion_matrix(problem, sketch_rows, options.seed);
  const Index n_blocks = problem.dims.n_blocks();
  Matrix y_reshaped(sketch_rows * n_blocks, n_s);
  for (Index b = 0; b < n_blocks; ++b) {
    y_reshaped.middleRows(b * sketch_rows, sketch_rows) = y.middleCols(b * n_s, n_s);
  }
  Eigen::BDCSVD<Matrix> svd(y_reshaped, Eigen::ComputeThinV);
  const Vector sigma = svd.singularValues();
  Index effective = std::min<Index>(k, sigma.size());
  while (effective > 1 && sigma(effective - 1) <= 1e-12 * sigma(0)) --effective;
  result.rank_deficient = effective < std::min<Index>(k, sigma.size());
  result.design = cpqr_design(svd.matrixV().leftCols(effective), n_s, k);

  result.sketch_transpose_applications = problem.evolution.transpose_applications();
  if (result.sketch_transpose_applications != 0) {
    throw ContractViolation("raf_select: the sketch applied a transposed window map");
  }

  const BlockColumnMatrix a = criterion_matrix(problem);
  result.criterion = selected_criterion(a, result.design);
  if (options.compute_bound) {
    result.bound = gks_bound(a, result.design, options.bound_densify_budget);
  }
  return result;
}

DesignSearchResult greedy_select(Index n_sensors, Index k, const DesignEvaluator& evaluate) {
  require_dim(k >= 0 && k <= n_sensors, "greedy_select: need 0 <= k <= n_sensors");
  DesignSearchResult result;
  result.method = "greedy";
  std::vector<Index> chosen;
  double current = 0.0;
  for (Index round = 0; round < k; ++round) {
    double best_value = -std::numeric_limits<double>::infinity();
    Index best_j = -1;
    for (Index j = 0; j < n_sensors; ++j) {
      if (std::find(chosen.begin(), chosen.end(), j) != chosen.end()) continue;
      std::vector<Index> trial = chosen;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), j), j);
      const double value = evaluate(SensorDesign(n_sensors, std::move(trial)));
      if (value > best_value) {  // strict: ties keep the smallest index
        best_value = value;
        best_j = j;
      }
    }
    chosen.insert(std::upper_bound(chosen.begin(), chosen.end(), best_j), best_j);
    result.greedy_gains.push_back(best_value - current);
    current = best_value;
  }
  result.design = SensorDesign(n_sensors, std::move(chosen));
  result.criterion = current;
  return result;
}

DesignSearchResult exhaustive_select(Index n_sensors, Index k, const DesignEvaluator& evaluate,
                                     std::uint64_t budget) {
  require_dim(k >= 1 && k <= n_sensors, "exhaustive_select: need 1 <= k <= n_sensors");
  const std::uint64_t count = binomial_capped(n_sensors, k, budget);
  if (count > budget) {
    throw BudgetError("exhaustive_select: " + std::to_string(n_sensors) + " choose " +
                      std::to_string(k) + " exceeds the budget of " + std::to_string(budget) +
                      " designs");
  }
  DesignSearchResult result;
  result.method = "exhaustive";
  std::vector<Index> combo(static_cast<std::size_t>(k));
  std::iota(combo.begin(), combo.end(), Index{0});
  double best = -std::numeric_limits<double>::infinity();
  std::vector<Index> best_combo;
  while (true) {
    const double value = evaluate(SensorDesign(n_sensors, combo));
    if (value > best) {  // lexicographic enumeration: first win is the smallest
      best = value;
      best_combo = combo;
    }
    // Next combination in lexicographic order.
    Index i = k - 1;
    while (i >= 0 && combo[static_cast<std::size_t>(i)] == n_sensors - k + i) --i;
    if (i < 0) break;
    ++combo[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < k; ++j) {
      combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  result.design = SensorDesign(n_sensors, std::move(best_combo));
  result.criterion = best;
  return result;
}

double RandomDesignSample::percentile(double v) const {
  if (values.empty()) return 0.0;
  const auto below = std::count_if(values.begin(), values.end(), [v](double x) { return x < v; });
  const double frac = 100.0 * static_cast<double>(below) / static_cast<double>(values.size());
  return std::round(frac * 10.0) / 10.0;
}

RandomDesignSample random_design_sample(Index n_sensors, Index k, Index count, std::uint64_t seed,
                                        const DesignEvaluator& evaluate) {
  require_dim(count >= 1, "random_design_sample: need at least one draw");
  require_dim(k >= 0 && k <= n_sensors, "random_design_sample: need 0 <= k <= n_sensors");
  RandomDesignSample sample;
  sample.seed = seed;
  sample.values.reserve(static_cast<std::size_t>(count));
  std::vector<Index> pool(static_cast<std::size_t>(n_sensors));
  for (Index i = 0; i < count; ++i) {
    Philox rng(seed, static_cast<std::uint64_t>(i));
    std::iota(pool.begin(), pool.end(), Index{0});
    // Partial Fisher-Yates: the first k entries are a uniform k-subset.
    for (Index j = 0; j < k; ++j) {
      const Index swap_at = j + static_cast<Index>(bounded_draw(rng, static_cast<std::uint64_t>(n_sensors - j)));
      std::swap(pool[static_cast<std::size_t>(j)], pool[static_cast<std::size_t>(swap_at)]);
    }
    std::vector<Index> indices(pool.begin(), pool.begin() + k);
    std::sort(indices.begin(), indices.end());
    sample.values.push_back(evaluate(SensorDesign(n_sensors, std::move(indices))));
  }
  return sample;
}

}  // namespace wc4dvar
