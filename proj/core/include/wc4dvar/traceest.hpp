/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <vector>

#include "wc4dvar/linop.hpp"
#include "wc4dvar/rng.hpp"

namespace wc4dvar {

enum class ScalarFunction {
  log,      // requires a (numerically) positive definite operator
  log_abs,  // log|x| for nonsingular symmetric indefinite operators
};

enum class LanczosStop {
  converged,         // quadrature change below tolerance
  exact_breakdown,   // invariant subspace found; result exact
  max_iterations,
};

/// One Lanczos run with full reorthogonalization against a symmetric operator.
struct LanczosRun {
  Matrix basis;                // d x n_iter, orthonormal columns
  Vector alpha;                // tridiagonal diagonal
  Vector beta;                 // subdiagonal (beta[j] couples j and j+1), size n_iter-1
  double residual_beta = 0.0;  // beta_{n_iter+1}
  Index iterations = 0;
  LanczosStop stop = LanczosStop::max_iterations;
  double quadrature = 0.0;     // e_1^T f(T) e_1
};

/// Approximate f(op) z by Lanczos: returns ||z|| * V f(T) e_1 together with
/// the run diagnostics. Iterations stop when the relative change of the
/// Gauss-quadrature value e_1^T f(T) e_1 drops below rel_tol.
std::pair<Vector, LanczosRun> lanczos_apply_f(const LinearOperator& op, const Vector& z,
                                              ScalarFunction f, double rel_tol = 1e-10,
                                              Index max_iterations = 2000);

/// Quadrature-only variant (does not form the output vector).
LanczosRun lanczos_quadrature(const LinearOperator& op, const Vector& z, ScalarFunction f,
                              double rel_tol = 1e-10, Index max_iterations = 2000);

struct TraceEstimate {
  double value = 0.0;
  Index n_samples = 0;
  std::vector<double> per_sample;
  double mean_lanczos_iterations = 0.0;
  double sample_std_dev = 0.0;
  std::uint64_t seed = 0;
};

/// Stochastic Lanczos quadrature for tr f(op): Rademacher probes, one Lanczos
/// run per probe, d * e_1^T f(T) e_1 averaged over probes. Sample l draws its
/// own counter substream, so the estimate does not depend on evaluation order.
TraceEstimate slq_trace(const LinearOperator& op, ScalarFunction f, Index n_samples,
                        std::uint64_t seed, double rel_tol = 1e-10, Index max_iterations = 2000);

/// Leave-one-out Nyström trace estimator for tr log(op) with op symmetric
/// positive definite of the form I + A A^T (so log(op) is PSD). Gaussian test
/// matrix, log(op) columns computed via Lanczos.
TraceEstimate xnystrace_logdet(const LinearOperator& op, Index n_test_vectors, std::uint64_t seed,
                               double rel_tol = 1e-10, Index max_iterations = 2000);

/// Eigenvalue-thresholded pseudo-inverse of a symmetric matrix
/// (|lambda| <= threshold_scale * max|lambda| treated as zero).
Matrix symmetric_pinv(const Matrix& m, double threshold_scale = 1e-12);

/// Dense Nyström approximation Psi<X> = (Psi X)(X^T Psi X)^dagger (Psi X)^T
/// from the test matrix and the sketch Psi X.
Matrix nystrom_approximation(const Matrix& test, const Matrix& psi_test,
                             double threshold_scale = 1e-12);

}  // namespace wc4dvar
