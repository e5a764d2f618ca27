/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/traceest.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>

namespace wc4dvar {

namespace {

Vector apply_f_to_ritz(const Vector& ritz, ScalarFunction f) {
  const double max_abs = ritz.cwiseAbs().maxCoeff();
  Vector out(ritz.size());
  for (Index i = 0; i < ritz.size(); ++i) {
    const double theta = ritz[i];
    if (f == ScalarFunction::log) {
      if (!(theta > 0.0)) {
        throw SingularityError("lanczos: nonpositive Ritz value under f = log, operator is not SPD");
      }
      out[i] = std::log(theta);
    } else {
      if (std::abs(theta) <= 1e-14 * max_abs) {
        throw SingularityError("lanczos: numerically singular operator under f = log|.|");
      }
      out[i] = std::log(std::abs(theta));
    }
  }
  return out;
}

struct TridiagEig {
  Vector values;
  Matrix vectors;
};

TridiagEig tridiag_eig(const Vector& alpha, const Vector& beta, Index m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(alpha.head(m), beta.head(m > 0 ? m - 1 : 0));
  if (es.info() != Eigen::Success) {
    throw SingularityError("lanczos: tridiagonal eigendecomposition failed");
  }
  return {es.eigenvalues(), es.eigenvectors()};
}

double quadrature_value(const Vector& alpha, const Vector& beta, Index m, ScalarFunction f) {
  const TridiagEig eig = tridiag_eig(alpha, beta, m);
  const Vector fvals = apply_f_to_ritz(eig.values, f);
  double q = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double w = eig.vectors(0, i);
    q += w * w * fvals[i];
  }
  return q;
}

/// Quadrature checkpoints are every iteration early on, then sparser; the
/// tridiagonal eigensolve would otherwise dominate long indefinite runs.
Index next_checkpoint(Index j) {
  if (j < 32) return j + 1;
  return j + std::max<Index>(1, j / 32);
}

LanczosRun run_lanczos(const LinearOperator& op, const Vector& z, ScalarFunction f, double rel_tol,
                       Index max_iterations, bool keep_basis) {
  require_dim(op.rows() == op.cols(), "lanczos: operator must be square");
  require_dim(z.size() == op.rows(), "lanczos: probe size mismatch");
  const double z_norm = z.norm();
  if (!(z_norm > 0.0)) throw DimensionError("lanczos: probe vector must be nonzero");

  const Index d = op.rows();
  const Index cap = std::min(d, std::max<Index>(1, max_iterations));

  LanczosRun run;
  run.alpha.resize(cap);
  run.beta.resize(cap > 0 ? cap - 1 : 0);
  Matrix basis(d, cap);

  Vector v = z / z_norm;
  Vector v_prev = Vector::Zero(d);
  double beta_prev = 0.0;
  double last_quadrature = 0.0;
  bool have_last = false;
  Index checkpoint = 1;

  Index m = 0;
  for (Index j = 0; j < cap; ++j) {
    basis.col(j) = v;
    Vector w = op.apply(v);
    run.alpha[j] = v.dot(w);
    w -= run.alpha[j] * v;
    if (j > 0) w -= beta_prev * v_prev;
    // Full reorthogonalization, two passes.
    for (int pass = 0; pass < 2; ++pass) {
      w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
    }
    const double beta = w.norm();
    m = j + 1;

    const double scale = std::max(run.alpha.head(m).cwiseAbs().maxCoeff(), 1.0);
    const bool breakdown = beta <= 1e-14 * scale;
    const bool last = breakdown || m == cap;
    if (m == checkpoint || last) {
      const double q = quadrature_value(run.alpha, run.beta, m, f);
      if (have_last && std::abs(q - last_quadrature) <= rel_tol * std::abs(q)) {
        run.quadrature = q;
        run.stop = LanczosStop::converged;
        run.iterations = m;
        run.residual_beta = beta;
        break;
      }
      last_quadrature = q;
      have_last = true;
      checkpoint = next_checkpoint(m);
      if (last) {
        run.quadrature = q;
        run.stop = breakdown ? LanczosStop::exact_breakdown
                             : (m == d ? LanczosStop::exact_breakdown : LanczosStop::max_iterations);
        run.iterations = m;
        run.residual_beta = beta;
        break;
      }
    }
    run.beta[j] = beta;
    beta_prev = beta;
    v_prev = basis.col(j);
    v = w / beta;
  }

  if (keep_basis) run.basis = basis.leftCols(run.iterations);
  return run;
}

}  // namespace

LanczosRun lanczos_quadrature(const LinearOperator& op, const Vector& z, ScalarFunction f,
                              double rel_tol, Index max_iterations) {
  return run_lanczos(op, z, f, rel_tol, max_iterations, /*keep_basis=*/false);
}

std::pair<Vector, LanczosRun> lanczos_apply_f(const LinearOperator& op, const Vector& z,
                                              ScalarFunction f, double rel_tol,
                                              Index max_iterations) {
  LanczosRun run = run_lanczos(op, z, f, rel_tol, max_iterations, /*keep_basis=*/true);
  const Index m = run.iterations;
  const TridiagEig eig = tridiag_eig(run.alpha, run.beta, m);
  const Vector fvals = apply_f_to_ritz(eig.values, f);
  // ||z|| V U f(Lambda) U^T e_1
  const Vector weights = eig.vectors.row(0).transpose();
  const Vector coeffs = eig.vectors * fvals.cwiseProduct(weights);
  Vector y = z.norm() * (run.basis * coeffs);
  return {std::move(y), std::move(run)};
}

namespace {

void finalize_estimate(TraceEstimate& est) {
  est.n_samples = static_cast<Index>(est.per_sample.size());
  if (est.n_samples == 0) return;
  const double mean =
      std::accumulate(est.per_sample.begin(), est.per_sample.end(), 0.0) / est.n_samples;
  est.value = mean;
  if (est.n_samples >= 2) {
    double ss = 0.0;
    for (double s : est.per_sample) ss += (s - mean) * (s - mean);
    est.sample_std_dev = std::sqrt(ss / static_cast<double>(est.n_samples - 1));
  }
}

}  // namespace

TraceEstimate slq_trace(const LinearOperator& op, ScalarFunction f, Index n_samples,
                        std::uint64_t seed, double rel_tol, Index max_iterations) {
  require_dim(n_samples >= 1, "slq_trace: need at least one sample");
  const Index d = op.rows();
  TraceEstimate est;
  est.seed = seed;
  est.per_sample.reserve(static_cast<std::size_t>(n_samples));
  double iter_sum = 0.0;
  for (Index l = 0; l < n_samples; ++l) {
    Philox rng(seed, static_cast<std::uint64_t>(l));
    const Vector z = rng.rademacher_vector(d);
    LanczosRun run;
    try {
      run = lanczos_quadrature(op, z, f, rel_tol, max_iterations);
    } catch (const SingularityError& e) {
      throw SingularityError("slq_trace: sample " + std::to_string(l) + ": " + e.what());
    }
    est.per_sample.push_back(static_cast<double>(d) * run.quadrature);
    iter_sum += static_cast<double>(run.iterations);
  }
  est.mean_lanczos_iterations = iter_sum / static_cast<double>(n_samples);
  finalize_estimate(est);
  return est;
}

Matrix symmetric_pinv(const Matrix& m, double threshold_scale) {
  require_dim(m.rows() == m.cols(), "symmetric_pinv: matrix must be square");
  if (m.rows() == 0) return m;
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  const Vector vals = es.eigenvalues();
  const double max_abs = vals.cwiseAbs().maxCoeff();
  Vector inv = Vector::Zero(vals.size());
  if (max_abs > 0.0) {
    for (Index i = 0; i < vals.size(); ++i) {
      if (std::abs(vals[i]) > threshold_scale * max_abs) inv[i] = 1.0 / vals[i];
    }
  }
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

Matrix nystrom_approximation(const Matrix& test, const Matrix& psi_test, double threshold_scale) {
  require_dim(test.rows() == psi_test.rows() && test.cols() == psi_test.cols(),
              "nystrom_approximation: shape mismatch");
  const Matrix core = test.transpose() * psi_test;
  return psi_test * symmetric_pinv(core, threshold_scale) * psi_test.transpose();
}

TraceEstimate xnystrace_logdet(const LinearOperator& op, Index n_test_vectors, std::uint64_t seed,
                               double rel_tol, Index max_iterations) {
  const Index d = op.rows();
  require_dim(n_test_vectors >= 2, "xnystrace_logdet: need at least two test vectors");
  require_dim(n_test_vectors <= d, "xnystrace_logdet: more test vectors than the dimension");
  const Index n = n_test_vectors;

  Matrix omega(d, n);
  Matrix sketch(d, n);  // log(op) * omega, column by column via Lanczos
  double iter_sum = 0.0;
  for (Index j = 0; j < n; ++j) {
    Philox rng(seed, static_cast<std::uint64_t>(j));
    omega.col(j) = rng.gaussian_vector(d);
    auto [y, run] = lanczos_apply_f(op, omega.col(j), ScalarFunction::log, rel_tol, max_iterations);
    sketch.col(j) = y;
    iter_sum += static_cast<double>(run.iterations);
  }

  // All leave-one-out quantities reduce to submatrices of these Grams.
  Matrix w = omega.transpose() * sketch;  // ~ Omega^T Psi Omega
  w = 0.5 * (w + w.transpose());
  const Matrix yy = sketch.transpose() * sketch;
  const Matrix gram = omega.transpose() * omega;

  TraceEstimate est;
  est.seed = seed;
  est.mean_lanczos_iterations = iter_sum / static_cast<double>(n);
  est.per_sample.reserve(static_cast<std::size_t>(n));

  std::vector<Index> keep(static_cast<std::size_t>(n - 1));
  for (Index j = 0; j < n; ++j) {
    Index at = 0;
    for (Index i = 0; i < n; ++i) {
      if (i != j) keep[static_cast<std::size_t>(at++)] = i;
    }
    Matrix w_sub(n - 1, n - 1), yy_sub(n - 1, n - 1), g_sub(n - 1, n - 1);
    Vector w_col(n - 1), g_col(n - 1);
    for (Index a = 0; a < n - 1; ++a) {
      for (Index b = 0; b < n - 1; ++b) {
        w_sub(a, b) = w(keep[a], keep[b]);
        yy_sub(a, b) = yy(keep[a], keep[b]);
        g_sub(a, b) = gram(keep[a], keep[b]);
      }
      w_col[a] = w(keep[a], j);
      g_col[a] = gram(keep[a], j);
    }
    // tr(Psi<Omega_{-j}>) = tr((Omega^T Psi Omega)^dagger (Psi Omega)^T (Psi Omega)) on the subset.
    const Matrix pinv = symmetric_pinv(w_sub);
    const double tr_term = pinv.cwiseProduct(yy_sub).sum();
    // nu_j = omega_j minus its projection onto range(Omega_{-j}).
    const Vector c = g_sub.ldlt().solve(g_col);
    const double nu_term = w(j, j) - 2.0 * w_col.dot(c) + c.dot(w_sub * c);
    est.per_sample.push_back(tr_term + nu_term);
  }
  finalize_estimate(est);
  return est;
}

}  // namespace wc4dvar
