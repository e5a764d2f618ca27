/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <vector>

#include "wc4dvar/assimilation.hpp"
#include "wc4dvar/models.hpp"
#include "wc4dvar/problem.hpp"
#include "wc4dvar/rng.hpp"

namespace wc4dvar::testing {

/// Relative adjoint defect |<Ax, y> - <x, A^T y>| / (|Ax||y| + |x||A^T y|).
inline double adjoint_defect(const LinearOperator& op, std::uint64_t seed = 7) {
  Philox rng(seed, 0);
  const Vector x = rng.gaussian_vector(op.cols());
  const Vector y = rng.gaussian_vector(op.rows());
  const Vector ax = op.apply(x);
  const Vector aty = op.apply_transpose(y);
  const double lhs = ax.dot(y);
  const double rhs = x.dot(aty);
  const double scale = ax.norm() * y.norm() + x.norm() * aty.norm();
  return scale > 0.0 ? std::abs(lhs - rhs) / scale : std::abs(lhs - rhs);
}

/// Dense oracle for the forward coupling map: unit diagonal, -M_{l-1->l}
/// subdiagonal blocks, assembled from densified steps.
inline Matrix dense_coupling_forward(const EvolutionFamily& family) {
  const Index d = family.state_dim();
  const Index n = family.n_windows() + 1;
  Matrix l = Matrix::Identity(n * d, n * d);
  for (Index b = 1; b < n; ++b) {
    l.block(b * d, (b - 1) * d, d, d) = -densify(family.step(b - 1));
  }
  return l;
}

inline Matrix random_orthogonal(Index n, Philox& rng) {
  Matrix g(n, n);
  for (Index j = 0; j < n; ++j) g.col(j) = rng.gaussian_vector(n);
  Eigen::HouseholderQR<Matrix> qr(g);
  return qr.householderQ() * Matrix::Identity(n, n);
}

/// Random SPD matrix with eigenvalues in [lo, hi].
inline Matrix random_spd(Index n, Philox& rng, double lo = 0.5, double hi = 2.0) {
  const Matrix q = random_orthogonal(n, rng);
  Vector vals(n);
  for (Index i = 0; i < n; ++i) vals[i] = lo + (hi - lo) * rng.uniform01();
  return q * vals.asDiagonal() * q.transpose();
}

/// Well-conditioned random assimilation instance: contractive random window
/// maps, dense random observation rows, SPD covariances with moderate
/// spectra. q_scale shrinks the model-error covariances toward zero.
inline DAProblem random_problem(Index d, Index n_windows, Index n_sensors, std::uint64_t seed,
                                double q_scale = 1.0) {
  Philox rng(seed, 0);
  std::vector<LinearOperator> steps;
  for (Index l = 0; l < n_windows; ++l) {
    Matrix m(d, d);
    for (Index j = 0; j < d; ++j) m.col(j) = rng.gaussian_vector(d);
    Eigen::JacobiSVD<Matrix> svd(m);
    m *= 0.9 / svd.singularValues()(0);
    steps.push_back(LinearOperator::from_dense(m));
  }
  EvolutionFamily evolution(d, std::move(steps));

  Matrix obs(n_sensors, d);
  for (Index j = 0; j < d; ++j) obs.col(j) = rng.gaussian_vector(n_sensors);
  obs /= std::sqrt(static_cast<double>(d));
  ObservationOperator observation(LinearOperator::from_dense(obs), n_windows + 1);

  auto background = std::make_shared<DenseSPDCovariance>(random_spd(d, rng));
  std::vector<CovariancePtr> model_error;
  for (Index l = 0; l < n_windows; ++l) {
    model_error.push_back(
        std::make_shared<DenseSPDCovariance>(Matrix(q_scale * random_spd(d, rng))));
  }
  std::vector<double> noise_variance(static_cast<std::size_t>(n_windows + 1));
  for (auto& v : noise_variance) v = 0.5 + 1.5 * rng.uniform01();

  DAProblem problem{ProblemDims{d, n_windows, n_sensors},
                    std::move(evolution),
                    std::move(observation),
                    std::move(background),
                    rng.gaussian_vector(d),
                    std::move(model_error),
                    std::move(noise_variance)};
  problem.validate();
  return problem;
}

/// Dense posterior oracle: assemble the precision and right-hand side of the
/// normal equations and solve directly.
struct DensePosterior {
  Matrix precision;
  Vector mean;
};

inline DensePosterior dense_posterior(const DAProblem& problem, const Vector& data) {
  const Matrix obs = densify(problem.observation.block());
  const Matrix r_inv = densify(covariance_inverse_op(problem.noise_covariance()));
  const Matrix l = dense_coupling_forward(problem.evolution);
  const Matrix gamma_mod_inv = densify(covariance_inverse_op(problem.model_covariance()));
  DensePosterior out;
  out.precision = obs.transpose() * r_inv * obs + l.transpose() * gamma_mod_inv * l;
  Vector mu_mod = Vector::Zero(problem.dims.trajectory_dim());
  mu_mod.head(problem.dims.state_dim) = problem.background_mean;
  const Vector rhs = obs.transpose() * r_inv * data + l.transpose() * gamma_mod_inv * mu_mod;
  out.mean = out.precision.ldlt().solve(rhs);
  return out;
}

inline double dense_logdet_spd(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return es.eigenvalues().array().log().sum();
}

/// Small scalar-state instance for hand-checked cases.
inline DAProblem scalar_problem(const std::vector<double>& step_factors, double background_var,
                                const std::vector<double>& q_vars,
                                const std::vector<double>& r_vars, double background_mean,
                                double obs_coeff = 1.0) {
  const Index n_windows = static_cast<Index>(step_factors.size());
  std::vector<LinearOperator> steps;
  for (double f : step_factors) steps.push_back(LinearOperator::scaled_identity(1, f));
  EvolutionFamily evolution(1, std::move(steps));
  Matrix obs(1, 1);
  obs(0, 0) = obs_coeff;
  ObservationOperator observation(LinearOperator::from_dense(obs), n_windows + 1);
  auto background = std::make_shared<ScaledIdentityCovariance>(1, background_var);
  std::vector<CovariancePtr> model_error;
  for (double q : q_vars) model_error.push_back(std::make_shared<ScaledIdentityCovariance>(1, q));
  Vector mean(1);
  mean[0] = background_mean;
  DAProblem problem{ProblemDims{1, n_windows, 1}, std::move(evolution),   std::move(observation),
                    std::move(background),        mean,                   std::move(model_error),
                    r_vars};
  problem.validate();
  return problem;
}

}  // namespace wc4dvar::testing
