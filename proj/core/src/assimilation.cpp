/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/assimilation.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace wc4dvar {

double wc_cost(const DAProblem& problem, const Vector& trajectory, const Vector& data) {
  const Index d = problem.dims.state_dim;
  const Index n_T = problem.dims.n_windows;
  require_dim(trajectory.size() == problem.dims.trajectory_dim(), "wc_cost: trajectory size mismatch");
  require_dim(data.size() == problem.dims.measurement_dim(), "wc_cost: data size mismatch");

  const Vector b_res = trajectory.head(d) - problem.background_mean;
  double cost = 0.5 * b_res.dot(problem.background->apply_inverse(b_res));

  const Index n_s = problem.dims.n_sensors;
  for (Index l = 0; l <= n_T; ++l) {
    const Vector r = problem.observation.per_step().apply(trajectory.segment(l * d, d)) -
                     data.segment(l * n_s, n_s);
    cost += 0.5 * r.squaredNorm() / problem.noise_variance[static_cast<std::size_t>(l)];
  }
  for (Index l = 1; l <= n_T; ++l) {
    const Vector eta = trajectory.segment(l * d, d) -
                       problem.evolution.step(l - 1).apply(trajectory.segment((l - 1) * d, d));
    cost += 0.5 * eta.dot(problem.model_error[static_cast<std::size_t>(l - 1)]->apply_inverse(eta));
  }
  return cost;
}

namespace {

/// Precision (inverse posterior covariance) action:
/// O^T R^{-1} O + L^T Gamma_mod^{-1} L.
LinearOperator precision_operator(const DAProblem& problem) {
  const LinearOperator obs = problem.observation.block();
  const CovariancePtr noise = problem.noise_covariance();
  const LinearOperator l = problem.coupling(CouplingDirection::forward).linop();
  const CovariancePtr gamma_mod = problem.model_covariance();
  const LinearOperator data_term =
      compose(obs.transposed(), compose(covariance_inverse_op(noise), obs));
  const LinearOperator prior_term =
      compose(l.transposed(), compose(covariance_inverse_op(gamma_mod), l));
  return operator_sum(data_term, prior_term);
}

}  // namespace

Vector map_rhs(const DAProblem& problem, const Vector& data, bool via_prior_mean) {
  const LinearOperator obs = problem.observation.block();
  const CovariancePtr noise = problem.noise_covariance();
  Vector rhs = obs.apply_transpose(noise->apply_inverse(data));
  if (via_prior_mean) {
    // L^T Gamma_mod^{-1} L applied to the forecast-prior mean L^{-1} mu_mod.
    const CouplingOperator inverse = problem.coupling(CouplingDirection::inverse);
    const CouplingOperator forward = problem.coupling(CouplingDirection::forward);
    const CovariancePtr gamma_mod = problem.model_covariance();
    const Vector prior_mean = inverse.apply(problem.model_mean());
    rhs += forward.apply_transpose(gamma_mod->apply_inverse(forward.apply(prior_mean)));
  } else {
    // Same vector without touching the recursion: L^T Gamma_mod^{-1} mu_mod,
    // whose only nonzero block is the background term.
    Vector prior_part = Vector::Zero(problem.dims.trajectory_dim());
    prior_part.head(problem.dims.state_dim) =
        problem.background->apply_inverse(problem.background_mean);
    rhs += problem.coupling(CouplingDirection::forward).apply_transpose(prior_part);
  }
  return rhs;
}

PosteriorResult map_solve(const DAProblem& problem, const Vector& data,
                          Preconditioning preconditioning, double tol, Index max_iterations) {
  require_dim(tol > 0.0, "map_solve: tolerance must be positive");
  require_dim(data.size() == problem.dims.measurement_dim(), "map_solve: data size mismatch");
  const Index n = problem.dims.trajectory_dim();
  if (max_iterations <= 0) max_iterations = 10 * n;

  const LinearOperator hessian = precision_operator(problem);
  const ForecastPrior prior = forecast_prior(problem);
  const bool use_prior = preconditioning == Preconditioning::forecast_prior;
  auto precondition = [&](const Vector& r) {
    return use_prior ? prior.covariance.apply(r) : r;
  };

  const Vector rhs = map_rhs(problem, data);

  PosteriorResult result;
  Vector u = prior.mean;  // warm start at the forecast-prior mean
  Vector r = rhs - hessian.apply(u);
  Vector z = precondition(r);
  double rho = r.dot(z);
  if (rho < 0.0) throw SingularityError("map_solve: preconditioner is not positive definite");
  const double rho0 = std::sqrt(rho);
  result.initial_residual_norm = rho0;
  if (rho0 == 0.0) {
    result.map_estimate = u;
    result.converged = true;
    return result;
  }
  Vector p = z;
  for (Index it = 1; it <= max_iterations; ++it) {
    const Vector q = hessian.apply(p);
    const double pq = p.dot(q);
    if (!(pq > 0.0)) throw SingularityError("map_solve: system is not positive definite");
    const double alpha = rho / pq;
    u += alpha * p;
    r -= alpha * q;
    z = precondition(r);
    const double rho_next = r.dot(z);
    if (rho_next < 0.0) throw SingularityError("map_solve: preconditioner lost positive definiteness");
    const double rel = std::sqrt(rho_next) / rho0;
    result.residual_history.push_back(rel);
    result.iterations = it;
    if (rel <= tol) {
      result.converged = true;
      break;
    }
    p = z + (rho_next / rho) * p;
    rho = rho_next;
  }
  result.map_estimate = u;
  result.final_relative_residual =
      result.residual_history.empty() ? 0.0 : result.residual_history.back();
  return result;
}

ScPosterior sc_posterior(const DAProblem& problem, const Vector& data, const SensorDesign& design) {
  const Index d = problem.dims.state_dim;
  const Index n_T = problem.dims.n_windows;
  const Index k = design.n_selected();
  require_dim(design.n_sensors() == problem.dims.n_sensors, "sc_posterior: design sensor mismatch");
  require_dim(data.size() == (n_T + 1) * k, "sc_posterior: data size mismatch");

  // Dense normal-equations accumulation over the initial state (desk scale).
  Matrix precision = densify(covariance_inverse_op(problem.background));
  Vector rhs = problem.background->apply_inverse(problem.background_mean);

  const LinearOperator select = k > 0 ? embed_selection(design, 1) : LinearOperator();
  Matrix propagated = Matrix::Identity(d, d);
  for (Index l = 0; l <= n_T; ++l) {
    if (l > 0) {
      for (Index j = 0; j < d; ++j) propagated.col(j) = problem.evolution.step(l - 1).apply(propagated.col(j));
    }
    if (k == 0) continue;
    Matrix obs_rows(k, d);
    for (Index j = 0; j < d; ++j) {
      obs_rows.col(j) = select.apply_transpose(problem.observation.per_step().apply(propagated.col(j)));
    }
    const double inv_var = 1.0 / problem.noise_variance[static_cast<std::size_t>(l)];
    precision += inv_var * obs_rows.transpose() * obs_rows;
    rhs += inv_var * obs_rows.transpose() * data.segment(l * k, k);
  }

  ScPosterior out;
  out.mean = precision.llt().solve(rhs);
  out.precision = LinearOperator::from_dense(std::move(precision));
  return out;
}

ScPosterior sc_posterior(const DAProblem& problem, const Vector& data) {
  return sc_posterior(problem, data, SensorDesign::full(problem.dims.n_sensors));
}

Vector simulate_observations(const EvolutionFamily& reference, const Vector& truth_initial,
                             const ObservationOperator& observation,
                             const std::vector<double>& noise_std, std::uint64_t seed) {
  const Index n_blocks = observation.n_blocks();
  const Index n_s = observation.sensors_per_step();
  require_dim(static_cast<Index>(noise_std.size()) == n_blocks,
              "simulate_observations: need one noise std per block");
  require_dim(truth_initial.size() == reference.state_dim(),
              "simulate_observations: truth size mismatch");
  Vector data(n_blocks * n_s);
  Vector state = truth_initial;
  Philox rng(seed, 0);
  for (Index l = 0; l < n_blocks; ++l) {
    if (l > 0) state = reference.step(l - 1).apply(state);
    Vector block = observation.per_step().apply(state);
    const double sigma = noise_std[static_cast<std::size_t>(l)];
    if (sigma != 0.0) {
      for (Index i = 0; i < n_s; ++i) block[i] += sigma * rng.gaussian();
    }
    data.segment(l * n_s, n_s) = block;
  }
  return data;
}

}  // namespace wc4dvar
