/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <vector>

#include "wc4dvar/problem.hpp"
#include "wc4dvar/rng.hpp"

namespace wc4dvar {

/// Quadratic data-assimilation objective over the stacked trajectory:
/// background misfit + data misfits over every block + model-error misfits.
double wc_cost(const DAProblem& problem, const Vector& trajectory, const Vector& data);

enum class Preconditioning {
  none,
  forecast_prior,  // apply the forecast-prior covariance as the preconditioner
};

struct PosteriorResult {
  Vector map_estimate;
  Index iterations = 0;
  std::vector<double> residual_history;  // relative preconditioned residual per iteration
  bool converged = false;
  double final_relative_residual = 0.0;
  double initial_residual_norm = 0.0;  // preconditioned residual norm at the warm start
};

/// MAP estimate of the trajectory posterior by (preconditioned) conjugate
/// gradients on the precision system. Non-convergence is reported through
/// the result, not thrown; the best iterate is returned.
PosteriorResult map_solve(const DAProblem& problem, const Vector& data,
                          Preconditioning preconditioning, double tol = 1e-8,
                          Index max_iterations = 0 /* 0: 10 * trajectory_dim */);

/// Right-hand side of the precision system in its two algebraically equal
/// forms (recursion-free default, and the forecast-prior-mean form).
Vector map_rhs(const DAProblem& problem, const Vector& data, bool via_prior_mean = false);

struct ScPosterior {
  Vector mean;
  LinearOperator precision;  // over the initial state
};

/// Initial-condition posterior when the dynamics are imposed exactly
/// (zero model error), restricted to a sensor design. `data` holds the
/// selected measurements, stacked per block.
ScPosterior sc_posterior(const DAProblem& problem, const Vector& data, const SensorDesign& design);
ScPosterior sc_posterior(const DAProblem& problem, const Vector& data);

/// Synthetic measurements: evolve the truth under the reference dynamics,
/// observe every block, add independent Gaussian noise with the given
/// per-block standard deviation.
Vector simulate_observations(const EvolutionFamily& reference, const Vector& truth_initial,
                             const ObservationOperator& observation,
                             const std::vector<double>& noise_std, std::uint64_t seed);

}  // namespace wc4dvar
