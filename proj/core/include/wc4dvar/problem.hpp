/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <vector>

#include "wc4dvar/covariance.hpp"
#include "wc4dvar/operators.hpp"

namespace wc4dvar {

/// One linear-Gaussian assimilation instance: dynamics, observations and the
/// three covariance models. Immutable once built; independent solves and
/// criterion evaluations may share it freely.
struct DAProblem {
  ProblemDims dims;
  EvolutionFamily evolution;        // assimilation model
  ObservationOperator observation;  // all candidate sensors per step
  CovariancePtr background;         // initial-state covariance
  Vector background_mean;
  std::vector<CovariancePtr> model_error;  // Q_1 .. Q_{n_windows}
  std::vector<double> noise_variance;      // per-block sigma_l^2 (R_l = sigma_l^2 I)

  void validate() const;

  /// blkdiag(background, Q_1, ..., Q_{n_windows}).
  CovariancePtr model_covariance() const;
  /// (background_mean; 0; ...; 0).
  Vector model_mean() const;
  /// blkdiag(R_0, ..., R_{n_windows}) restricted to a design (k >= 1).
  CovariancePtr noise_covariance(const SensorDesign& design) const;
  CovariancePtr noise_covariance() const;

  CouplingOperator coupling(CouplingDirection direction) const;
};

/// Gaussian law of the stacked trajectory under the error-augmented dynamics:
/// mean L^{-1} mu_mod, covariance L^{-1} Gamma_mod L^{-T}.
struct ForecastPrior {
  Vector mean;
  LinearOperator covariance;
  LinearOperator precision;  // L^T Gamma_mod^{-1} L
  LinearOperator factor;     // L^{-1} G_mod
};

ForecastPrior forecast_prior(const DAProblem& problem);

}  // namespace wc4dvar
