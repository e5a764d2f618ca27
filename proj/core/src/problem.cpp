/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/problem.hpp"

namespace wc4dvar {

void DAProblem::validate() const {
  dims.validate();
  require_dim(evolution.state_dim() == dims.state_dim, "DAProblem: evolution state_dim mismatch");
  require_dim(evolution.n_windows() == dims.n_windows, "DAProblem: evolution window count mismatch");
  require_dim(observation.state_dim() == dims.state_dim, "DAProblem: observation state_dim mismatch");
  require_dim(observation.sensors_per_step() == dims.n_sensors,
              "DAProblem: observation sensor count mismatch");
  require_dim(observation.n_blocks() == dims.n_blocks(), "DAProblem: observation block count mismatch");
  require_dim(background && background->dim() == dims.state_dim,
              "DAProblem: background covariance dimension mismatch");
  require_dim(background_mean.size() == dims.state_dim, "DAProblem: background mean size mismatch");
  require_dim(static_cast<Index>(model_error.size()) == dims.n_windows,
              "DAProblem: need one model-error covariance per window");
  for (const auto& q : model_error) {
    require_dim(q && q->dim() == dims.state_dim, "DAProblem: model-error covariance dimension mismatch");
  }
  require_dim(static_cast<Index>(noise_variance.size()) == dims.n_blocks(),
              "DAProblem: need one noise variance per observation block");
  for (double v : noise_variance) {
    if (!(v > 0.0)) throw SingularityError("DAProblem: noise variances must be positive");
  }
}

CovariancePtr DAProblem::model_covariance() const {
  std::vector<CovariancePtr> blocks;
  blocks.reserve(model_error.size() + 1);
  blocks.push_back(background);
  for (const auto& q : model_error) blocks.push_back(q);
  return std::make_shared<BlockDiagCovariance>(std::move(blocks));
}

Vector DAProblem::model_mean() const {
  Vector mu = Vector::Zero(dims.trajectory_dim());
  mu.head(dims.state_dim) = background_mean;
  return mu;
}

CovariancePtr DAProblem::noise_covariance(const SensorDesign& design) const {
  require_dim(design.n_sensors() == dims.n_sensors, "DAProblem: design sensor count mismatch");
  require_dim(design.n_selected() >= 1, "DAProblem: noise covariance needs a non-empty design");
  std::vector<CovariancePtr> blocks;
  blocks.reserve(noise_variance.size());
  for (double v : noise_variance) {
    blocks.push_back(std::make_shared<ScaledIdentityCovariance>(design.n_selected(), v));
  }
  return std::make_shared<BlockDiagCovariance>(std::move(blocks));
}

CovariancePtr DAProblem::noise_covariance() const {
  return noise_covariance(SensorDesign::full(dims.n_sensors));
}

CouplingOperator DAProblem::coupling(CouplingDirection direction) const {
  return CouplingOperator(evolution, direction);
}

ForecastPrior forecast_prior(const DAProblem& problem) {
  const CouplingOperator forward = problem.coupling(CouplingDirection::forward);
  const CouplingOperator inverse = problem.coupling(CouplingDirection::inverse);
  const CovariancePtr gamma_mod = problem.model_covariance();
  const LinearOperator l = forward.linop();
  const LinearOperator l_inv = inverse.linop();

  ForecastPrior prior;
  prior.mean = inverse.apply(problem.model_mean());
  prior.covariance = compose(l_inv, compose(covariance_apply_op(gamma_mod), l_inv.transposed()));
  prior.precision = compose(l.transposed(), compose(covariance_inverse_op(gamma_mod), l));
  prior.factor = compose(l_inv, covariance_factor_op(gamma_mod));
  return prior;
}

}  // namespace wc4dvar
