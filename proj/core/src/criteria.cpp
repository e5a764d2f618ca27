/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/criteria.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <utility>

namespace wc4dvar {

const char* to_string(Formulation f) {
  switch (f) {
    case Formulation::preconditioned: return "preconditioned";
    case Formulation::unpreconditioned: return "unpreconditioned";
    case Formulation::saddle_point_one: return "saddle_point_one";
    case Formulation::saddle_point_two: return "saddle_point_two";
    case Formulation::strong_constraint: return "strong_constraint";
  }
  return "unknown";
}

const char* to_string(EvaluationMethod m) {
  switch (m) {
    case EvaluationMethod::exact_dense: return "exact_dense";
    case EvaluationMethod::slq: return "slq";
    case EvaluationMethod::xnystrace: return "xnystrace";
  }
  return "unknown";
}

namespace {

double logdet_spd_eigen(const Matrix& m, const char* context) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const Vector vals = es.eigenvalues();
  const double max_abs = vals.cwiseAbs().maxCoeff();
  double sum = 0.0;
  for (Index i = 0; i < vals.size(); ++i) {
    if (vals[i] <= 1e-14 * max_abs) {
      throw SingularityError(std::string(context) + ": matrix is numerically singular or indefinite");
    }
    sum += std::log(vals[i]);
  }
  return sum;
}

/// Measurement-space mask for a design: embed . embed^T, applied in place.
LinearOperator selection_mask(const SensorDesign& design, Index n_blocks) {
  const LinearOperator embed = embed_selection(design, n_blocks);
  return compose(embed, embed.transposed());
}

void probe_operator(const LinearOperator& op, const char* context) {
  // Construction-time audit: one deterministic matvec flushes any capability
  // violation captured inside the closures.
  Vector x = Vector::Ones(op.cols());
  try {
    (void)op.apply(x);
  } catch (const ContractViolation& e) {
    throw ContractViolation(std::string(context) + ": " + e.what());
  }
}

}  // namespace

BlockColumnMatrix criterion_matrix(const DAProblem& problem) {
  problem.validate();
  const CovariancePtr gamma_mod = restrict_covariance(
      problem.model_covariance(), kCovFactor | kCovFactorTranspose, "preconditioned criterion");
  const CovariancePtr noise = restrict_covariance(problem.noise_covariance(), kCovInverseFactor,
                                                  "preconditioned criterion");
  const LinearOperator l_inv_t = problem.coupling(CouplingDirection::inverse).linop().transposed();
  const LinearOperator obs_t = problem.observation.block().transposed();
  const LinearOperator a =
      compose(covariance_factor_op(gamma_mod).transposed(),
              compose(l_inv_t, compose(obs_t, covariance_inverse_factor_op(noise))));
  probe_operator(a, "criterion_matrix");
  return BlockColumnMatrix{a, problem.dims.n_blocks(), problem.dims.n_sensors};
}

BlockColumnMatrix sc_criterion_matrix(const DAProblem& problem) {
  problem.validate();
  const Index d = problem.dims.state_dim;
  const Index n_blocks = problem.dims.n_blocks();
  const Index n_s = problem.dims.n_sensors;
  const CovariancePtr background = problem.background;
  const LinearOperator per_step = problem.observation.per_step();
  const EvolutionFamily evolution = problem.evolution;
  auto sigma = std::make_shared<std::vector<double>>(problem.noise_variance.size());
  for (std::size_t i = 0; i < problem.noise_variance.size(); ++i) {
    (*sigma)[i] = std::sqrt(problem.noise_variance[i]);
  }
  const Index rows = background->factor_cols();
  const Index cols = n_blocks * n_s;

  auto forward = [=](const Vector& x) {
    // sum_l M_{0->l}^T O^T (x_l / sigma_l) via one reverse-time sweep.
    Vector acc = Vector::Zero(d);
    for (Index l = n_blocks - 1; l >= 0; --l) {
      if (l < n_blocks - 1) acc = evolution.step(l).apply_transpose(acc);
      acc += per_step.apply_transpose(x.segment(l * n_s, n_s) / (*sigma)[static_cast<std::size_t>(l)]);
    }
    return Vector(background->apply_factor_transpose(acc));
  };
  auto transpose = [=](const Vector& y) {
    Vector out(cols);
    Vector state = background->apply_factor(y);
    for (Index l = 0; l < n_blocks; ++l) {
      if (l > 0) state = evolution.step(l - 1).apply(state);
      out.segment(l * n_s, n_s) = per_step.apply(state) / (*sigma)[static_cast<std::size_t>(l)];
    }
    return out;
  };
  return BlockColumnMatrix{LinearOperator(rows, cols, forward, transpose), n_blocks, n_s};
}

LinearOperator select_columns(const BlockColumnMatrix& matrix, const SensorDesign& design) {
  require_dim(design.n_sensors() == matrix.cols_per_block,
              "select_columns: design does not match the block width");
  return compose(matrix.op, embed_selection(design, matrix.n_blocks));
}

CriterionOperator build_criterion_operator(const DAProblem& problem, const SensorDesign& design,
                                           Formulation formulation) {
  problem.validate();
  require_dim(design.n_sensors() == problem.dims.n_sensors,
              "build_criterion_operator: design sensor count mismatch");
  const Index n_d = problem.dims.trajectory_dim();
  const Index n_blocks = problem.dims.n_blocks();
  const Index m_sel = n_blocks * design.n_selected();

  CriterionOperator out;
  out.formulation = formulation;
  out.design = design;

  switch (formulation) {
    case Formulation::preconditioned: {
      const BlockColumnMatrix a = criterion_matrix(problem);
      const LinearOperator a_s = select_columns(a, design);
      const Index f = a_s.rows();
      out.op = LinearOperator(
          f, f,
          [a_s](const Vector& x) { return Vector(x + a_s.apply(a_s.apply_transpose(x))); },
          [a_s](const Vector& x) { return Vector(x + a_s.apply(a_s.apply_transpose(x))); });
      out.function = ScalarFunction::log;
      out.constant = ConstantConvention::none;
      out.expected_positive = f;
      out.expected_negative = 0;
      break;
    }
    case Formulation::unpreconditioned: {
      const CovariancePtr gamma_mod = restrict_covariance(problem.model_covariance(), kCovInverse,
                                                          "unpreconditioned criterion");
      const CovariancePtr noise =
          restrict_covariance(problem.noise_covariance(), kCovInverse, "unpreconditioned criterion");
      const LinearOperator l = problem.coupling(CouplingDirection::forward).linop();
      const LinearOperator obs = problem.observation.block();
      const LinearOperator mask = selection_mask(design, n_blocks);
      const LinearOperator data_term = compose(
          obs.transposed(), compose(covariance_inverse_op(noise), compose(mask, obs)));
      const LinearOperator prior_term =
          compose(l.transposed(), compose(covariance_inverse_op(gamma_mod), l));
      out.op = operator_sum(data_term, prior_term);
      out.function = ScalarFunction::log;
      out.constant = ConstantConvention::logdet_prior;
      out.expected_positive = n_d;
      out.expected_negative = 0;
      break;
    }
    case Formulation::saddle_point_one: {
      const CovariancePtr gamma_mod =
          restrict_covariance(problem.model_covariance(), kCovApply, "saddle-point-I criterion");
      const CovariancePtr noise_sel =
          design.n_selected() > 0
              ? restrict_covariance(problem.noise_covariance(design), kCovApply,
                                    "saddle-point-I criterion")
              : nullptr;
      const LinearOperator l = problem.coupling(CouplingDirection::forward).linop();
      const LinearOperator obs_sel =
          compose(embed_selection(design, n_blocks).transposed(), problem.observation.block());
      const Index total = 2 * n_d + m_sel;
      auto apply = [gamma_mod, noise_sel, l, obs_sel, n_d, m_sel](const Vector& v) {
        Vector r(2 * n_d + m_sel);
        const Vector x = v.head(n_d);
        const Vector y = v.segment(n_d, m_sel);
        const Vector z = v.tail(n_d);
        r.head(n_d) = gamma_mod->apply(x) + l.apply(z);
        if (m_sel > 0) r.segment(n_d, m_sel) = noise_sel->apply(y) + obs_sel.apply(z);
        r.tail(n_d) = l.apply_transpose(x) + (m_sel > 0 ? obs_sel.apply_transpose(y).eval()
                                                        : Vector(Vector::Zero(n_d)).eval());
        return r;
      };
      out.op = LinearOperator(total, total, apply, apply);
      out.function = ScalarFunction::log_abs;
      out.constant = ConstantConvention::logdet_noise;
      out.expected_positive = n_d + m_sel;
      out.expected_negative = n_d;
      break;
    }
    case Formulation::saddle_point_two: {
      const CovariancePtr gamma_mod =
          restrict_covariance(problem.model_covariance(), kCovApply, "saddle-point-II criterion");
      const CovariancePtr noise =
          restrict_covariance(problem.noise_covariance(), kCovInverse, "saddle-point-II criterion");
      const LinearOperator l = problem.coupling(CouplingDirection::forward).linop();
      const LinearOperator obs = problem.observation.block();
      const LinearOperator mask = selection_mask(design, n_blocks);
      auto apply = [gamma_mod, noise, l, obs, mask, n_d](const Vector& v) {
        Vector r(2 * n_d);
        const Vector x = v.head(n_d);
        const Vector z = v.tail(n_d);
        r.head(n_d) = gamma_mod->apply(x) + l.apply(z);
        r.tail(n_d) =
            l.apply_transpose(x) - obs.apply_transpose(noise->apply_inverse(mask.apply(obs.apply(z))));
        return r;
      };
      out.op = LinearOperator(2 * n_d, 2 * n_d, apply, apply);
      out.function = ScalarFunction::log_abs;
      out.constant = ConstantConvention::none;
      out.expected_positive = n_d;
      out.expected_negative = n_d;
      break;
    }
    case Formulation::strong_constraint:
      throw DimensionError("build_criterion_operator: use sc_criterion_selected for the exact-dynamics criterion");
  }
  probe_operator(out.op, "build_criterion_operator");
  return out;
}

CriterionValue criterion_exact(const CriterionOperator& op, Index densify_limit) {
  if (op.op.rows() > densify_limit) {
    throw BudgetError("criterion_exact: operator size " + std::to_string(op.op.rows()) +
                      " exceeds the densify limit " + std::to_string(densify_limit));
  }
  const Matrix dense = densify_symmetric(op.op);
  Eigen::SelfAdjointEigenSolver<Matrix> es(dense, Eigen::EigenvaluesOnly);
  const Vector vals = es.eigenvalues();
  const double max_abs = vals.cwiseAbs().maxCoeff();
  double sum = 0.0;
  for (Index i = 0; i < vals.size(); ++i) {
    if (std::abs(vals[i]) <= 1e-14 * max_abs) {
      throw SingularityError("criterion_exact: numerically zero eigenvalue in the criterion operator");
    }
    if (op.function == ScalarFunction::log && vals[i] < 0.0) {
      throw SingularityError("criterion_exact: negative eigenvalue under f = log");
    }
    sum += std::log(std::abs(vals[i]));
  }
  CriterionValue value;
  value.value = sum;
  value.formulation = op.formulation;
  value.constant = op.constant;
  value.method = EvaluationMethod::exact_dense;
  value.design = op.design;
  return value;
}

CriterionValue criterion_selected(const DAProblem& problem, const SensorDesign& design,
                                  EvaluationMethod method, const EstimatorOptions& options) {
  CriterionValue value;
  value.formulation = Formulation::preconditioned;
  value.constant = ConstantConvention::none;
  value.method = method;
  value.design = design;
  if (design.n_selected() == 0) {
    value.value = 0.0;
    return value;
  }
  if (method == EvaluationMethod::exact_dense) {
    const BlockColumnMatrix a = criterion_matrix(problem);
    const LinearOperator a_s = select_columns(a, design);
    const Matrix dense = densify(a_s);
    // Work on the smaller Gram side; the nonzero spectrum is shared.
    Matrix gram;
    if (dense.cols() <= dense.rows()) {
      gram = dense.transpose() * dense;
    } else {
      gram = dense * dense.transpose();
    }
    gram.diagonal().array() += 1.0;
    value.value = logdet_spd_eigen(gram, "criterion_selected");
    return value;
  }
  const CriterionOperator op = build_criterion_operator(problem, design, Formulation::preconditioned);
  TraceEstimate est;
  if (method == EvaluationMethod::slq) {
    est = slq_trace(op.op, ScalarFunction::log, options.n_samples, options.seed,
                    options.lanczos_rel_tol, options.lanczos_max_iterations);
  } else {
    est = xnystrace_logdet(op.op, options.n_samples, options.seed, options.lanczos_rel_tol,
                           options.lanczos_max_iterations);
  }
  value.value = est.value;
  value.diagnostics = std::move(est);
  return value;
}

CriterionValue sc_criterion_selected(const DAProblem& problem, const SensorDesign& design) {
  problem.validate();
  require_dim(design.n_sensors() == problem.dims.n_sensors,
              "sc_criterion_selected: design sensor count mismatch");
  CriterionValue value;
  value.formulation = Formulation::strong_constraint;
  value.constant = ConstantConvention::none;
  value.method = EvaluationMethod::exact_dense;
  value.design = design;
  const Index k = design.n_selected();
  if (k == 0) {
    value.value = 0.0;
    return value;
  }

  const Index d = problem.dims.state_dim;
  const Index f = problem.background->factor_cols();
  Matrix states(d, f);
  {
    Vector e = Vector::Zero(f);
    for (Index j = 0; j < f; ++j) {
      e[j] = 1.0;
      states.col(j) = problem.background->apply_factor(e);
      e[j] = 0.0;
    }
  }
  const LinearOperator select = embed_selection(design, 1);
  Matrix accum = Matrix::Zero(f, f);
  for (Index l = 0; l <= problem.dims.n_windows; ++l) {
    if (l > 0) {
      for (Index j = 0; j < f; ++j) states.col(j) = problem.evolution.step(l - 1).apply(states.col(j));
    }
    Matrix rows(k, f);
    for (Index j = 0; j < f; ++j) {
      rows.col(j) = select.apply_transpose(problem.observation.per_step().apply(states.col(j)));
    }
    accum += rows.transpose() * rows / problem.noise_variance[static_cast<std::size_t>(l)];
  }
  accum.diagonal().array() += 1.0;
  value.value = logdet_spd_eigen(accum, "sc_criterion_selected");
  return value;
}

double dense_logdet_prior(const DAProblem& problem, Index densify_limit) {
  // logdet of blkdiag(background, Q_1, ...); the coupling factor contributes
  // nothing because det L = 1.
  double sum = 0.0;
  auto add_block = [&](const CovariancePtr& block) {
    if (block->dim() > densify_limit) {
      throw BudgetError("dense_logdet_prior: covariance block exceeds the densify limit");
    }
    sum += logdet_spd_eigen(densify_symmetric(covariance_apply_op(block)), "dense_logdet_prior");
  };
  add_block(problem.background);
  for (const auto& q : problem.model_error) add_block(q);
  return sum;
}

double dense_logdet_noise(const DAProblem& problem, const SensorDesign& design) {
  const double k = static_cast<double>(design.n_selected());
  double sum = 0.0;
  for (double v : problem.noise_variance) sum += k * std::log(v);
  return sum;
}

double reconciled_value(const CriterionValue& value, const DAProblem& problem) {
  switch (value.constant) {
    case ConstantConvention::none: return value.value;
    case ConstantConvention::logdet_prior: return value.value + dense_logdet_prior(problem);
    case ConstantConvention::logdet_noise:
      return value.value - dense_logdet_noise(problem, value.design);
  }
  return value.value;
}

std::vector<double> reconcile_constants(const std::vector<CriterionValue>& values,
                                        const DAProblem& problem) {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(reconciled_value(v, problem));
  return out;
}

GapBound wc_sc_gap_bound(const DAProblem& problem, const SensorDesign& design) {
  GapBound bound;
  bound.wc = criterion_selected(problem, design, EvaluationMethod::exact_dense).value;
  bound.sc = sc_criterion_selected(problem, design).value;
  bound.gap = bound.wc - bound.sc;

  const Index m_sel = problem.dims.n_blocks() * design.n_selected();
  if (m_sel == 0) {
    bound.upper = 0.0;
    return bound;
  }
  // Z_S = (I x S)^T R^{-1/2} O L^{-1}, materialized through its transpose
  // (m_sel applies instead of N_d).
  const CovariancePtr noise =
      restrict_covariance(problem.noise_covariance(), kCovInverseFactor, "wc_sc_gap_bound");
  const LinearOperator z_op = compose(
      embed_selection(design, problem.dims.n_blocks()).transposed(),
      compose(covariance_inverse_factor_op(noise),
              compose(problem.observation.block(),
                      problem.coupling(CouplingDirection::inverse).linop())));
  const Matrix z = densify(z_op.transposed()).transpose();
  const Index d = problem.dims.state_dim;
  const Matrix z_err = z.rightCols(problem.dims.n_windows * d);
  // blkdiag(0, Gamma_Q) contribution only.
  Matrix qz_t(z_err.cols(), z_err.rows());
  for (Index c = 0; c < z_err.rows(); ++c) {
    for (Index l = 0; l < problem.dims.n_windows; ++l) {
      qz_t.block(l * d, c, d, 1) =
          problem.model_error[static_cast<std::size_t>(l)]->apply(z_err.row(c).segment(l * d, d).transpose());
    }
  }
  Matrix m = z_err * qz_t;
  m.diagonal().array() += 1.0;
  bound.upper = logdet_spd_eigen(0.5 * (m + m.transpose()), "wc_sc_gap_bound");
  return bound;
}

InertiaReport dense_inertia(const LinearOperator& op, double zero_tol_scale) {
  const Matrix dense = densify_symmetric(op);
  Eigen::SelfAdjointEigenSolver<Matrix> es(dense, Eigen::EigenvaluesOnly);
  const Vector vals = es.eigenvalues();
  const double max_abs = vals.cwiseAbs().maxCoeff();
  InertiaReport report;
  for (Index i = 0; i < vals.size(); ++i) {
    if (std::abs(vals[i]) <= zero_tol_scale * max_abs) {
      ++report.n_zero;
    } else if (vals[i] > 0.0) {
      ++report.n_positive;
    } else {
      ++report.n_negative;
    }
  }
  return report;
}

GramEvaluator::GramEvaluator(const BlockColumnMatrix& matrix)
    : n_blocks_(matrix.n_blocks), cols_per_block_(matrix.cols_per_block) {
  const Matrix dense = densify(matrix.op);
  gram_ = dense.transpose() * dense;
}

double GramEvaluator::operator()(const SensorDesign& design) const {
  require_dim(design.n_sensors() == cols_per_block_, "GramEvaluator: design width mismatch");
  const Index k = design.n_selected();
  if (k == 0) return 0.0;
  const Index m = n_blocks_ * k;
  Matrix sub(m, m);
  std::vector<Index> sel(static_cast<std::size_t>(m));
  Index at = 0;
  for (Index b = 0; b < n_blocks_; ++b) {
    for (Index j = 0; j < k; ++j) {
      sel[static_cast<std::size_t>(at++)] = b * cols_per_block_ + design.indices()[static_cast<std::size_t>(j)];
    }
  }
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b) sub(a, b) = gram_(sel[static_cast<std::size_t>(a)], sel[static_cast<std::size_t>(b)]);
  }
  sub.diagonal().array() += 1.0;
  Eigen::LLT<Matrix> llt(sub);
  if (llt.info() == Eigen::Success) {
    double sum = 0.0;
    for (Index i = 0; i < m; ++i) sum += std::log(llt.matrixLLT()(i, i));
    return 2.0 * sum;
  }
  return logdet_spd_eigen(sub, "GramEvaluator");
}

}  // namespace wc4dvar
