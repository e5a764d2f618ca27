/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <optional>
#include <vector>

#include "wc4dvar/problem.hpp"
#include "wc4dvar/traceest.hpp"

namespace wc4dvar {

/// Equivalent ways to express the information-gain criterion, distinguished
/// by which matrix actions a matvec is allowed to touch:
///
///   formulation       licensed actions                    operator size
///   preconditioned    noise^{-1/2}, model factor, L^{-1}  factor_cols
///   unpreconditioned  noise^{-1}, model inverse, L        N_d
///   saddle_point_one  plain applies only, L                2 N_d + m_sel
///   saddle_point_two  noise^{-1}, model apply, L           2 N_d
///   strong_constraint (initial-condition criterion)        d_S-side Gram
enum class Formulation {
  preconditioned,
  unpreconditioned,
  saddle_point_one,
  saddle_point_two,
  strong_constraint,
};

/// Additive constant left inside a raw criterion value.
enum class ConstantConvention {
  none,          // value equals the criterion
  logdet_prior,  // criterion = value + logdet(prior covariance)
  logdet_noise,  // criterion = value - logdet(selected noise covariance)
};

enum class EvaluationMethod { exact_dense, slq, xnystrace };

const char* to_string(Formulation f);
const char* to_string(EvaluationMethod m);

/// Matrix-free symmetric operator whose log-determinant (plus the tracked
/// constant) equals the criterion for one design.
struct CriterionOperator {
  Formulation formulation = Formulation::preconditioned;
  LinearOperator op;
  ScalarFunction function = ScalarFunction::log;
  ConstantConvention constant = ConstantConvention::none;
  Index expected_positive = 0;
  Index expected_negative = 0;
  SensorDesign design{1, {}};
};

struct CriterionValue {
  double value = 0.0;  // raw value in the formulation's constant convention
  Formulation formulation = Formulation::preconditioned;
  ConstantConvention constant = ConstantConvention::none;
  EvaluationMethod method = EvaluationMethod::exact_dense;
  SensorDesign design{1, {}};
  std::optional<TraceEstimate> diagnostics;
};

/// Column-block matrix [A_0 ... A_{n_blocks-1}], one block of sensor columns
/// per snapshot.
struct BlockColumnMatrix {
  LinearOperator op;  // rows x (n_blocks * cols_per_block)
  Index n_blocks = 0;
  Index cols_per_block = 0;
};

/// Whitened sensitivity matrix of the trajectory criterion over all candidate
/// sensors: A = G^T L^{-T} O^T R^{-1/2}, with G the model-covariance factor.
/// Column (l, s) measures sensor s at snapshot l. The transpose direction
/// needs only forward dynamics.
BlockColumnMatrix criterion_matrix(const DAProblem& problem);

/// Initial-condition (exact-dynamics) analogue: block l holds
/// (R_l^{-1/2} O M_{0->l} G_B)^T columns per sensor.
BlockColumnMatrix sc_criterion_matrix(const DAProblem& problem);

/// A restricted to a design: A (I tensor S).
LinearOperator select_columns(const BlockColumnMatrix& matrix, const SensorDesign& design);

CriterionOperator build_criterion_operator(const DAProblem& problem, const SensorDesign& design,
                                           Formulation formulation);

struct EstimatorOptions {
  Index n_samples = 8;
  std::uint64_t seed = 0;
  double lanczos_rel_tol = 1e-10;
  Index lanczos_max_iterations = 2000;
};

/// Dense evaluation: densify, symmetric eigendecomposition, sum of f over the
/// spectrum. Refuses operators above the densify limit; aborts on a
/// numerically zero eigenvalue.
CriterionValue criterion_exact(const CriterionOperator& op, Index densify_limit = 4000);

/// Criterion for a design via the requested method (the randomized methods
/// run on the preconditioned operator).
CriterionValue criterion_selected(const DAProblem& problem, const SensorDesign& design,
                                  EvaluationMethod method, const EstimatorOptions& options = {});

/// Exact-dynamics criterion by dense Gram accumulation over the initial state.
CriterionValue sc_criterion_selected(const DAProblem& problem, const SensorDesign& design);

/// Raw value mapped onto the constant-free convention by adding/subtracting
/// densely computed constants (desk scale only).
double reconciled_value(const CriterionValue& value, const DAProblem& problem);
std::vector<double> reconcile_constants(const std::vector<CriterionValue>& values,
                                        const DAProblem& problem);

/// logdet of the forecast-prior covariance (equals logdet of the block
/// model covariance because the coupling has unit determinant).
double dense_logdet_prior(const DAProblem& problem, Index densify_limit = 4000);
/// logdet of the selected noise covariance (closed form for scaled blocks).
double dense_logdet_noise(const DAProblem& problem, const SensorDesign& design);

struct GapBound {
  double wc = 0.0;     // trajectory criterion
  double sc = 0.0;     // exact-dynamics criterion
  double gap = 0.0;    // wc - sc
  double upper = 0.0;  // logdet(I + Z_S blkdiag(0, Gamma_Q) Z_S^T)
};

/// Dense sandwich 0 <= wc - sc <= upper for one design (desk scale).
GapBound wc_sc_gap_bound(const DAProblem& problem, const SensorDesign& design);

struct InertiaReport {
  Index n_positive = 0;
  Index n_negative = 0;
  Index n_zero = 0;
};

InertiaReport dense_inertia(const LinearOperator& op, double zero_tol_scale = 1e-12);

/// Exact design evaluator with a precomputed measurement-space Gram matrix;
/// one design evaluation is a logdet of the selected principal submatrix.
class GramEvaluator {
 public:
  explicit GramEvaluator(const BlockColumnMatrix& matrix);

  Index n_blocks() const { return n_blocks_; }
  Index n_sensors() const { return cols_per_block_; }
  const Matrix& gram() const { return gram_; }

  double operator()(const SensorDesign& design) const;

 private:
  Matrix gram_;
  Index n_blocks_;
  Index cols_per_block_;
};

}  // namespace wc4dvar
