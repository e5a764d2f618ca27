/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <memory>
#include <vector>

#include "wc4dvar/linop.hpp"
#include "wc4dvar/operators.hpp"
#include "wc4dvar/rng.hpp"
#include "wc4dvar/types.hpp"

namespace wc4dvar {

/// Capability bits for covariance access. Criterion formulations differ in
/// which covariance actions they are allowed to touch; handing a model to a
/// builder restricted to the licensed set turns an accidental extra
/// dependency into a ContractViolation instead of a silent cost change.
enum CovarianceCapability : unsigned {
  kCovApply = 1u << 0,
  kCovInverse = 1u << 1,
  kCovFactor = 1u << 2,
  kCovFactorTranspose = 1u << 3,
  kCovInverseFactor = 1u << 4,
  kCovAll = 0x1f,
};

/// Symmetric positive definite covariance with a (possibly rectangular)
/// factor G such that Gamma = G G^T. All actions are precomputed/factored at
/// construction; applies are reentrant.
class CovarianceModel {
 public:
  virtual ~CovarianceModel() = default;

  virtual Index dim() const = 0;
  virtual Index factor_cols() const = 0;

  virtual Vector apply(const Vector& x) const = 0;
  virtual Vector apply_inverse(const Vector& x) const = 0;
  /// G x with x in R^{factor_cols}.
  virtual Vector apply_factor(const Vector& x) const = 0;
  /// G^T x with x in R^{dim}.
  virtual Vector apply_factor_transpose(const Vector& x) const = 0;

  /// Symmetric H = Gamma^{-1/2}; available for (blockwise) scaled models
  /// only, matching the diagonal-noise assumption.
  virtual Vector apply_inverse_factor(const Vector& x) const;
  virtual bool has_inverse_factor() const { return false; }
};

using CovariancePtr = std::shared_ptr<const CovarianceModel>;

/// Operator views holding shared ownership of the model.
LinearOperator covariance_apply_op(CovariancePtr model);
LinearOperator covariance_inverse_op(CovariancePtr model);
LinearOperator covariance_factor_op(CovariancePtr model);          // dim x factor_cols
LinearOperator covariance_inverse_factor_op(CovariancePtr model);  // symmetric H, dim x dim

/// sigma^2 * I.
class ScaledIdentityCovariance final : public CovarianceModel {
 public:
  ScaledIdentityCovariance(Index dim, double variance);

  Index dim() const override { return dim_; }
  Index factor_cols() const override { return dim_; }
  double variance() const { return variance_; }

  Vector apply(const Vector& x) const override;
  Vector apply_inverse(const Vector& x) const override;
  Vector apply_factor(const Vector& x) const override;
  Vector apply_factor_transpose(const Vector& x) const override;
  Vector apply_inverse_factor(const Vector& x) const override;
  bool has_inverse_factor() const override { return true; }

 private:
  Index dim_;
  double variance_;
};

/// Explicit SPD matrix held densely with an eager Cholesky factorization
/// (used for sampled model-error covariances at desk scale).
class DenseSPDCovariance final : public CovarianceModel {
 public:
  explicit DenseSPDCovariance(Matrix sigma);

  Index dim() const override { return matrix_->rows(); }
  Index factor_cols() const override { return matrix_->rows(); }
  const Matrix& matrix() const { return *matrix_; }

  Vector apply(const Vector& x) const override;
  Vector apply_inverse(const Vector& x) const override;
  Vector apply_factor(const Vector& x) const override;
  Vector apply_factor_transpose(const Vector& x) const override;

 private:
  std::shared_ptr<const Matrix> matrix_;
  std::shared_ptr<const Matrix> chol_lower_;  // Gamma = L L^T
};

/// Elliptic-operator covariance (gamma*K + delta*N)^{-1} N (gamma*K + delta*N)^{-1}
/// built from mass and stiffness matrices. The factor is
/// (gamma*K + delta*N)^{-1} C with N = C C^T (sparse Cholesky of the mass).
class EllipticPriorCovariance final : public CovarianceModel {
 public:
  EllipticPriorCovariance(SparseMatrix stiffness, SparseMatrix mass, double gamma, double delta);

  Index dim() const override { return dim_; }
  Index factor_cols() const override { return dim_; }
  double gamma() const { return gamma_; }
  double delta() const { return delta_; }

  Vector apply(const Vector& x) const override;
  Vector apply_inverse(const Vector& x) const override;
  Vector apply_factor(const Vector& x) const override;
  Vector apply_factor_transpose(const Vector& x) const override;

 private:
  struct Solvers;
  Index dim_;
  double gamma_;
  double delta_;
  std::shared_ptr<const Solvers> solvers_;
};

/// blkdiag(blocks...). Applies distribute blockwise; the factor stacks the
/// block factors.
class BlockDiagCovariance final : public CovarianceModel {
 public:
  explicit BlockDiagCovariance(std::vector<CovariancePtr> blocks);

  Index dim() const override { return dim_; }
  Index factor_cols() const override { return factor_cols_; }
  const std::vector<CovariancePtr>& blocks() const { return blocks_; }

  Vector apply(const Vector& x) const override;
  Vector apply_inverse(const Vector& x) const override;
  Vector apply_factor(const Vector& x) const override;
  Vector apply_factor_transpose(const Vector& x) const override;
  Vector apply_inverse_factor(const Vector& x) const override;
  bool has_inverse_factor() const override;

 private:
  std::vector<CovariancePtr> blocks_;
  Index dim_ = 0;
  Index factor_cols_ = 0;
};

/// View exposing only the licensed subset of covariance actions.
CovariancePtr restrict_covariance(CovariancePtr model, unsigned allowed, std::string label);

/// Spectral norm of a symmetric matrix: dense eigensolve up to
/// `dense_limit`, 50 power-iteration steps beyond that.
double symmetric_spectral_norm(const Matrix& m, Index dense_limit = 500);

/// Per-window model-error covariances from sampled trajectory differences
/// between a reference and an approximate model. Initial states are drawn
/// from N(background_mean, background); each Q_l is the (n-1)-divisor sample
/// covariance of the step-l differences plus the nugget
/// delta_l = 1e-12 + 1e-6 * ||sample covariance||_2.
std::vector<CovariancePtr> sample_error_covariance(const EvolutionFamily& reference_steps,
                                                   const EvolutionFamily& approx_steps,
                                                   const CovarianceModel& background,
                                                   const Vector& background_mean,
                                                   Index n_samples, std::uint64_t seed);

/// Same construction from caller-provided initial states (columns).
std::vector<CovariancePtr> sample_error_covariance_from_states(
    const EvolutionFamily& reference_steps, const EvolutionFamily& approx_steps,
    const Matrix& initial_states);

}  // namespace wc4dvar
