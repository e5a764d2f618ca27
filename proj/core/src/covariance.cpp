/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/covariance.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <string>
#include <utility>

namespace wc4dvar {

Vector CovarianceModel::apply_inverse_factor(const Vector&) const {
  throw ContractViolation("CovarianceModel: inverse factor not available for this model");
}

LinearOperator covariance_apply_op(CovariancePtr model) {
  const Index n = model->dim();
  auto fn = [model](const Vector& x) { return model->apply(x); };
  return LinearOperator(n, n, fn, fn);
}

LinearOperator covariance_inverse_op(CovariancePtr model) {
  const Index n = model->dim();
  auto fn = [model](const Vector& x) { return model->apply_inverse(x); };
  return LinearOperator(n, n, fn, fn);
}

LinearOperator covariance_factor_op(CovariancePtr model) {
  return LinearOperator(
      model->dim(), model->factor_cols(),
      [model](const Vector& x) { return model->apply_factor(x); },
      [model](const Vector& x) { return model->apply_factor_transpose(x); });
}

LinearOperator covariance_inverse_factor_op(CovariancePtr model) {
  const Index n = model->dim();
  auto fn = [model](const Vector& x) { return model->apply_inverse_factor(x); };
  return LinearOperator(n, n, fn, fn);
}

ScaledIdentityCovariance::ScaledIdentityCovariance(Index dim, double variance)
    : dim_(dim), variance_(variance) {
  require_dim(dim >= 1, "ScaledIdentityCovariance: dim must be >= 1");
  if (!(variance > 0.0)) throw SingularityError("ScaledIdentityCovariance: variance must be positive");
}

Vector ScaledIdentityCovariance::apply(const Vector& x) const { return variance_ * x; }
Vector ScaledIdentityCovariance::apply_inverse(const Vector& x) const { return x / variance_; }
Vector ScaledIdentityCovariance::apply_factor(const Vector& x) const {
  return std::sqrt(variance_) * x;
}
Vector ScaledIdentityCovariance::apply_factor_transpose(const Vector& x) const {
  return std::sqrt(variance_) * x;
}
Vector ScaledIdentityCovariance::apply_inverse_factor(const Vector& x) const {
  return x / std::sqrt(variance_);
}

DenseSPDCovariance::DenseSPDCovariance(Matrix sigma) {
  require_dim(sigma.rows() == sigma.cols(), "DenseSPDCovariance: matrix must be square");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw SingularityError("DenseSPDCovariance: Cholesky failed, matrix is not positive definite");
  }
  matrix_ = std::make_shared<const Matrix>(std::move(sigma));
  chol_lower_ = std::make_shared<const Matrix>(llt.matrixL());
}

Vector DenseSPDCovariance::apply(const Vector& x) const { return *matrix_ * x; }

Vector DenseSPDCovariance::apply_inverse(const Vector& x) const {
  // Two triangular solves against the stored factor.
  Vector y = chol_lower_->triangularView<Eigen::Lower>().solve(x);
  return chol_lower_->transpose().triangularView<Eigen::Upper>().solve(y);
}

Vector DenseSPDCovariance::apply_factor(const Vector& x) const {
  return chol_lower_->triangularView<Eigen::Lower>() * x;
}

Vector DenseSPDCovariance::apply_factor_transpose(const Vector& x) const {
  return chol_lower_->transpose().triangularView<Eigen::Upper>() * x;
}

struct EllipticPriorCovariance::Solvers {
  SparseMatrix mass;
  SparseMatrix shifted_mat;                       // A = gamma*K + delta*N
  Eigen::SimplicialLDLT<SparseMatrix> shifted;    // factorization of A
  Eigen::SimplicialLLT<SparseMatrix> mass_chol;   // N = C C^T
};

EllipticPriorCovariance::EllipticPriorCovariance(SparseMatrix stiffness, SparseMatrix mass,
                                                 double gamma, double delta)
    : dim_(mass.rows()), gamma_(gamma), delta_(delta) {
  require_dim(stiffness.rows() == stiffness.cols() && mass.rows() == mass.cols() &&
                  mass.rows() == stiffness.rows(),
              "EllipticPriorCovariance: mass/stiffness shape mismatch");
  auto solvers = std::make_shared<Solvers>();
  solvers->shifted_mat = gamma * stiffness + delta * mass;
  solvers->shifted_mat.makeCompressed();
  solvers->shifted.compute(solvers->shifted_mat);
  if (solvers->shifted.info() != Eigen::Success) {
    throw SingularityError("EllipticPriorCovariance: factorization of gamma*K + delta*N failed");
  }
  mass.makeCompressed();
  solvers->mass_chol.compute(mass);
  if (solvers->mass_chol.info() != Eigen::Success) {
    throw SingularityError("EllipticPriorCovariance: mass matrix is not positive definite");
  }
  solvers->mass = std::move(mass);
  solvers_ = std::move(solvers);
}

Vector EllipticPriorCovariance::apply(const Vector& x) const {
  Vector y = solvers_->shifted.solve(x);
  y = solvers_->mass * y;
  return solvers_->shifted.solve(y);
}

Vector EllipticPriorCovariance::apply_inverse(const Vector& x) const {
  // Gamma^{-1} = A N^{-1} A with A = gamma*K + delta*N.
  Vector y = solvers_->shifted_mat * x;
  y = solvers_->mass_chol.solve(y);
  return solvers_->shifted_mat * y;
}

Vector EllipticPriorCovariance::apply_factor(const Vector& x) const {
  // G = A^{-1} C with N = C C^T. The sparse Cholesky is computed under a
  // fill-reducing permutation, P N P^T = L L^T, so C = P^T L.
  Vector y = solvers_->mass_chol.matrixL() * x;
  y = solvers_->mass_chol.permutationPinv() * y;
  return solvers_->shifted.solve(y);
}

Vector EllipticPriorCovariance::apply_factor_transpose(const Vector& x) const {
  Vector y = solvers_->shifted.solve(x);
  y = solvers_->mass_chol.permutationP() * y;
  return solvers_->mass_chol.matrixL().transpose() * y;
}

BlockDiagCovariance::BlockDiagCovariance(std::vector<CovariancePtr> blocks)
    : blocks_(std::move(blocks)) {
  require_dim(!blocks_.empty(), "BlockDiagCovariance: need at least one block");
  for (const auto& b : blocks_) {
    dim_ += b->dim();
    factor_cols_ += b->factor_cols();
  }
}

Vector BlockDiagCovariance::apply(const Vector& x) const {
  require_dim(x.size() == dim_, "BlockDiagCovariance::apply: size mismatch");
  Vector y(dim_);
  Index at = 0;
  for (const auto& b : blocks_) {
    y.segment(at, b->dim()) = b->apply(x.segment(at, b->dim()));
    at += b->dim();
  }
  return y;
}

Vector BlockDiagCovariance::apply_inverse(const Vector& x) const {
  require_dim(x.size() == dim_, "BlockDiagCovariance::apply_inverse: size mismatch");
  Vector y(dim_);
  Index at = 0;
  for (const auto& b : blocks_) {
    y.segment(at, b->dim()) = b->apply_inverse(x.segment(at, b->dim()));
    at += b->dim();
  }
  return y;
}

Vector BlockDiagCovariance::apply_factor(const Vector& x) const {
  require_dim(x.size() == factor_cols_, "BlockDiagCovariance::apply_factor: size mismatch");
  Vector y(dim_);
  Index xat = 0, yat = 0;
  for (const auto& b : blocks_) {
    y.segment(yat, b->dim()) = b->apply_factor(x.segment(xat, b->factor_cols()));
    xat += b->factor_cols();
    yat += b->dim();
  }
  return y;
}

Vector BlockDiagCovariance::apply_factor_transpose(const Vector& x) const {
  require_dim(x.size() == dim_, "BlockDiagCovariance::apply_factor_transpose: size mismatch");
  Vector y(factor_cols_);
  Index xat = 0, yat = 0;
  for (const auto& b : blocks_) {
    y.segment(yat, b->factor_cols()) = b->apply_factor_transpose(x.segment(xat, b->dim()));
    xat += b->dim();
    yat += b->factor_cols();
  }
  return y;
}

Vector BlockDiagCovariance::apply_inverse_factor(const Vector& x) const {
  require_dim(x.size() == dim_, "BlockDiagCovariance::apply_inverse_factor: size mismatch");
  Vector y(dim_);
  Index at = 0;
  for (const auto& b : blocks_) {
    y.segment(at, b->dim()) = b->apply_inverse_factor(x.segment(at, b->dim()));
    at += b->dim();
  }
  return y;
}

bool BlockDiagCovariance::has_inverse_factor() const {
  for (const auto& b : blocks_) {
    if (!b->has_inverse_factor()) return false;
  }
  return true;
}

namespace {

class RestrictedCovariance final : public CovarianceModel {
 public:
  RestrictedCovariance(CovariancePtr inner, unsigned allowed, std::string label)
      : inner_(std::move(inner)), allowed_(allowed), label_(std::move(label)) {}

  Index dim() const override { return inner_->dim(); }
  Index factor_cols() const override { return inner_->factor_cols(); }

  Vector apply(const Vector& x) const override {
    check(kCovApply, "apply");
    return inner_->apply(x);
  }
  Vector apply_inverse(const Vector& x) const override {
    check(kCovInverse, "apply_inverse");
    return inner_->apply_inverse(x);
  }
  Vector apply_factor(const Vector& x) const override {
    check(kCovFactor, "apply_factor");
    return inner_->apply_factor(x);
  }
  Vector apply_factor_transpose(const Vector& x) const override {
    check(kCovFactorTranspose, "apply_factor_transpose");
    return inner_->apply_factor_transpose(x);
  }
  Vector apply_inverse_factor(const Vector& x) const override {
    check(kCovInverseFactor, "apply_inverse_factor");
    return inner_->apply_inverse_factor(x);
  }
  bool has_inverse_factor() const override { return inner_->has_inverse_factor(); }

 private:
  void check(unsigned bit, const char* op) const {
    if (!(allowed_ & bit)) {
      throw ContractViolation(label_ + ": covariance method '" + op +
                              "' is not licensed for this formulation");
    }
  }

  CovariancePtr inner_;
  unsigned allowed_;
  std::string label_;
};

}  // namespace

CovariancePtr restrict_covariance(CovariancePtr model, unsigned allowed, std::string label) {
  return std::make_shared<RestrictedCovariance>(std::move(model), allowed, std::move(label));
}

double symmetric_spectral_norm(const Matrix& m, Index dense_limit) {
  require_dim(m.rows() == m.cols(), "symmetric_spectral_norm: matrix must be square");
  if (m.rows() == 0) return 0.0;
  if (m.rows() <= dense_limit) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Vector v = Vector::Ones(m.rows()).normalized();
  double lambda = 0.0;
  for (int it = 0; it < 50; ++it) {
    Vector w = m * v;
    lambda = w.norm();
    if (lambda == 0.0) return 0.0;
    v = w / lambda;
  }
  return lambda;
}

std::vector<CovariancePtr> sample_error_covariance(const EvolutionFamily& reference_steps,
                                                   const EvolutionFamily& approx_steps,
                                                   const CovarianceModel& background,
                                                   const Vector& background_mean,
                                                   Index n_samples, std::uint64_t seed) {
  require_dim(n_samples >= 2, "sample_error_covariance: need at least two samples");
  const Index d = reference_steps.state_dim();
  require_dim(background.dim() == d && background_mean.size() == d,
              "sample_error_covariance: background dimension mismatch");
  Matrix states(d, n_samples);
  for (Index i = 0; i < n_samples; ++i) {
    Philox rng(seed, static_cast<std::uint64_t>(i));
    states.col(i) = background_mean + background.apply_factor(rng.gaussian_vector(background.factor_cols()));
  }
  return sample_error_covariance_from_states(reference_steps, approx_steps, states);
}

std::vector<CovariancePtr> sample_error_covariance_from_states(
    const EvolutionFamily& reference_steps, const EvolutionFamily& approx_steps,
    const Matrix& initial_states) {
  const Index d = reference_steps.state_dim();
  const Index n_T = reference_steps.n_windows();
  const Index n = initial_states.cols();
  require_dim(approx_steps.state_dim() == d && approx_steps.n_windows() == n_T,
              "sample_error_covariance: model families must share dimensions");
  require_dim(initial_states.rows() == d, "sample_error_covariance: state dimension mismatch");
  require_dim(n >= 2, "sample_error_covariance: need at least two samples");

  Matrix ref = initial_states;
  Matrix approx = initial_states;
  std::vector<CovariancePtr> result;
  result.reserve(static_cast<std::size_t>(n_T));
  for (Index l = 0; l < n_T; ++l) {
    for (Index i = 0; i < n; ++i) {
      ref.col(i) = reference_steps.step(l).apply(ref.col(i));
      approx.col(i) = approx_steps.step(l).apply(approx.col(i));
    }
    Matrix diff = ref - approx;
    Vector mean = diff.rowwise().mean();
    diff.colwise() -= mean;
    Matrix sample_cov = (diff * diff.transpose()) / static_cast<double>(n - 1);
    const double nugget = 1e-12 + 1e-6 * symmetric_spectral_norm(sample_cov);
    sample_cov.diagonal().array() += nugget;
    result.push_back(std::make_shared<DenseSPDCovariance>(std::move(sample_cov)));
  }
  return result;
}

}  // namespace wc4dvar
