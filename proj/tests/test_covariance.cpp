/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "support/test_support.hpp"
#include "wc4dvar/covariance.hpp"
#include "wc4dvar/models.hpp"

using namespace wc4dvar;
using wc4dvar::testing::random_spd;

namespace {

void check_model_contract(const CovarianceModel& model, std::uint64_t seed) {
  Philox rng(seed, 0);
  const Vector x = rng.gaussian_vector(model.dim());
  const Vector y = rng.gaussian_vector(model.dim());
  const Vector fx = rng.gaussian_vector(model.factor_cols());

  // Symmetry.
  CHECK(model.apply(x).dot(y) == doctest::Approx(x.dot(model.apply(y))).epsilon(1e-10));
  // Factor consistency G G^T = Gamma.
  const Vector via_factor = model.apply_factor(model.apply_factor_transpose(x));
  CHECK((via_factor - model.apply(x)).norm() < 1e-10 * (1.0 + model.apply(x).norm()));
  // Inverse round trip.
  CHECK((model.apply(model.apply_inverse(x)) - x).norm() < 1e-8 * x.norm());
  // Factor transpose is the adjoint of the factor.
  CHECK(model.apply_factor(fx).dot(x) ==
        doctest::Approx(fx.dot(model.apply_factor_transpose(x))).epsilon(1e-10));
}

}  // namespace

TEST_CASE("scaled identity covariance") {
  const ScaledIdentityCovariance cov(3, 4.0);
  Vector x(3);
  x << 1, -2, 3;
  CHECK((cov.apply_factor(x) - 2.0 * x).norm() == 0.0);
  CHECK((cov.apply_inverse(x) - 0.25 * x).norm() == 0.0);
  CHECK((cov.apply_inverse_factor(x) - 0.5 * x).norm() == 0.0);
  check_model_contract(cov, 31);
  CHECK_THROWS_AS(ScaledIdentityCovariance(3, 0.0), SingularityError);
}

TEST_CASE("dense SPD covariance") {
  Philox rng(17, 0);
  const Matrix sigma = random_spd(6, rng, 0.3, 3.0);
  const DenseSPDCovariance cov(sigma);
  check_model_contract(cov, 18);
  const Vector x = rng.gaussian_vector(6);
  CHECK((cov.apply(x) - sigma * x).norm() < 1e-12 * x.norm());
  // No symmetric inverse square root is advertised for dense models.
  CHECK(!cov.has_inverse_factor());
  CHECK_THROWS_AS(cov.apply_inverse_factor(x), ContractViolation);
  CHECK_THROWS_AS(DenseSPDCovariance(Matrix(-sigma)), SingularityError);
}

TEST_CASE("block diagonal covariance distributes blockwise") {
  std::vector<CovariancePtr> blocks = {std::make_shared<ScaledIdentityCovariance>(1, 1.0),
                                       std::make_shared<ScaledIdentityCovariance>(1, 9.0)};
  const BlockDiagCovariance cov(std::move(blocks));
  Vector x(2);
  x << 3.0, 3.0;
  const Vector inv = cov.apply_inverse(x);
  CHECK(inv[0] == doctest::Approx(3.0));
  CHECK(inv[1] == doctest::Approx(1.0 / 3.0));
  check_model_contract(cov, 19);
}

TEST_CASE("elliptic prior matches the dense assembly oracle") {
  const Mesh1D mesh{12};  // 11 interior nodes
  SparseMatrix mass, stiffness;
  assemble_heat_matrices(mesh, [](double) { return 1.0; }, mass, stiffness);
  const double gamma = 0.1;
  const EllipticPriorCovariance cov(stiffness, mass, gamma, 1.0);
  check_model_contract(cov, 23);

  const Matrix shifted = Matrix(gamma * stiffness + mass);
  const Matrix inv_shifted = shifted.inverse();
  const Matrix expected = inv_shifted * Matrix(mass) * inv_shifted;
  const Matrix actual = densify(covariance_apply_op(
      std::make_shared<EllipticPriorCovariance>(stiffness, mass, gamma, 1.0)));
  CHECK((actual - expected).norm() < 1e-10 * expected.norm());

  // Positive definiteness at desk scale.
  Eigen::SelfAdjointEigenSolver<Matrix> es(actual, Eigen::EigenvaluesOnly);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("elliptic prior is equivariant under mesh-node permutation") {
  const Mesh1D mesh{6};  // 5 interior nodes
  SparseMatrix mass, stiffness;
  assemble_heat_matrices(mesh, [](double x) { return 1.5 + x; }, mass, stiffness);
  const Index d = 5;
  Philox rng(29, 0);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(d);
  perm.setIdentity();
  std::vector<Index> order = {3, 0, 4, 1, 2};
  for (Index i = 0; i < d; ++i) perm.indices()[i] = static_cast<int>(order[static_cast<std::size_t>(i)]);

  const SparseMatrix pm = Matrix(perm * Matrix(mass) * perm.transpose()).sparseView();
  const SparseMatrix pk = Matrix(perm * Matrix(stiffness) * perm.transpose()).sparseView();
  const Matrix gamma_orig =
      densify(covariance_apply_op(std::make_shared<EllipticPriorCovariance>(stiffness, mass, 0.2, 1.0)));
  const Matrix gamma_perm =
      densify(covariance_apply_op(std::make_shared<EllipticPriorCovariance>(pk, pm, 0.2, 1.0)));
  CHECK((gamma_perm - Matrix(perm * gamma_orig * perm.transpose())).norm() < 1e-10);
}

TEST_CASE("capability restriction turns unlicensed calls into contract violations") {
  auto inner = std::make_shared<ScaledIdentityCovariance>(2, 2.0);
  const CovariancePtr restricted = restrict_covariance(inner, kCovApply, "test");
  Vector x(2);
  x << 1, 1;
  CHECK_NOTHROW(restricted->apply(x));
  CHECK_THROWS_AS(restricted->apply_inverse(x), ContractViolation);
  CHECK_THROWS_AS(restricted->apply_factor(x), ContractViolation);
  CHECK_THROWS_AS(restricted->apply_inverse_factor(x), ContractViolation);
}

TEST_CASE("sampled model-error covariance: identical families collapse to the nugget") {
  EvolutionFamily fam(2, {LinearOperator::scaled_identity(2, 0.5),
                          LinearOperator::scaled_identity(2, 0.5)});
  const ScaledIdentityCovariance background(2, 1.0);
  Vector mean = Vector::Zero(2);
  const auto qs = sample_error_covariance(fam, fam, background, mean, 10, 99);
  REQUIRE(qs.size() == 2);
  for (const auto& q : qs) {
    const Matrix dense = densify(covariance_apply_op(q));
    CHECK((dense - 1e-12 * Matrix::Identity(2, 2)).norm() < 1e-24);
  }
}

TEST_CASE("sampled model-error covariance: hand-checked scalar case") {
  // One window; reference doubles the state, the approximate model keeps it.
  EvolutionFamily reference(1, {LinearOperator::scaled_identity(1, 2.0)});
  EvolutionFamily approx(1, {LinearOperator::scaled_identity(1, 1.0)});
  Matrix states(1, 2);
  states << 1.0, -1.0;
  const auto qs = sample_error_covariance_from_states(reference, approx, states);
  REQUIRE(qs.size() == 1);
  // Differences after the window are {1, -1}; the (n-1)-divisor sample
  // variance is 2, plus the nugget 1e-12 + 1e-6 * 2.
  const double expected = 2.0 + 1e-12 + 2e-6;
  CHECK(densify(covariance_apply_op(qs[0]))(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("sampled model-error covariance is SPD with spectral floor") {
  const Mesh1D mesh{16};
  const FEMSystem ref_sys = heat_system(mesh, [](double x) { return 2.0 + std::sin(20.0 * x); }, 1e-3);
  const FEMSystem mod_sys = heat_system(mesh, [](double) { return 2.0; }, 1e-3);
  const Index d = mesh.n_interior();
  EvolutionFamily reference(d, {ref_sys.step, ref_sys.step, ref_sys.step});
  EvolutionFamily model(d, {mod_sys.step, mod_sys.step, mod_sys.step});
  auto background = std::make_shared<EllipticPriorCovariance>(mod_sys.stiffness, mod_sys.mass, 0.1, 1.0);
  Philox rng(5, 0);
  Vector mean = rng.gaussian_vector(d);
  const auto qs = sample_error_covariance(reference, model, *background, mean, 40, 12345);
  REQUIRE(qs.size() == 3);
  for (const auto& q : qs) {
    const Matrix dense = densify(covariance_apply_op(q));
    CHECK((dense - dense.transpose()).norm() < 1e-14 * dense.norm());
    Matrix raw = dense;
    Eigen::SelfAdjointEigenSolver<Matrix> es(raw, Eigen::EigenvaluesOnly);
    const double nugget_floor = 1e-12;
    CHECK(es.eigenvalues().minCoeff() >= nugget_floor * (1.0 - 1e-8));
  }
  CHECK_THROWS_AS(sample_error_covariance(reference, model, *background, mean, 1, 1),
                  DimensionError);
}

TEST_CASE("spectral norm helper agrees between dense and power paths") {
  Philox rng(41, 0);
  // Clear spectral gap: the 50-step power fallback resolves the norm tightly.
  Matrix q = wc4dvar::testing::random_orthogonal(20, rng);
  Vector vals(20);
  for (Index i = 0; i < 20; ++i) vals[i] = 0.1 + 0.1 * static_cast<double>(i);
  vals[19] = 5.0;
  const Matrix m = q * vals.asDiagonal() * q.transpose();
  const double dense = symmetric_spectral_norm(m, 500);
  const double power = symmetric_spectral_norm(m, 4);  // force the power-iteration path
  CHECK(dense == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(power == doctest::Approx(dense).epsilon(1e-6));

  // Gapless random case: the fallback still lands within a few percent.
  const Matrix m2 = random_spd(20, rng, 0.1, 5.0);
  CHECK(symmetric_spectral_norm(m2, 4) ==
        doctest::Approx(symmetric_spectral_norm(m2, 500)).epsilon(0.05));
}
