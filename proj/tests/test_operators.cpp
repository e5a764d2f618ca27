/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/LU>

#include "support/test_support.hpp"
#include "wc4dvar/models.hpp"
#include "wc4dvar/operators.hpp"

using namespace wc4dvar;
using wc4dvar::testing::adjoint_defect;
using wc4dvar::testing::dense_coupling_forward;

namespace {

EvolutionFamily random_family(Index d, Index n_windows, std::uint64_t seed) {
  Philox rng(seed, 0);
  std::vector<LinearOperator> steps;
  for (Index l = 0; l < n_windows; ++l) {
    Matrix m(d, d);
    for (Index j = 0; j < d; ++j) m.col(j) = rng.gaussian_vector(d);
    steps.push_back(LinearOperator::from_dense(0.4 * m));
  }
  return EvolutionFamily(d, std::move(steps));
}

}  // namespace

TEST_CASE("problem dims recompute from parts") {
  ProblemDims dims{11, 4, 7};
  dims.validate();
  CHECK(dims.trajectory_dim() == 55);
  CHECK(dims.measurement_dim() == 35);
  CHECK_THROWS_AS((ProblemDims{0, 1, 1}.validate()), DimensionError);
  CHECK_THROWS_AS((ProblemDims{1, -1, 1}.validate()), DimensionError);
}

TEST_CASE("linear operator checks shapes and adjoints") {
  Philox rng(3, 0);
  Matrix m(4, 6);
  for (Index j = 0; j < 6; ++j) m.col(j) = rng.gaussian_vector(4);
  const LinearOperator op = LinearOperator::from_dense(m);
  CHECK(op.rows() == 4);
  CHECK(op.cols() == 6);
  CHECK(adjoint_defect(op) < 1e-12);
  CHECK_THROWS_AS(op.apply(Vector::Zero(5)), DimensionError);
  CHECK(op.apply(Vector::Zero(6)).norm() == 0.0);

  const LinearOperator two = compose(op, op.transposed());
  CHECK((densify(two) - m * m.transpose()).norm() < 1e-12);
}

TEST_CASE("compose_evolution follows the composition convention") {
  // Identity at coincident indices.
  const EvolutionFamily fam = random_family(4, 3, 5);
  const LinearOperator id = compose_evolution(fam, 3, 3);
  Philox rng(8, 0);
  const Vector x = rng.gaussian_vector(4);
  CHECK((id.apply(x) - x).norm() == 0.0);

  // Scalar doubling steps compose multiplicatively.
  EvolutionFamily doubling(1, {LinearOperator::scaled_identity(1, 2.0),
                               LinearOperator::scaled_identity(1, 2.0)});
  Vector one(1);
  one[0] = 1.0;
  CHECK(compose_evolution(doubling, 0, 2).apply(one)[0] == doctest::Approx(4.0).epsilon(1e-14));

  CHECK_THROWS_AS(compose_evolution(fam, 2, 1), DimensionError);

  // Dense oracle on the heat model: two explicit step-matrix products.
  const Mesh1D mesh{12};  // 11 interior nodes
  const FEMSystem sys = heat_system(mesh, [](double) { return 1.0; }, 1e-3);
  const EvolutionFamily heat(11, {sys.step, sys.step});
  const Matrix step_dense = densify(sys.step);
  Vector e1 = Vector::Zero(11);
  e1[0] = 1.0;
  const Vector expected = step_dense * (step_dense * e1);
  CHECK((compose_evolution(heat, 0, 2).apply(e1) - expected).norm() < 1e-12);
}

TEST_CASE("coupling recursions match hand values") {
  // n_windows = 0: both directions are the identity.
  EvolutionFamily trivial(3, {});
  const CouplingOperator l0(trivial, CouplingDirection::forward);
  Philox rng(4, 0);
  const Vector x0 = rng.gaussian_vector(3);
  CHECK((l0.apply(x0) - x0).norm() == 0.0);
  CHECK((CouplingOperator(trivial, CouplingDirection::inverse).apply(x0) - x0).norm() == 0.0);

  // Scalar steps (2, 3): forward annihilates the exact trajectory, inverse rebuilds it.
  EvolutionFamily scalar(1, {LinearOperator::scaled_identity(1, 2.0),
                             LinearOperator::scaled_identity(1, 3.0)});
  const CouplingOperator fwd(scalar, CouplingDirection::forward);
  const CouplingOperator inv(scalar, CouplingDirection::inverse);
  Vector traj(3);
  traj << 1.0, 2.0, 6.0;
  Vector residuals(3);
  residuals << 1.0, 0.0, 0.0;
  CHECK((fwd.apply(traj) - residuals).norm() < 1e-14);
  CHECK((inv.apply(residuals) - traj).norm() < 1e-14);
}

TEST_CASE("coupling matches the dense block oracle") {
  const EvolutionFamily fam = random_family(3, 4, 21);
  const Matrix dense_l = dense_coupling_forward(fam);
  const CouplingOperator fwd(fam, CouplingDirection::forward);
  const CouplingOperator inv(fam, CouplingDirection::inverse);
  Philox rng(22, 0);
  const Vector x = rng.gaussian_vector(15);

  CHECK((fwd.apply(x) - dense_l * x).norm() < 1e-12 * x.norm());
  CHECK((fwd.apply_transpose(x) - dense_l.transpose() * x).norm() < 1e-12 * x.norm());
  CHECK((inv.apply(x) - dense_l.lu().solve(x)).norm() < 1e-10 * x.norm());
  CHECK((fwd.apply(inv.apply(x)) - x).norm() < 1e-10 * x.norm());
  CHECK((fwd.apply_transpose(inv.apply_transpose(x)) - x).norm() < 1e-10 * x.norm());

  CHECK(adjoint_defect(fwd.linop()) < 1e-12);
  CHECK(adjoint_defect(inv.linop()) < 1e-12);

  // Unit diagonal, vanishing upper blocks, determinant one.
  const Matrix materialized = densify(fwd.linop());
  for (Index i = 0; i < materialized.rows(); ++i) {
    CHECK(materialized(i, i) == doctest::Approx(1.0).epsilon(1e-12));
    for (Index j = i + 1; j < materialized.cols(); ++j) {
      CHECK(std::abs(materialized(i, j)) < 1e-14);
    }
  }
  CHECK(materialized.lu().determinant() == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("transpose audit counter counts only transposes") {
  const EvolutionFamily fam = random_family(2, 3, 9);
  Philox rng(1, 0);
  const Vector x = rng.gaussian_vector(8);
  const CouplingOperator inv(fam, CouplingDirection::inverse);
  fam.reset_transpose_counter();
  (void)inv.apply(x);
  CHECK(fam.transpose_applications() == 0);
  (void)inv.apply_transpose(x);
  CHECK(fam.transpose_applications() == 3);
}

TEST_CASE("observation block stacks the per-step map") {
  Philox rng(2, 0);
  Matrix per(2, 4);
  for (Index j = 0; j < 4; ++j) per.col(j) = rng.gaussian_vector(2);
  const ObservationOperator obs(LinearOperator::from_dense(per), 3);
  const Vector traj = rng.gaussian_vector(12);
  const Vector stacked = obs.block().apply(traj);
  for (Index b = 0; b < 3; ++b) {
    CHECK((stacked.segment(2 * b, 2) - per * traj.segment(4 * b, 4)).norm() < 1e-14);
  }
  CHECK(adjoint_defect(obs.block()) < 1e-12);
}

TEST_CASE("sensor designs validate their indices") {
  CHECK_THROWS_AS(SensorDesign(3, {0, 0}), DimensionError);
  CHECK_THROWS_AS(SensorDesign(3, {2, 1}), DimensionError);
  CHECK_THROWS_AS(SensorDesign(3, {3}), DimensionError);
  CHECK(SensorDesign::full(4).n_selected() == 4);
  CHECK(SensorDesign::empty(4).n_selected() == 0);
}

TEST_CASE("selection embedding selects the same rows from every block") {
  // Full selection is the identity.
  const LinearOperator full = embed_selection(SensorDesign::full(3), 2);
  Philox rng(5, 0);
  const Vector v = rng.gaussian_vector(6);
  CHECK((full.apply(v) - v).norm() == 0.0);

  // Transpose picks (b, e) out of (a..f) for index {1} over two blocks.
  const LinearOperator pick = embed_selection(SensorDesign(3, {1}), 2);
  Vector abc(6);
  abc << 1, 2, 3, 4, 5, 6;
  const Vector picked = pick.apply_transpose(abc);
  CHECK(picked.size() == 2);
  CHECK(picked[0] == 2.0);
  CHECK(picked[1] == 5.0);

  // Empty designs produce a zero-column operator.
  const LinearOperator none = embed_selection(SensorDesign::empty(3), 2);
  CHECK(none.cols() == 0);
  CHECK(none.apply(Vector(0)).norm() == 0.0);

  // Columns are orthonormal: embed^T embed = identity.
  const LinearOperator emb = embed_selection(SensorDesign(4, {0, 2}), 3);
  const Matrix gram = densify(compose(emb.transposed(), emb));
  CHECK((gram - Matrix::Identity(6, 6)).norm() < 1e-14);
  CHECK(adjoint_defect(emb) < 1e-12);

  // Composition against a dense matrix equals a dense column gather.
  Matrix a(5, 6);
  for (Index j = 0; j < 6; ++j) a.col(j) = rng.gaussian_vector(5);
  const SensorDesign design(3, {0, 2});
  const LinearOperator gathered = compose(LinearOperator::from_dense(a), embed_selection(design, 2));
  Matrix expected(5, 4);
  expected.col(0) = a.col(0);
  expected.col(1) = a.col(2);
  expected.col(2) = a.col(3);
  expected.col(3) = a.col(5);
  CHECK((densify(gathered) - expected).norm() < 1e-14);
}
