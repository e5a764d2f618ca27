/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "support/test_support.hpp"
#include "wc4dvar/models.hpp"

using namespace wc4dvar;

TEST_CASE("1d assembly matches the two-element hand computation") {
  const Mesh1D mesh{2};
  SparseMatrix mass, stiffness;
  assemble_heat_matrices(mesh, [](double) { return 1.0; }, mass, stiffness);
  REQUIRE(mass.rows() == 1);
  CHECK(Matrix(stiffness)(0, 0) == doctest::Approx(4.0).epsilon(1e-14));
  CHECK(Matrix(mass)(0, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  auto assemble_negative = [&] {
    SparseMatrix m, k;
    assemble_heat_matrices(mesh, [](double) { return -1.0; }, m, k);
  };
  CHECK_THROWS_AS(assemble_negative(), SingularityError);
}

TEST_CASE("1d stiffness annihilates constants before elimination") {
  // On interior nodes, K * 1 vanishes except next to the boundary, where the
  // eliminated columns would have contributed. Check the interior rows only.
  const Mesh1D mesh{10};
  SparseMatrix mass, stiffness;
  assemble_heat_matrices(mesh, [](double) { return 1.0; }, mass, stiffness);
  const Vector ones = Vector::Ones(mesh.n_interior());
  const Vector k1 = Matrix(stiffness) * ones;
  for (Index i = 1; i + 1 < mesh.n_interior(); ++i) CHECK(std::abs(k1[i]) < 1e-12);
}

TEST_CASE("heat step operator decays energy and has spectral radius below one") {
  const Mesh1D mesh{24};
  const FEMSystem sys = heat_system(mesh, [](double) { return std::sqrt(3.0); }, 2e-4);
  const Matrix step = densify(sys.step);
  const Eigen::EigenSolver<Matrix> es(step);
  CHECK(es.eigenvalues().cwiseAbs().maxCoeff() < 1.0);

  Philox rng(3, 0);
  Vector u = rng.gaussian_vector(mesh.n_interior());
  const Matrix n_dense = Matrix(sys.mass);
  double previous = std::sqrt(u.dot(n_dense * u));
  for (int it = 0; it < 5; ++it) {
    u = sys.step.apply(u);
    const double current = std::sqrt(u.dot(n_dense * u));
    CHECK(current <= previous * (1.0 + 1e-12));
    previous = current;
  }
}

TEST_CASE("heat solution converges at second order in h") {
  // Fixed smooth initial bump, homogenized diffusivity, dt tied to h^2 so the
  // spatial error dominates. Compare snapshots at probe points across four refinements.
  const double t_end = 4e-3;
  std::vector<double> probes = {0.31, 0.5, 0.72};
  std::vector<Vector> at_probes;
  for (Index cells : {16, 32, 64, 128}) {
    const Mesh1D mesh{cells};
    const double dt = 0.256 * mesh.h() * mesh.h();
    const Index steps = static_cast<Index>(std::round(t_end / dt));
    const FEMSystem sys = heat_system(mesh, [](double) { return std::sqrt(3.0); }, t_end / steps);
    Vector u(mesh.n_interior());
    for (Index i = 0; i < mesh.n_interior(); ++i) {
      const double x = mesh.interior_node(i);
      u[i] = std::exp(-0.5 * std::pow((x - 0.5) / 0.12, 2));
    }
    for (Index s = 0; s < steps; ++s) u = sys.step.apply(u);
    const LinearOperator probe = interpolation_operator_1d(mesh, probes);
    at_probes.push_back(probe.apply(u));
  }
  std::vector<double> errs;
  for (std::size_t i = 0; i + 1 < at_probes.size(); ++i) {
    errs.push_back((at_probes[i] - at_probes[i + 1]).norm());
  }
  for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
    const double order = std::log2(errs[i] / errs[i + 1]);
    CHECK(order >= 1.8);
  }
}

TEST_CASE("2d assembly: constants are steady under pure diffusion with Neumann data") {
  const Mesh2D mesh{5};
  const FEMSystem sys =
      advection_diffusion_system(mesh, [](double, double) { return Eigen::Vector2d{0.0, 0.0}; }, 0.01);
  const Vector ones = Vector::Ones(mesh.n_vertices());
  CHECK((sys.step.apply(ones) - ones).norm() < 1e-10);
  // Mass conservation under v = 0: 1^T N u is invariant.
  Philox rng(9, 0);
  const Vector u = rng.gaussian_vector(mesh.n_vertices());
  const Vector stepped = sys.step.apply(u);
  const double before = ones.dot(Matrix(sys.mass) * u);
  const double after = ones.dot(Matrix(sys.mass) * stepped);
  CHECK(after == doctest::Approx(before).epsilon(1e-8));
}

TEST_CASE("2d one step matches a dense assembled solve on a 3x3 grid") {
  const Mesh2D mesh{3};
  const auto velocity = [](double x, double y) {
    return Eigen::Vector2d{2.0 * y * (1.0 - x * x), -2.0 * x * (1.0 - y * y)};
  };
  const double dt = 0.02;
  const FEMSystem sys = advection_diffusion_system(mesh, velocity, dt);
  const Matrix system = Matrix(sys.mass) + dt * Matrix(sys.advection) + dt * Matrix(sys.stiffness);
  Philox rng(11, 0);
  const Vector c = rng.gaussian_vector(mesh.n_vertices());
  const Vector expected = system.lu().solve(Matrix(sys.mass) * c);
  CHECK((sys.step.apply(c) - expected).norm() < 1e-11 * expected.norm());
  // Transpose against the dense oracle too.
  const Vector expected_t = Matrix(sys.mass) * system.transpose().lu().solve(c);
  CHECK((sys.step.apply_transpose(c) - expected_t).norm() < 1e-11 * expected_t.norm());
}

TEST_CASE("2d advection matrix respects the divergence-free field") {
  // div v = -4xy + 4xy = 0 and v . n = 0 on the boundary, so both B*1
  // (advecting a constant) and B^T*1 (mass-conservation column sums) vanish;
  // the midpoint rule integrates the degree-2 integrands exactly.
  const Mesh2D mesh{7};
  const auto velocity = [](double x, double y) {
    return Eigen::Vector2d{2.0 * y * (1.0 - x * x), -2.0 * x * (1.0 - y * y)};
  };
  SparseMatrix mass, stiffness, advection;
  assemble_ad_matrices(mesh, velocity, mass, stiffness, advection);
  const Vector ones = Vector::Ones(mesh.n_vertices());
  CHECK((Matrix(advection) * ones).norm() < 1e-12);
  CHECK((Matrix(advection).transpose() * ones).norm() < 1e-12);

  // Mass conservation through a full step with the real field.
  const FEMSystem sys = advection_diffusion_system(mesh, velocity, 0.02);
  Philox rng(15, 0);
  const Vector c = rng.gaussian_vector(mesh.n_vertices());
  const double before = ones.dot(Matrix(sys.mass) * c);
  const double after = ones.dot(Matrix(sys.mass) * sys.step.apply(c));
  CHECK(after == doctest::Approx(before).epsilon(1e-8));
}

TEST_CASE("interpolation rows reproduce nodal and affine data") {
  const Mesh1D mesh{8};
  // A sensor on a mesh node yields a canonical basis row.
  const LinearOperator nodal = interpolation_operator_1d(mesh, {mesh.interior_node(2)});
  Vector u = Vector::Zero(mesh.n_interior());
  u[2] = 1.0;
  CHECK(nodal.apply(u)[0] == doctest::Approx(1.0).epsilon(1e-14));

  // 2D: P1 interpolation is exact on affine functions.
  const Mesh2D mesh2{6};
  std::vector<Eigen::Vector2d> sensors = {{-0.31, 0.42}, {0.11, -0.77}, {0.63, 0.59}};
  const LinearOperator interp = interpolation_operator_2d(mesh2, sensors);
  Vector affine(mesh2.n_vertices());
  for (Index j = 0; j < mesh2.n; ++j) {
    for (Index i = 0; i < mesh2.n; ++i) {
      affine[mesh2.vertex_id(i, j)] = 1.7 + 0.3 * mesh2.vertex_x(i) - 1.1 * mesh2.vertex_y(j);
    }
  }
  const Vector vals = interp.apply(affine);
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const double expected = 1.7 + 0.3 * sensors[s].x() - 1.1 * sensors[s].y();
    CHECK(vals[static_cast<Index>(s)] == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK_THROWS_AS(interpolation_operator_2d(mesh2, {{1.5, 0.0}}), DimensionError);
}

TEST_CASE("heat problem export wires a consistent instance") {
  HeatModelConfig config;
  config.n_cells = 128;
  config.n_windows = 3;
  config.steps_per_window = 2;
  config.final_time = 6e-3;
  config.n_sensors = 8;
  config.n_error_samples = 8;
  const ModelProblem mp = export_heat_problem(config, 77);
  mp.problem.validate();
  CHECK(mp.problem.dims.state_dim == 127);
  CHECK(mp.problem.dims.n_sensors == 8);
  CHECK(mp.noise_std.size() == 4);

  // The reference (oscillatory) and assimilation (homogenized) trajectories
  // genuinely differ.
  Vector ref_state = mp.truth_initial;
  Vector mod_state = mp.truth_initial;
  for (Index l = 0; l < 3; ++l) {
    ref_state = mp.reference_evolution.step(l).apply(ref_state);
    mod_state = mp.problem.evolution.step(l).apply(mod_state);
  }
  CHECK((ref_state - mod_state).norm() > 1e-8);

  // Under-resolved oscillatory diffusivity is rejected.
  HeatModelConfig coarse = config;
  coarse.n_cells = 64;
  CHECK_THROWS_AS(export_heat_problem(coarse, 77), ConfigError);
}

TEST_CASE("ad2d problem export wires a consistent instance") {
  ADModelConfig config;
  config.grid_n = 9;
  config.n_windows = 4;
  config.steps_per_window = 2;
  const ModelProblem mp = export_ad_problem(config);
  mp.problem.validate();
  CHECK(mp.problem.dims.state_dim == 81);
  CHECK(mp.problem.dims.n_sensors == 81);
  CHECK(mp.sensor_coords.size() == 81);
  // Sensors stay inside the configured margin.
  for (const auto& p : mp.sensor_coords) {
    CHECK(std::abs(p.x()) <= 1.0 - config.sensor_margin + 1e-12);
    CHECK(std::abs(p.y()) <= 1.0 - config.sensor_margin + 1e-12);
  }
  // Model-error scale follows the advected truth magnitude.
  Vector state = mp.truth_initial;
  for (Index l = 1; l <= config.n_windows; ++l) {
    state = mp.problem.evolution.step(l - 1).apply(state);
    const double q = config.error_alpha * state.norm() / 9.0;  // sqrt(81)
    const Matrix dense = densify(covariance_apply_op(mp.problem.model_error[l - 1]));
    CHECK(dense(0, 0) == doctest::Approx(q * q).epsilon(1e-12));
  }
}
