/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "wc4dvar/problem.hpp"

namespace wc4dvar {

/// Uniform partition of (0,1). States carry interior nodes only; homogeneous
/// Dirichlet rows are eliminated during assembly.
struct Mesh1D {
  Index n_cells = 128;

  double h() const { return 1.0 / static_cast<double>(n_cells); }
  Index n_interior() const { return n_cells - 1; }
  double node(Index i) const { return static_cast<double>(i) * h(); }
  double interior_node(Index i) const { return static_cast<double>(i + 1) * h(); }
};

/// Structured triangulation of (-1,1)^2: n x n vertices, two triangles per
/// cell. Homogeneous Neumann problem, all vertices are DOFs.
struct Mesh2D {
  Index n = 17;  // vertices per side

  Index n_vertices() const { return n * n; }
  double cell_h() const { return 2.0 / static_cast<double>(n - 1); }
  double vertex_x(Index i) const { return -1.0 + static_cast<double>(i) * cell_h(); }
  double vertex_y(Index j) const { return -1.0 + static_cast<double>(j) * cell_h(); }
  Index vertex_id(Index i, Index j) const { return j * n + i; }
};

using ScalarField1D = std::function<double(double)>;
using VelocityField2D = std::function<Eigen::Vector2d(double, double)>;

/// P1 mass and diffusivity-weighted stiffness on the interior nodes
/// (3-point Gauss quadrature per element).
void assemble_heat_matrices(const Mesh1D& mesh, const ScalarField1D& kappa, SparseMatrix& mass,
                            SparseMatrix& stiffness);

/// P1 mass, unit-diffusivity stiffness and advection matrices on all
/// vertices (3-point midpoint quadrature per triangle; the velocity is
/// evaluated analytically at the quadrature points).
void assemble_ad_matrices(const Mesh2D& mesh, const VelocityField2D& velocity, SparseMatrix& mass,
                          SparseMatrix& stiffness, SparseMatrix& advection);

/// Assembled matrices plus the factored one-step implicit Euler map
/// u -> (N + dt*B + dt*K)^{-1} N u (B absent for the heat problem).
struct FEMSystem {
  SparseMatrix mass;
  SparseMatrix stiffness;
  SparseMatrix advection;  // 0x0 when unused
  double dt = 0.0;
  LinearOperator step;
};

FEMSystem heat_system(const Mesh1D& mesh, const ScalarField1D& kappa, double dt);
FEMSystem advection_diffusion_system(const Mesh2D& mesh, const VelocityField2D& velocity, double dt);

/// Observation rows by P1 interpolation at sensor coordinates.
LinearOperator interpolation_operator_1d(const Mesh1D& mesh, const std::vector<double>& sensors);
LinearOperator interpolation_operator_2d(const Mesh2D& mesh,
                                         const std::vector<Eigen::Vector2d>& sensors);

/// 1D heat benchmark. The reference model uses the oscillatory diffusivity
/// kappa(x) = 2 + sin(2*pi*x/epsilon); the assimilation model uses the
/// homogenized constant sqrt(3). The mesh must resolve the oscillation
/// (h <= epsilon/8).
struct HeatModelConfig {
  Index n_cells = 128;
  Index n_windows = 10;
  Index steps_per_window = 4;
  double final_time = 4e-2;
  double epsilon = 0.0625;  // 2^-4
  double prior_gamma = 0.1;
  double prior_delta = 1.0;
  Index n_sensors = 28;
  double sensor_lo = 0.025;
  double sensor_hi = 0.975;
  Index n_error_samples = 40;
  double noise_fraction = 0.02;
  std::optional<double> noise_std_override;  // fixed per-block sigma when set
  double true_bump_center = 0.7;
  double bump_width = 0.08;
  double background_bump_center = 0.2;
  double background_bump_scale = 0.2;

  double dt() const { return final_time / static_cast<double>(n_windows * steps_per_window); }
  static HeatModelConfig desk();
  static HeatModelConfig paper();
};

/// 2D advection-diffusion benchmark with a cavity-like velocity field
/// v(x,y) = (2y(1-x^2), -2x(1-y)^2). Model error is synthetic:
/// Q_l = q_l^2 I with q_l = alpha * ||M_{0->l} c0||_2 / sqrt(n_s).
struct ADModelConfig {
  Index grid_n = 17;
  Index n_windows = 10;
  Index steps_per_window = 5;
  double final_time = 2.0;
  double prior_gamma = 2.70;
  double prior_delta = 2.5;
  double error_alpha = 0.05;
  Index sensor_grid_n = 9;
  double sensor_margin = 0.2;
  double noise_fraction = 0.02;
  std::optional<double> noise_std_override;

  double dt() const { return final_time / static_cast<double>(n_windows * steps_per_window); }
  static ADModelConfig desk();
  static ADModelConfig paper();
};

/// A ready assimilation instance plus the separate reference dynamics and
/// truth used to simulate data.
struct ModelProblem {
  DAProblem problem;
  EvolutionFamily reference_evolution;  // data-generating dynamics
  Vector truth_initial;
  std::vector<double> noise_std;  // per-block observation noise sigma
  std::vector<Eigen::Vector2d> sensor_coords;
};

ModelProblem export_heat_problem(const HeatModelConfig& config, std::uint64_t seed);
ModelProblem export_ad_problem(const ADModelConfig& config);

}  // namespace wc4dvar
