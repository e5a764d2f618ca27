/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/models.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <memory>
#include <utility>

namespace wc4dvar {

namespace {

// 3-point Gauss-Legendre rule on [0,1].
constexpr double kGaussNode[3] = {0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417};
constexpr double kGaussWeight[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};

using Triplet = Eigen::Triplet<double>;

LinearOperator spd_step_operator(const SparseMatrix& mass, SparseMatrix system) {
  auto solver = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>();
  system.makeCompressed();
  solver->compute(system);
  if (solver->info() != Eigen::Success) {
    throw SingularityError("step operator: factorization of N + dt*K failed");
  }
  auto n = std::make_shared<SparseMatrix>(mass);
  const Index d = mass.rows();
  return LinearOperator(
      d, d,
      [solver, n](const Vector& x) { return Vector(solver->solve(*n * x)); },
      [solver, n](const Vector& x) { return Vector(*n * solver->solve(x)); });
}

LinearOperator lu_step_operator(const SparseMatrix& mass, SparseMatrix system) {
  system.makeCompressed();
  auto solver = std::make_shared<Eigen::SparseLU<SparseMatrix>>();
  solver->compute(system);
  if (solver->info() != Eigen::Success) {
    throw SingularityError("step operator: sparse LU of N + dt*B + dt*K failed");
  }
  SparseMatrix system_t = system.transpose();
  system_t.makeCompressed();
  auto solver_t = std::make_shared<Eigen::SparseLU<SparseMatrix>>();
  solver_t->compute(system_t);
  if (solver_t->info() != Eigen::Success) {
    throw SingularityError("step operator: sparse LU of the transposed system failed");
  }
  auto n = std::make_shared<SparseMatrix>(mass);
  const Index d = mass.rows();
  return LinearOperator(
      d, d,
      [solver, n](const Vector& x) { return Vector(solver->solve(*n * x)); },
      [solver_t, n](const Vector& x) { return Vector(*n * solver_t->solve(x)); });
}

}  // namespace

void assemble_heat_matrices(const Mesh1D& mesh, const ScalarField1D& kappa, SparseMatrix& mass,
                            SparseMatrix& stiffness) {
  require_dim(mesh.n_cells >= 2, "assemble_heat_matrices: need at least two cells");
  const double h = mesh.h();
  const Index d = mesh.n_interior();
  std::vector<Triplet> mass_t, stiff_t;
  mass_t.reserve(static_cast<std::size_t>(4 * mesh.n_cells));
  stiff_t.reserve(static_cast<std::size_t>(4 * mesh.n_cells));

  for (Index e = 0; e < mesh.n_cells; ++e) {
    const double x_left = mesh.node(e);
    double kappa_avg = 0.0;
    for (int q = 0; q < 3; ++q) {
      const double k = kappa(x_left + kGaussNode[q] * h);
      if (!(k > 0.0)) throw SingularityError("assemble_heat_matrices: diffusivity must be positive");
      kappa_avg += kGaussWeight[q] * k;
    }
    const double m_local[2][2] = {{2.0 * h / 6.0, h / 6.0}, {h / 6.0, 2.0 * h / 6.0}};
    const double k_scale = kappa_avg / h;
    const double k_local[2][2] = {{k_scale, -k_scale}, {-k_scale, k_scale}};
    const Index global[2] = {e, e + 1};
    for (int a = 0; a < 2; ++a) {
      for (int b = 0; b < 2; ++b) {
        const Index ga = global[a], gb = global[b];
        // Homogeneous Dirichlet: drop boundary rows/columns.
        if (ga < 1 || ga > d || gb < 1 || gb > d) continue;
        mass_t.emplace_back(ga - 1, gb - 1, m_local[a][b]);
        stiff_t.emplace_back(ga - 1, gb - 1, k_local[a][b]);
      }
    }
  }
  mass.resize(d, d);
  stiffness.resize(d, d);
  mass.setFromTriplets(mass_t.begin(), mass_t.end());
  stiffness.setFromTriplets(stiff_t.begin(), stiff_t.end());
}

void assemble_ad_matrices(const Mesh2D& mesh, const VelocityField2D& velocity, SparseMatrix& mass,
                          SparseMatrix& stiffness, SparseMatrix& advection) {
  require_dim(mesh.n >= 2, "assemble_ad_matrices: need at least a 2x2 vertex grid");
  const Index d = mesh.n_vertices();
  std::vector<Triplet> mass_t, stiff_t, adv_t;
  const Index n_cells = (mesh.n - 1) * (mesh.n - 1);
  mass_t.reserve(static_cast<std::size_t>(18 * n_cells));
  stiff_t.reserve(static_cast<std::size_t>(18 * n_cells));
  adv_t.reserve(static_cast<std::size_t>(18 * n_cells));

  auto assemble_triangle = [&](const Index v[3]) {
    Eigen::Vector2d p[3];
    for (int a = 0; a < 3; ++a) {
      p[a] = {mesh.vertex_x(v[a] % mesh.n), mesh.vertex_y(v[a] / mesh.n)};
    }
    const double det = (p[1].x() - p[0].x()) * (p[2].y() - p[0].y()) -
                       (p[2].x() - p[0].x()) * (p[1].y() - p[0].y());
    const double area = 0.5 * det;
    if (!(area > 1e-14)) throw SingularityError("assemble_ad_matrices: degenerate triangle");
    // Constant P1 gradients.
    Eigen::Vector2d grad[3];
    grad[0] = {(p[1].y() - p[2].y()) / det, (p[2].x() - p[1].x()) / det};
    grad[1] = {(p[2].y() - p[0].y()) / det, (p[0].x() - p[2].x()) / det};
    grad[2] = {(p[0].y() - p[1].y()) / det, (p[1].x() - p[0].x()) / det};
    // Edge midpoints: degree-2 exact quadrature with equal weights area/3.
    const Eigen::Vector2d mid[3] = {0.5 * (p[0] + p[1]), 0.5 * (p[1] + p[2]), 0.5 * (p[2] + p[0])};
    // phi_a at midpoint q.
    const double phi_at_mid[3][3] = {{0.5, 0.0, 0.5}, {0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}};

    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        const double m = (a == b ? 2.0 : 1.0) * area / 12.0;
        const double k = area * grad[a].dot(grad[b]);
        double adv = 0.0;
        for (int q = 0; q < 3; ++q) {
          adv += (area / 3.0) * velocity(mid[q].x(), mid[q].y()).dot(grad[b]) * phi_at_mid[a][q];
        }
        mass_t.emplace_back(v[a], v[b], m);
        stiff_t.emplace_back(v[a], v[b], k);
        adv_t.emplace_back(v[a], v[b], adv);
      }
    }
  };

  for (Index j = 0; j + 1 < mesh.n; ++j) {
    for (Index i = 0; i + 1 < mesh.n; ++i) {
      const Index v00 = mesh.vertex_id(i, j);
      const Index v10 = mesh.vertex_id(i + 1, j);
      const Index v01 = mesh.vertex_id(i, j + 1);
      const Index v11 = mesh.vertex_id(i + 1, j + 1);
      const Index lower[3] = {v00, v10, v11};
      const Index upper[3] = {v00, v11, v01};
      assemble_triangle(lower);
      assemble_triangle(upper);
    }
  }
  mass.resize(d, d);
  stiffness.resize(d, d);
  advection.resize(d, d);
  mass.setFromTriplets(mass_t.begin(), mass_t.end());
  stiffness.setFromTriplets(stiff_t.begin(), stiff_t.end());
  advection.setFromTriplets(adv_t.begin(), adv_t.end());
}

FEMSystem heat_system(const Mesh1D& mesh, const ScalarField1D& kappa, double dt) {
  require_dim(dt > 0.0, "heat_system: dt must be positive");
  FEMSystem sys;
  assemble_heat_matrices(mesh, kappa, sys.mass, sys.stiffness);
  sys.dt = dt;
  SparseMatrix system = sys.mass + dt * sys.stiffness;
  sys.step = spd_step_operator(sys.mass, std::move(system));
  return sys;
}

FEMSystem advection_diffusion_system(const Mesh2D& mesh, const VelocityField2D& velocity,
                                     double dt) {
  require_dim(dt > 0.0, "advection_diffusion_system: dt must be positive");
  FEMSystem sys;
  assemble_ad_matrices(mesh, velocity, sys.mass, sys.stiffness, sys.advection);
  sys.dt = dt;
  SparseMatrix system = sys.mass + dt * sys.advection + dt * sys.stiffness;
  sys.step = lu_step_operator(sys.mass, std::move(system));
  return sys;
}

LinearOperator interpolation_operator_1d(const Mesh1D& mesh, const std::vector<double>& sensors) {
  const Index d = mesh.n_interior();
  std::vector<Triplet> rows;
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const double x = sensors[s];
    require_dim(x >= 0.0 && x <= 1.0, "interpolation_operator_1d: sensor outside the domain");
    Index e = static_cast<Index>(std::floor(x / mesh.h()));
    e = std::min(e, mesh.n_cells - 1);
    const double xi = x / mesh.h() - static_cast<double>(e);
    // Boundary nodes carry value zero and are eliminated; their weight is dropped.
    if (e >= 1 && e <= d) rows.emplace_back(static_cast<Index>(s), e - 1, 1.0 - xi);
    if (e + 1 >= 1 && e + 1 <= d) rows.emplace_back(static_cast<Index>(s), e, xi);
  }
  SparseMatrix m(static_cast<Index>(sensors.size()), d);
  m.setFromTriplets(rows.begin(), rows.end());
  return LinearOperator::from_sparse(std::move(m));
}

LinearOperator interpolation_operator_2d(const Mesh2D& mesh,
                                         const std::vector<Eigen::Vector2d>& sensors) {
  std::vector<Triplet> rows;
  const double h = mesh.cell_h();
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const double x = sensors[s].x(), y = sensors[s].y();
    require_dim(x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0,
                "interpolation_operator_2d: sensor outside the domain");
    Index i = static_cast<Index>(std::floor((x + 1.0) / h));
    Index j = static_cast<Index>(std::floor((y + 1.0) / h));
    i = std::min(i, mesh.n - 2);
    j = std::min(j, mesh.n - 2);
    const double xi = (x - mesh.vertex_x(i)) / h;
    const double eta = (y - mesh.vertex_y(j)) / h;
    const Index row = static_cast<Index>(s);
    if (xi >= eta) {
      // Lower triangle (v00, v10, v11).
      rows.emplace_back(row, mesh.vertex_id(i, j), 1.0 - xi);
      rows.emplace_back(row, mesh.vertex_id(i + 1, j), xi - eta);
      rows.emplace_back(row, mesh.vertex_id(i + 1, j + 1), eta);
    } else {
      // Upper triangle (v00, v11, v01).
      rows.emplace_back(row, mesh.vertex_id(i, j), 1.0 - eta);
      rows.emplace_back(row, mesh.vertex_id(i + 1, j + 1), xi);
      rows.emplace_back(row, mesh.vertex_id(i, j + 1), eta - xi);
    }
  }
  SparseMatrix m(static_cast<Index>(sensors.size()), mesh.n_vertices());
  m.setFromTriplets(rows.begin(), rows.end());
  return LinearOperator::from_sparse(std::move(m));
}

HeatModelConfig HeatModelConfig::desk() { return HeatModelConfig{}; }

HeatModelConfig HeatModelConfig::paper() {
  HeatModelConfig c;
  c.n_cells = 400;
  c.steps_per_window = 256;  // dt = 1.5625e-5
  return c;
}

ADModelConfig ADModelConfig::desk() { return ADModelConfig{}; }

ADModelConfig ADModelConfig::paper() {
  ADModelConfig c;
  c.grid_n = 49;
  c.steps_per_window = 20;  // 200 implicit Euler steps over [0,2]
  return c;
}

namespace {

std::vector<double> observation_noise_std(const EvolutionFamily& reference, const Vector& truth,
                                          const ObservationOperator& observation,
                                          double noise_fraction,
                                          const std::optional<double>& override_std) {
  const Index n_blocks = observation.n_blocks();
  std::vector<double> sigma(static_cast<std::size_t>(n_blocks));
  if (override_std) {
    for (auto& s : sigma) s = *override_std;
    return sigma;
  }
  Vector state = truth;
  for (Index l = 0; l < n_blocks; ++l) {
    if (l > 0) state = reference.step(l - 1).apply(state);
    const Vector obs = observation.per_step().apply(state);
    const double rms = obs.norm() / std::sqrt(static_cast<double>(obs.size()));
    sigma[static_cast<std::size_t>(l)] = noise_fraction * rms;
  }
  return sigma;
}

std::vector<double> to_variances(const std::vector<double>& sigma) {
  std::vector<double> var(sigma.size());
  for (std::size_t i = 0; i < sigma.size(); ++i) {
    if (!(sigma[i] > 0.0)) {
      throw SingularityError(
          "observation noise std is zero; set a positive noise fraction or an explicit override");
    }
    var[i] = sigma[i] * sigma[i];
  }
  return var;
}

}  // namespace

ModelProblem export_heat_problem(const HeatModelConfig& config, std::uint64_t seed) {
  Mesh1D mesh{config.n_cells};
  if (mesh.h() > config.epsilon / 8.0 + 1e-15) {
    throw ConfigError("heat model: mesh does not resolve the oscillatory diffusivity (need h <= epsilon/8)");
  }
  const double eps = config.epsilon;
  const ScalarField1D kappa_osc = [eps](double x) { return 2.0 + std::sin(2.0 * M_PI * x / eps); };
  const ScalarField1D kappa_hom = [](double) { return std::sqrt(3.0); };

  const double dt = config.dt();
  FEMSystem sys_ref = heat_system(mesh, kappa_osc, dt);
  FEMSystem sys_mod = heat_system(mesh, kappa_hom, dt);
  const LinearOperator window_ref = operator_power(sys_ref.step, config.steps_per_window);
  const LinearOperator window_mod = operator_power(sys_mod.step, config.steps_per_window);

  const Index d = mesh.n_interior();
  EvolutionFamily reference(d, std::vector<LinearOperator>(
                                   static_cast<std::size_t>(config.n_windows), window_ref));
  EvolutionFamily model(d, std::vector<LinearOperator>(
                               static_cast<std::size_t>(config.n_windows), window_mod));

  Vector truth(d), background_mean(d);
  for (Index i = 0; i < d; ++i) {
    const double x = mesh.interior_node(i);
    const double bump = [&](double center) {
      const double t = (x - center) / config.bump_width;
      return std::exp(-0.5 * t * t);
    }(config.true_bump_center);
    truth[i] = bump;
    const double tb = (x - config.background_bump_center) / config.bump_width;
    background_mean[i] = bump + config.background_bump_scale * std::exp(-0.5 * tb * tb);
  }

  auto background = std::make_shared<EllipticPriorCovariance>(sys_mod.stiffness, sys_mod.mass,
                                                              config.prior_gamma, config.prior_delta);

  std::vector<CovariancePtr> model_error = sample_error_covariance(
      reference, model, *background, background_mean, config.n_error_samples,
      derive_seed(seed, "heat-model-error"));

  std::vector<double> coords(static_cast<std::size_t>(config.n_sensors));
  for (Index s = 0; s < config.n_sensors; ++s) {
    coords[static_cast<std::size_t>(s)] =
        config.sensor_lo + static_cast<double>(s) * (config.sensor_hi - config.sensor_lo) /
                               static_cast<double>(config.n_sensors - 1);
  }
  ObservationOperator observation(interpolation_operator_1d(mesh, coords), config.n_windows + 1);

  std::vector<double> sigma = observation_noise_std(reference, truth, observation,
                                                    config.noise_fraction, config.noise_std_override);

  ModelProblem out{
      DAProblem{ProblemDims{d, config.n_windows, config.n_sensors}, model, observation, background,
                background_mean, std::move(model_error), to_variances(sigma)},
      reference, truth, sigma, {}};
  out.sensor_coords.reserve(coords.size());
  for (double x : coords) out.sensor_coords.push_back({x, 0.0});
  out.problem.validate();
  return out;
}

ModelProblem export_ad_problem(const ADModelConfig& config) {
  Mesh2D mesh{config.grid_n};
  // Divergence-free cavity-like circulation with v . n = 0 on the boundary.
  const VelocityField2D velocity = [](double x, double y) {
    return Eigen::Vector2d{2.0 * y * (1.0 - x * x), -2.0 * x * (1.0 - y * y)};
  };
  FEMSystem sys = advection_diffusion_system(mesh, velocity, config.dt());
  const LinearOperator window = operator_power(sys.step, config.steps_per_window);
  const Index d = mesh.n_vertices();
  EvolutionFamily model(d, std::vector<LinearOperator>(
                               static_cast<std::size_t>(config.n_windows), window));
  EvolutionFamily reference(d, std::vector<LinearOperator>(
                                   static_cast<std::size_t>(config.n_windows), window));

  // Truth: two localized concentration bumps, zero elsewhere.
  Vector truth(d);
  for (Index j = 0; j < mesh.n; ++j) {
    for (Index i = 0; i < mesh.n; ++i) {
      const double x = mesh.vertex_x(i), y = mesh.vertex_y(j);
      const auto bump = [](double cx, double cy, double x_, double y_) {
        const double r2 = (x_ - cx) * (x_ - cx) + (y_ - cy) * (y_ - cy);
        return std::exp(-r2 / (2.0 * 0.15 * 0.15));
      };
      truth[mesh.vertex_id(i, j)] = bump(-0.4, -0.4, x, y) + bump(0.35, 0.35, x, y);
    }
  }
  Vector background_mean = Vector::Zero(d);

  auto background = std::make_shared<EllipticPriorCovariance>(sys.stiffness, sys.mass,
                                                              config.prior_gamma, config.prior_delta);

  const Index n_s = config.sensor_grid_n * config.sensor_grid_n;
  // q_l scales with the advected truth magnitude per window.
  std::vector<CovariancePtr> model_error;
  {
    Vector state = truth;
    for (Index l = 1; l <= config.n_windows; ++l) {
      state = model.step(l - 1).apply(state);
      const double q = config.error_alpha * state.norm() / std::sqrt(static_cast<double>(n_s));
      model_error.push_back(std::make_shared<ScaledIdentityCovariance>(d, q * q));
    }
  }

  std::vector<Eigen::Vector2d> coords;
  coords.reserve(static_cast<std::size_t>(n_s));
  const double lo = -1.0 + config.sensor_margin, hi = 1.0 - config.sensor_margin;
  for (Index j = 0; j < config.sensor_grid_n; ++j) {
    for (Index i = 0; i < config.sensor_grid_n; ++i) {
      const double x = lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(config.sensor_grid_n - 1);
      const double y = lo + static_cast<double>(j) * (hi - lo) / static_cast<double>(config.sensor_grid_n - 1);
      coords.push_back({x, y});
    }
  }
  ObservationOperator observation(interpolation_operator_2d(mesh, coords), config.n_windows + 1);

  std::vector<double> sigma = observation_noise_std(reference, truth, observation,
                                                    config.noise_fraction, config.noise_std_override);

  ModelProblem out{DAProblem{ProblemDims{d, config.n_windows, n_s}, model, observation, background,
                             background_mean, std::move(model_error), to_variances(sigma)},
                   reference, truth, sigma, std::move(coords)};
  out.problem.validate();
  return out;
}

}  // namespace wc4dvar
