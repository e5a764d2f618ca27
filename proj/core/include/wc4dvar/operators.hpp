/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <atomic>
#include <memory>
#include <vector>

#include "wc4dvar/linop.hpp"
#include "wc4dvar/types.hpp"

namespace wc4dvar {

/// Dimensions of one assimilation instance. Block vectors are stacked
/// time-major: (u_0; u_1; ...; u_{n_windows}).
struct ProblemDims {
  Index state_dim = 0;   // per-step state size
  Index n_windows = 0;   // number of windows after time 0
  Index n_sensors = 0;   // candidate sensors per step

  Index n_blocks() const { return n_windows + 1; }
  Index trajectory_dim() const { return n_blocks() * state_dim; }
  Index measurement_dim() const { return n_blocks() * n_sensors; }

  void validate() const {
    require_dim(state_dim >= 1, "ProblemDims: state_dim must be >= 1");
    require_dim(n_windows >= 0, "ProblemDims: n_windows must be >= 0");
    require_dim(n_sensors >= 1, "ProblemDims: n_sensors must be >= 1");
  }
};

/// The per-window state propagators M_{l -> l+1}, all square of one state
/// dimension. Transpose applications are counted through a shared audit
/// counter so adjoint-free algorithms can assert they never used one.
class EvolutionFamily {
 public:
  EvolutionFamily(Index state_dim, std::vector<LinearOperator> steps);

  Index state_dim() const { return state_dim_; }
  Index n_windows() const { return static_cast<Index>(steps_.size()); }

  /// M_{l -> l+1}
  const LinearOperator& step(Index l) const;

  std::uint64_t transpose_applications() const { return transpose_count_->load(); }
  void reset_transpose_counter() const { transpose_count_->store(0); }

 private:
  Index state_dim_;
  std::vector<LinearOperator> steps_;
  std::shared_ptr<std::atomic<std::uint64_t>> transpose_count_;
};

/// Composed propagator M_{from -> to} (identity when from == to).
LinearOperator compose_evolution(const EvolutionFamily& family, Index from, Index to);

enum class CouplingDirection {
  forward,  // L: trajectory -> (initial state; per-window residuals)
  inverse,  // L^{-1}: (initial state; increments) -> accumulated trajectory
};

/// The unit-lower-block-bidiagonal trajectory/residual coupling map and its
/// explicit inverse. Both directions cost one pass over the window maps; the
/// transposes run the mirrored reverse-time recursions.
class CouplingOperator {
 public:
  CouplingOperator(EvolutionFamily family, CouplingDirection direction);

  Index dim() const { return (family_.n_windows() + 1) * family_.state_dim(); }
  CouplingDirection direction() const { return direction_; }
  const EvolutionFamily& family() const { return family_; }

  Vector apply(const Vector& x) const;
  Vector apply_transpose(const Vector& x) const;

  LinearOperator linop() const;

 private:
  EvolutionFamily family_;
  CouplingDirection direction_;
};

/// Block-diagonal observation map: one fixed per-step operator applied to
/// every time block.
class ObservationOperator {
 public:
  ObservationOperator(LinearOperator per_step, Index n_blocks);

  Index n_blocks() const { return n_blocks_; }
  Index sensors_per_step() const { return per_step_.rows(); }
  Index state_dim() const { return per_step_.cols(); }
  const LinearOperator& per_step() const { return per_step_; }

  /// N_m x N_d block operator.
  LinearOperator block() const;

 private:
  LinearOperator per_step_;
  Index n_blocks_;
};

/// An ordered subset of candidate sensors.
class SensorDesign {
 public:
  SensorDesign(Index n_sensors, std::vector<Index> indices);

  static SensorDesign full(Index n_sensors);
  static SensorDesign empty(Index n_sensors);

  Index n_sensors() const { return n_sensors_; }
  Index n_selected() const { return static_cast<Index>(indices_.size()); }
  const std::vector<Index>& indices() const { return indices_; }
  bool is_full() const { return n_selected() == n_sensors_; }

  bool operator==(const SensorDesign& other) const {
    return n_sensors_ == other.n_sensors_ && indices_ == other.indices_;
  }

 private:
  Index n_sensors_;
  std::vector<Index> indices_;  // strictly increasing
};

/// Kronecker selection embedding (I_{n_blocks} x S): maps per-block selected
/// coordinates into the full per-block sensor layout; the transpose picks the
/// selected rows from every block. Columns are orthonormal.
LinearOperator embed_selection(const SensorDesign& design, Index n_blocks);

}  // namespace wc4dvar
