/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/operators.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

namespace wc4dvar {

EvolutionFamily::EvolutionFamily(Index state_dim, std::vector<LinearOperator> steps)
    : state_dim_(state_dim),
      transpose_count_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
  require_dim(state_dim >= 1, "EvolutionFamily: state_dim must be >= 1");
  steps_.reserve(steps.size());
  auto counter = transpose_count_;
  for (auto& s : steps) {
    require_dim(s.rows() == state_dim && s.cols() == state_dim,
                "EvolutionFamily: every step must be square of the state dimension");
    LinearOperator inner = s;
    steps_.emplace_back(
        state_dim, state_dim,
        [inner](const Vector& x) { return inner.apply(x); },
        [inner, counter](const Vector& y) {
          counter->fetch_add(1, std::memory_order_relaxed);
          return inner.apply_transpose(y);
        });
  }
}

const LinearOperator& EvolutionFamily::step(Index l) const {
  require_dim(l >= 0 && l < n_windows(), "EvolutionFamily::step: window index out of range");
  return steps_[static_cast<std::size_t>(l)];
}

LinearOperator compose_evolution(const EvolutionFamily& family, Index from, Index to) {
  require_dim(from >= 0 && from <= to && to <= family.n_windows(),
              "compose_evolution: need 0 <= from <= to <= n_windows");
  if (from == to) return LinearOperator::identity(family.state_dim());
  LinearOperator composed = family.step(from);
  for (Index l = from + 1; l < to; ++l) composed = compose(family.step(l), composed);
  return composed;
}

CouplingOperator::CouplingOperator(EvolutionFamily family, CouplingDirection direction)
    : family_(std::move(family)), direction_(direction) {}

Vector CouplingOperator::apply(const Vector& x) const {
  require_dim(x.size() == dim(), "CouplingOperator::apply: size mismatch");
  const Index d = family_.state_dim();
  const Index n_T = family_.n_windows();
  Vector y(dim());
  if (direction_ == CouplingDirection::forward) {
    // p_0 = u_0, p_l = u_l - M_{l-1 -> l} u_{l-1}
    y.head(d) = x.head(d);
    for (Index l = 1; l <= n_T; ++l) {
      y.segment(l * d, d) = x.segment(l * d, d) - family_.step(l - 1).apply(x.segment((l - 1) * d, d));
    }
  } else {
    // u_0 = p_0, u_l = M_{l-1 -> l} u_{l-1} + p_l
    y.head(d) = x.head(d);
    for (Index l = 1; l <= n_T; ++l) {
      y.segment(l * d, d) = family_.step(l - 1).apply(y.segment((l - 1) * d, d)) + x.segment(l * d, d);
    }
  }
  return y;
}

Vector CouplingOperator::apply_transpose(const Vector& x) const {
  require_dim(x.size() == dim(), "CouplingOperator::apply_transpose: size mismatch");
  const Index d = family_.state_dim();
  const Index n_T = family_.n_windows();
  Vector y(dim());
  if (direction_ == CouplingDirection::forward) {
    // (L^T x)_l = x_l - M_{l -> l+1}^T x_{l+1}, last block passes through.
    y.segment(n_T * d, d) = x.segment(n_T * d, d);
    for (Index l = n_T - 1; l >= 0; --l) {
      y.segment(l * d, d) =
          x.segment(l * d, d) - family_.step(l).apply_transpose(x.segment((l + 1) * d, d));
    }
  } else {
    // (L^{-T} x)_l = x_l + M_{l -> l+1}^T (L^{-T} x)_{l+1}: reverse-time sweep.
    y.segment(n_T * d, d) = x.segment(n_T * d, d);
    for (Index l = n_T - 1; l >= 0; --l) {
      y.segment(l * d, d) =
          x.segment(l * d, d) + family_.step(l).apply_transpose(y.segment((l + 1) * d, d));
    }
  }
  return y;
}

LinearOperator CouplingOperator::linop() const {
  auto self = std::make_shared<CouplingOperator>(*this);
  return LinearOperator(
      dim(), dim(), [self](const Vector& x) { return self->apply(x); },
      [self](const Vector& x) { return self->apply_transpose(x); });
}

ObservationOperator::ObservationOperator(LinearOperator per_step, Index n_blocks)
    : per_step_(std::move(per_step)), n_blocks_(n_blocks) {
  require_dim(n_blocks >= 1, "ObservationOperator: need at least one block");
}

LinearOperator ObservationOperator::block() const {
  std::vector<LinearOperator> blocks(static_cast<std::size_t>(n_blocks_), per_step_);
  return block_diag(std::move(blocks));
}

SensorDesign::SensorDesign(Index n_sensors, std::vector<Index> indices)
    : n_sensors_(n_sensors), indices_(std::move(indices)) {
  require_dim(n_sensors_ >= 0, "SensorDesign: negative sensor count");
  require_dim(static_cast<Index>(indices_.size()) <= n_sensors_,
              "SensorDesign: more indices than sensors");
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    require_dim(indices_[i] >= 0 && indices_[i] < n_sensors_,
                "SensorDesign: sensor index out of range");
    if (i > 0) {
      require_dim(indices_[i] > indices_[i - 1],
                  "SensorDesign: indices must be strictly increasing (no duplicates)");
    }
  }
}

SensorDesign SensorDesign::full(Index n_sensors) {
  std::vector<Index> all(static_cast<std::size_t>(n_sensors));
  std::iota(all.begin(), all.end(), Index{0});
  return SensorDesign(n_sensors, std::move(all));
}

SensorDesign SensorDesign::empty(Index n_sensors) { return SensorDesign(n_sensors, {}); }

LinearOperator embed_selection(const SensorDesign& design, Index n_blocks) {
  require_dim(n_blocks >= 1, "embed_selection: need n_blocks >= 1");
  const Index n_s = design.n_sensors();
  const Index k = design.n_selected();
  auto indices = std::make_shared<std::vector<Index>>(design.indices());
  auto forward = [indices, n_blocks, n_s, k](const Vector& x) {
    Vector y = Vector::Zero(n_blocks * n_s);
    for (Index b = 0; b < n_blocks; ++b) {
      for (Index j = 0; j < k; ++j) y[b * n_s + (*indices)[static_cast<std::size_t>(j)]] = x[b * k + j];
    }
    return y;
  };
  auto transpose = [indices, n_blocks, n_s, k](const Vector& y) {
    Vector x(n_blocks * k);
    for (Index b = 0; b < n_blocks; ++b) {
      for (Index j = 0; j < k; ++j) x[b * k + j] = y[b * n_s + (*indices)[static_cast<std::size_t>(j)]];
    }
    return x;
  };
  return LinearOperator(n_blocks * n_s, n_blocks * k, forward, transpose);
}

}  // namespace wc4dvar
