/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "wc4dvar/types.hpp"

namespace wc4dvar {

/// Rectangular linear map defined by its forward and transpose action.
/// Operators are immutable after construction and cheap to copy (the
/// callbacks are shared). Nothing is ever materialized implicitly; use
/// densify() when a test or desk-scale reference needs the entries.
class LinearOperator {
 public:
  using ApplyFn = std::function<Vector(const Vector&)>;

  LinearOperator() : rows_(0), cols_(0) {}
  LinearOperator(Index rows, Index cols, ApplyFn forward, ApplyFn transpose)
      : rows_(rows), cols_(cols), forward_(std::move(forward)), transpose_(std::move(transpose)) {}

  Index rows() const { return rows_; }
  Index cols() const { return cols_; }

  Vector apply(const Vector& x) const {
    require_dim(x.size() == cols_, "LinearOperator::apply: size mismatch");
    Vector y = forward_(x);
    require_dim(y.size() == rows_, "LinearOperator::apply: callback produced wrong size");
    return y;
  }

  Vector apply_transpose(const Vector& y) const {
    require_dim(y.size() == rows_, "LinearOperator::apply_transpose: size mismatch");
    Vector x = transpose_(y);
    require_dim(x.size() == cols_, "LinearOperator::apply_transpose: callback produced wrong size");
    return x;
  }

  LinearOperator transposed() const {
    return LinearOperator(cols_, rows_, transpose_, forward_);
  }

  static LinearOperator identity(Index n);
  static LinearOperator zero(Index rows, Index cols);
  static LinearOperator scaled_identity(Index n, double scale);
  static LinearOperator from_dense(Matrix m);
  static LinearOperator from_sparse(SparseMatrix m);

 private:
  Index rows_;
  Index cols_;
  ApplyFn forward_;
  ApplyFn transpose_;
};

/// a after b: x -> a(b(x)).
LinearOperator compose(const LinearOperator& a, const LinearOperator& b);

/// op composed with itself `power` times (power >= 0; power 0 is identity).
LinearOperator operator_power(const LinearOperator& op, Index power);

LinearOperator block_diag(std::vector<LinearOperator> blocks);

/// a + b for same-shape operators.
LinearOperator operator_sum(const LinearOperator& a, const LinearOperator& b);

/// Debug/oracle utility: materialize by applying to basis vectors.
Matrix densify(const LinearOperator& op);

/// Symmetrized densify for operators that are symmetric up to roundoff.
Matrix densify_symmetric(const LinearOperator& op);

}  // namespace wc4dvar
