/* SPDX-FileCopyrightText: Copyright (c) 2026 the wc4dvar authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "wc4dvar/linop.hpp"

#include <utility>

namespace wc4dvar {

LinearOperator LinearOperator::identity(Index n) {
  auto id = [](const Vector& x) { return x; };
  return LinearOperator(n, n, id, id);
}

LinearOperator LinearOperator::zero(Index rows, Index cols) {
  return LinearOperator(
      rows, cols, [rows](const Vector&) { return Vector(Vector::Zero(rows)); },
      [cols](const Vector&) { return Vector(Vector::Zero(cols)); });
}

LinearOperator LinearOperator::scaled_identity(Index n, double scale) {
  auto fn = [scale](const Vector& x) { return Vector(scale * x); };
  return LinearOperator(n, n, fn, fn);
}

LinearOperator LinearOperator::from_dense(Matrix m) {
  auto shared = std::make_shared<Matrix>(std::move(m));
  return LinearOperator(
      shared->rows(), shared->cols(),
      [shared](const Vector& x) { return Vector(*shared * x); },
      [shared](const Vector& y) { return Vector(shared->transpose() * y); });
}

LinearOperator LinearOperator::from_sparse(SparseMatrix m) {
  m.makeCompressed();
  auto shared = std::make_shared<SparseMatrix>(std::move(m));
  return LinearOperator(
      shared->rows(), shared->cols(),
      [shared](const Vector& x) { return Vector(*shared * x); },
      [shared](const Vector& y) { return Vector(shared->transpose() * y); });
}

LinearOperator compose(const LinearOperator& a, const LinearOperator& b) {
  require_dim(a.cols() == b.rows(), "compose: inner dimensions differ");
  return LinearOperator(
      a.rows(), b.cols(),
      [a, b](const Vector& x) { return a.apply(b.apply(x)); },
      [a, b](const Vector& y) { return b.apply_transpose(a.apply_transpose(y)); });
}

LinearOperator operator_power(const LinearOperator& op, Index power) {
  require_dim(op.rows() == op.cols(), "operator_power: operator must be square");
  require_dim(power >= 0, "operator_power: negative power");
  return LinearOperator(
      op.rows(), op.cols(),
      [op, power](const Vector& x) {
        Vector y = x;
        for (Index i = 0; i < power; ++i) y = op.apply(y);
        return y;
      },
      [op, power](const Vector& x) {
        Vector y = x;
        for (Index i = 0; i < power; ++i) y = op.apply_transpose(y);
        return y;
      });
}

LinearOperator block_diag(std::vector<LinearOperator> blocks) {
  Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  auto shared = std::make_shared<std::vector<LinearOperator>>(std::move(blocks));
  auto forward = [shared, rows](const Vector& x) {
    Vector y(rows);
    Index xi = 0, yi = 0;
    for (const auto& b : *shared) {
      y.segment(yi, b.rows()) = b.apply(x.segment(xi, b.cols()));
      xi += b.cols();
      yi += b.rows();
    }
    return y;
  };
  auto transpose = [shared, cols](const Vector& y) {
    Vector x(cols);
    Index xi = 0, yi = 0;
    for (const auto& b : *shared) {
      x.segment(xi, b.cols()) = b.apply_transpose(y.segment(yi, b.rows()));
      xi += b.cols();
      yi += b.rows();
    }
    return x;
  };
  return LinearOperator(rows, cols, forward, transpose);
}

LinearOperator operator_sum(const LinearOperator& a, const LinearOperator& b) {
  require_dim(a.rows() == b.rows() && a.cols() == b.cols(), "operator_sum: shape mismatch");
  return LinearOperator(
      a.rows(), a.cols(),
      [a, b](const Vector& x) { return Vector(a.apply(x) + b.apply(x)); },
      [a, b](const Vector& y) { return Vector(a.apply_transpose(y) + b.apply_transpose(y)); });
}

Matrix densify(const LinearOperator& op) {
  Matrix m(op.rows(), op.cols());
  Vector e = Vector::Zero(op.cols());
  for (Index j = 0; j < op.cols(); ++j) {
    e[j] = 1.0;
    m.col(j) = op.apply(e);
    e[j] = 0.0;
  }
  return m;
}

Matrix densify_symmetric(const LinearOperator& op) {
  Matrix m = densify(op);
  return 0.5 * (m + m.transpose());
}

}  // namespace wc4dvar
