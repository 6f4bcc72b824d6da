// Copyright 2026 The bsmpc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "bsmpc/tape.h"

#include <cmath>

namespace bsmpc {

const Matrix& Var::value() const { return tape->value(id); }
const Matrix& Var::grad() const { return tape->grad(id); }

Var Tape::leaf(Matrix value, bool requires_grad) {
  require_finite(value, "tape leaf");
  Node n;
  n.own = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::ref(const Matrix& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn) {
  Node n;
  n.own = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape != this) throw ContractError("Tape::push: foreign node");
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.external != nullptr ? *n.external : n.own;
}

const Matrix& Tape::grad(int id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0) {
    const Matrix& v = value(id);
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

void Tape::backward(Var loss) {
  const Matrix& v = value(loss.id);
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("backward: loss must be scalar, got " +
                        shape_string(v));
  }
  backward(loss, Matrix::Ones(1, 1));
}

void Tape::backward(Var out, const Matrix& seed) {
  if (out.tape != this) throw ContractError("backward: foreign node");
  const Matrix& v = value(out.id);
  if (seed.rows() != v.rows() || seed.cols() != v.cols()) {
    throw ContractError("backward: seed shape " + shape_string(seed) +
                        " does not match " + shape_string(v));
  }
  accumulate(out.id, seed);
  sweep(out.id);
}

void Tape::sweep(int from) {
  for (int i = from; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
    n.backward(*this, i);
  }
}

// ---- inference helpers ----------------------------------------------------

Matrix affine_value(const Matrix& x, const Matrix& w, const Matrix& b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols()) {
    throw ContractError("affine: shape mismatch x" + shape_string(x) + " W" +
                        shape_string(w) + " b" + shape_string(b));
  }
  Matrix y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

void elu_inplace(Matrix& x) {
  x = x.unaryExpr([](double v) { return v > 0.0 ? v : std::expm1(v); });
}

void layer_norm_inplace(Matrix& x, const Matrix& gain, const Matrix& bias) {
  const double n = static_cast<double>(x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    const double mu = row.sum() / n;
    row.array() -= mu;
    const double var = row.squaredNorm() / n;
    row *= 1.0 / std::sqrt(var + kLayerNormEps);
  }
  x.array().rowwise() *= gain.row(0).array();
  x.rowwise() += bias.row(0);
}

// ---- primitives -------------------------------------------------------------

Var affine(Var x, Var w, Var b) {
  Tape& t = *x.tape;
  Matrix y = affine_value(x.value(), w.value(), b.value());
  const int xi = x.id, wi = w.id, bi = b.id;
  return t.push(std::move(y), {x, w, b}, [xi, wi, bi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(xi)) t.accumulate_expr(xi, g * t.value(wi).transpose());
    if (t.requires_grad(wi)) t.accumulate_expr(wi, t.value(xi).transpose() * g);
    if (t.requires_grad(bi)) t.accumulate_expr(bi, g.colwise().sum());
  });
}

Var elu(Var x) {
  Tape& t = *x.tape;
  Matrix y = x.value();
  elu_inplace(y);
  const int xi = x.id;
  return t.push(std::move(y), {x}, [xi](Tape& t, int self) {
    const Matrix& xv = t.value(xi);
    const Matrix& yv = t.value(self);
    Matrix d = (xv.array() >= 0.0).select(1.0, yv.array() + 1.0).matrix();
    t.accumulate_expr(xi, t.grad(self).cwiseProduct(d));
  });
}

Var tanh(Var x) {
  Tape& t = *x.tape;
  Matrix y = x.value().array().tanh().matrix();
  const int xi = x.id;
  return t.push(std::move(y), {x}, [xi](Tape& t, int self) {
    const Matrix& yv = t.value(self);
    t.accumulate_expr(
        xi, (t.grad(self).array() * (1.0 - yv.array().square())).matrix());
  });
}

Var layer_norm(Var x, Var gain, Var bias) {
  Tape& t = *x.tape;
  const Matrix& xv = x.value();
  const Eigen::Index n = xv.cols();
  if (n < 2) throw ContractError("layer_norm: need at least 2 features");
  if (gain.value().cols() != n || bias.value().cols() != n ||
      gain.value().rows() != 1 || bias.value().rows() != 1) {
    throw ContractError("layer_norm: gain/bias shape mismatch");
  }
  Matrix xhat = xv;
  Vector inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    auto row = xhat.row(r);
    const double mu = row.sum() / static_cast<double>(n);
    row.array() -= mu;
    const double var = row.squaredNorm() / static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + kLayerNormEps);
    row *= inv_std[r];
  }
  Matrix y = xhat;
  y.array().rowwise() *= gain.value().row(0).array();
  y.rowwise() += bias.value().row(0);
  const int xi = x.id, gi = gain.id, bi = bias.id;
  return t.push(std::move(y), {x, gain, bias},
                [xi, gi, bi, xhat = std::move(xhat),
                 inv_std = std::move(inv_std)](Tape& t, int self) {
                  const Matrix& g = t.grad(self);
                  if (t.requires_grad(gi)) {
                    t.accumulate_expr(gi, g.cwiseProduct(xhat).colwise().sum());
                  }
                  if (t.requires_grad(bi)) {
                    t.accumulate_expr(bi, g.colwise().sum());
                  }
                  if (t.requires_grad(xi)) {
                    Matrix dxhat = g;
                    dxhat.array().rowwise() *= t.value(gi).row(0).array();
                    const double n = static_cast<double>(g.cols());
                    Matrix dx(g.rows(), g.cols());
                    for (Eigen::Index r = 0; r < g.rows(); ++r) {
                      const double m1 = dxhat.row(r).sum() / n;
                      const double m2 = dxhat.row(r).dot(xhat.row(r)) / n;
                      dx.row(r) = inv_std[r] * (dxhat.row(r).array() - m1 -
                                                xhat.row(r).array() * m2)
                                                   .matrix();
                    }
                    t.accumulate(xi, dx);
                  }
                });
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(op) + ": shape mismatch " +
                        shape_string(a) + " vs " + shape_string(b));
  }
}

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  const int ai = a.id, bi = b.id;
  return a.tape->push(a.value() + b.value(), {a, b},
                      [ai, bi](Tape& t, int self) {
                        t.accumulate_expr(ai, t.grad(self));
                        t.accumulate_expr(bi, t.grad(self));
                      });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  const int ai = a.id, bi = b.id;
  return a.tape->push(a.value() - b.value(), {a, b},
                      [ai, bi](Tape& t, int self) {
                        t.accumulate_expr(ai, t.grad(self));
                        t.accumulate_expr(bi, -t.grad(self));
                      });
}

Var scale(Var a, double s) {
  const int ai = a.id;
  return a.tape->push(a.value() * s, {a}, [ai, s](Tape& t, int self) {
    t.accumulate_expr(ai, t.grad(self) * s);
  });
}

Var add_const(Var a, const Matrix& c) {
  require_same_shape(a.value(), c, "add_const");
  const int ai = a.id;
  return a.tape->push(a.value() + c, {a}, [ai](Tape& t, int self) {
    t.accumulate_expr(ai, t.grad(self));
  });
}

Var mul_const(Var a, const Matrix& c) {
  require_same_shape(a.value(), c, "mul_const");
  const int ai = a.id;
  return a.tape->push(a.value().cwiseProduct(c), {a}, [ai, c](Tape& t, int self) {
    t.accumulate_expr(ai, t.grad(self).cwiseProduct(c));
  });
}

Var square(Var a) {
  const int ai = a.id;
  return a.tape->push(a.value().array().square().matrix(), {a},
                      [ai](Tape& t, int self) {
                        t.accumulate_expr(
                            ai, 2.0 * t.grad(self).cwiseProduct(t.value(ai)));
                      });
}

Var min(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "min");
  const int ai = a.id, bi = b.id;
  Matrix y = a.value().cwiseMin(b.value());
  return a.tape->push(std::move(y), {a, b}, [ai, bi](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    auto take_a = (t.value(ai).array() <= t.value(bi).array());
    if (t.requires_grad(ai)) {
      t.accumulate(ai, take_a.select(g.array(), 0.0).matrix());
    }
    if (t.requires_grad(bi)) {
      t.accumulate(bi, take_a.select(0.0, g.array()).matrix());
    }
  });
}

Var row_abs_sum(Var x) {
  const int xi = x.id;
  return x.tape->push(x.value().cwiseAbs().rowwise().sum(), {x},
                      [xi](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        Matrix d = t.value(xi).array().sign().matrix();
                        d.array().colwise() *= g.col(0).array();
                        t.accumulate(xi, d);
                      });
}

Var row_square_sum(Var x) {
  const int xi = x.id;
  return x.tape->push(x.value().rowwise().squaredNorm(), {x},
                      [xi](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        Matrix d = 2.0 * t.value(xi);
                        d.array().colwise() *= g.col(0).array();
                        t.accumulate(xi, d);
                      });
}

Var mean(Var x) {
  const int xi = x.id;
  const double n = static_cast<double>(x.value().size());
  Matrix y(1, 1);
  y(0, 0) = x.value().sum() / n;
  return x.tape->push(std::move(y), {x}, [xi, n](Tape& t, int self) {
    const Matrix& xv = t.value(xi);
    t.accumulate(xi, Matrix::Constant(xv.rows(), xv.cols(),
                                      t.grad(self)(0, 0) / n));
  });
}

Var sum(Var x) {
  const int xi = x.id;
  Matrix y(1, 1);
  y(0, 0) = x.value().sum();
  return x.tape->push(std::move(y), {x}, [xi](Tape& t, int self) {
    const Matrix& xv = t.value(xi);
    t.accumulate(xi,
                 Matrix::Constant(xv.rows(), xv.cols(), t.grad(self)(0, 0)));
  });
}

Var concat_cols(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw ContractError("concat_cols: row mismatch " + shape_string(av) +
                        " vs " + shape_string(bv));
  }
  Matrix y(av.rows(), av.cols() + bv.cols());
  y << av, bv;
  const int ai = a.id, bi = b.id;
  const Eigen::Index na = av.cols(), nb = bv.cols();
  return a.tape->push(std::move(y), {a, b}, [ai, bi, na, nb](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(ai)) t.accumulate(ai, g.leftCols(na));
    if (t.requires_grad(bi)) t.accumulate(bi, g.rightCols(nb));
  });
}

Var row_block(Var x, Eigen::Index start, Eigen::Index count) {
  const Matrix& xv = x.value();
  if (start < 0 || count <= 0 || start + count > xv.rows()) {
    throw ContractError("row_block: range out of bounds");
  }
  const int xi = x.id;
  return x.tape->push(xv.middleRows(start, count), {x},
                      [xi, start, count](Tape& t, int self) {
                        const Matrix& xv = t.value(xi);
                        Matrix g = Matrix::Zero(xv.rows(), xv.cols());
                        g.middleRows(start, count) = t.grad(self);
                        t.accumulate(xi, g);
                      });
}

Var gather_rows(Var x, std::span<const int> index) {
  const Matrix& xv = x.value();
  Matrix y(static_cast<Eigen::Index>(index.size()), xv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= xv.rows()) {
      throw ContractError("gather_rows: index out of range");
    }
    y.row(static_cast<Eigen::Index>(i)) = xv.row(index[i]);
  }
  const int xi = x.id;
  std::vector<int> idx(index.begin(), index.end());
  return x.tape->push(std::move(y), {x},
                      [xi, idx = std::move(idx)](Tape& t, int self) {
                        const Matrix& g = t.grad(self);
                        const Matrix& xv = t.value(xi);
                        Matrix gx = Matrix::Zero(xv.rows(), xv.cols());
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                          gx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                        }
                        t.accumulate(xi, gx);
                      });
}

Var detach(Var x) { return x.tape->leaf(x.value(), false); }

}  // namespace bsmpc
