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

#ifndef BSMPC_TAPE_H_
#define BSMPC_TAPE_H_

#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "bsmpc/tensor.h"

namespace bsmpc {

class Tape;

// Handle to a node recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

// Linear record of primitive operations supporting one reverse sweep.
//
// Nodes are appended in topological order, so the reverse sweep simply walks
// the node list backwards. Node storage is stable: references returned by
// value() stay valid while the tape grows. Leaves may either own their value
// or reference external storage (parameters), which must outlive the tape.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Owned leaf. Rejects NaN/Inf.
  Var leaf(Matrix value, bool requires_grad = false);
  // Leaf aliasing `value` without copying.
  Var ref(const Matrix& value, bool requires_grad);

  // Appends a computed node. `fn` is only invoked during backward() if some
  // input requires gradients.
  Var push(Matrix value, std::initializer_list<Var> inputs, BackwardFn fn);

  const Matrix& value(int id) const;
  // Zero matrix of matching shape if the node never received gradient.
  const Matrix& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Adds `g` into the gradient buffer of node `id`.
  void accumulate(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Reverse sweep from a 1x1 node with seed 1.
  void backward(Var loss);
  // Reverse sweep from an arbitrary node with explicit upstream gradient.
  void backward(Var out, const Matrix& seed);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix own;
    const Matrix* external = nullptr;
    mutable Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  void sweep(int from);

  std::deque<Node> nodes_;
};

// ---- primitive operations ------------------------------------------------

// y = x W + b; x is [B x n], W is [n x m], b is [1 x m].
Var affine(Var x, Var w, Var b);
// x if x > 0 else exp(x) - 1 (alpha = 1); derivative at 0 taken as 1.
Var elu(Var x);
Var tanh(Var x);
// Per-row standardization (population variance, delta = 1e-5), then gain/bias.
Var layer_norm(Var x, Var gain, Var bias);
inline constexpr double kLayerNormEps = 1e-5;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
// Adds a constant matrix of identical shape.
Var add_const(Var a, const Matrix& c);
// Elementwise product with a constant matrix of identical shape.
Var mul_const(Var a, const Matrix& c);
Var square(Var a);
// Elementwise minimum; ties route the gradient to `a`.
Var min(Var a, Var b);

// [B x n] -> [B x 1] row sums of |x|.
Var row_abs_sum(Var x);
// [B x n] -> [B x 1] row sums of x^2.
Var row_square_sum(Var x);
// Any shape -> 1x1 mean over all entries.
Var mean(Var x);
// Any shape -> 1x1 sum over all entries.
Var sum(Var x);

Var concat_cols(Var a, Var b);
// Contiguous block of rows [start, start + count).
Var row_block(Var x, Eigen::Index start, Eigen::Index count);
// out[i] = x[index[i]].
Var gather_rows(Var x, std::span<const int> index);
// Stops gradient flow; the result is an owned constant.
Var detach(Var x);

// Affine map on plain matrices, shared by the inference paths.
Matrix affine_value(const Matrix& x, const Matrix& w, const Matrix& b);
void elu_inplace(Matrix& x);
void layer_norm_inplace(Matrix& x, const Matrix& gain, const Matrix& bias);

}  // namespace bsmpc

#endif  // BSMPC_TAPE_H_
