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

#include "bsmpc/param_store.h"

#include <cmath>

namespace bsmpc {

int ParamStore::add(std::string name, Matrix init) {
  if (index_of(name) >= 0) {
    throw ContractError("ParamStore: duplicate parameter '" + name + "'");
  }
  require_finite(init, "parameter " + name);
  names_.push_back(std::move(name));
  m_.push_back(Matrix::Zero(init.rows(), init.cols()));
  v_.push_back(Matrix::Zero(init.rows(), init.cols()));
  values_.push_back(std::move(init));
  return static_cast<int>(values_.size()) - 1;
}

int ParamStore::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<Matrix> ParamStore::zeros_like() const {
  std::vector<Matrix> out;
  out.reserve(values_.size());
  for (const Matrix& v : values_) out.push_back(Matrix::Zero(v.rows(), v.cols()));
  return out;
}

std::size_t ParamStore::num_scalars() const {
  std::size_t n = 0;
  for (const Matrix& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

void ParamStore::restore_state(std::size_t i, Matrix value, Matrix m,
                               Matrix v) {
  const Matrix& cur = values_.at(i);
  auto same = [&](const Matrix& x) {
    return x.rows() == cur.rows() && x.cols() == cur.cols();
  };
  if (!same(value) || !same(m) || !same(v)) {
    throw ContractError("ParamStore: restored shape mismatch for '" +
                        names_[i] + "'");
  }
  values_[i] = std::move(value);
  m_[i] = std::move(m);
  v_[i] = std::move(v);
}

void adam_step(ParamStore& store, std::span<const Matrix> grads,
               const AdamConfig& cfg) {
  if (grads.size() != store.size()) {
    throw ContractError("adam_step: " + std::to_string(grads.size()) +
                        " gradients for " + std::to_string(store.size()) +
                        " parameters");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    const Matrix& p = store.values_[i];
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols()) {
      throw ContractError("adam_step: gradient shape " +
                          shape_string(grads[i]) + " for parameter '" +
                          store.names_[i] + "' " + shape_string(p));
    }
    if (!grads[i].allFinite()) {
      throw NumericError("adam_step: non-finite gradient for '" +
                         store.names_[i] + "'");
    }
  }
  store.step_ += 1;
  const double t = static_cast<double>(store.step_);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Matrix& m = store.m_[i];
    Matrix& v = store.v_[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grads[i];
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grads[i].cwiseAbs2();
    store.values_[i].array() -=
        cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

double global_norm(std::span<const Matrix> grads) {
  double sq = 0.0;
  for (const Matrix& g : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Matrix> grads, double max_norm) {
  const double norm = global_norm(grads);
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (Matrix& g : grads) g *= s;
  }
  return norm;
}

}  // namespace bsmpc
