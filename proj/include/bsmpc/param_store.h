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

#ifndef BSMPC_PARAM_STORE_H_
#define BSMPC_PARAM_STORE_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bsmpc/tensor.h"

namespace bsmpc {

struct AdamConfig;

// Named trainable arrays with their Adam moments.
class ParamStore {
 public:
  // Returns the index of the new parameter. Names must be unique.
  int add(std::string name, Matrix init);

  std::size_t size() const { return values_.size(); }
  int index_of(const std::string& name) const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  const Matrix& first_moment(std::size_t i) const { return m_[i]; }
  const Matrix& second_moment(std::size_t i) const { return v_[i]; }
  std::span<const Matrix> values() const { return values_; }

  std::int64_t step() const { return step_; }

  // Zero gradient buffers shaped like the parameters.
  std::vector<Matrix> zeros_like() const;
  std::size_t num_scalars() const;

  // Restores moments and step counter (checkpoint loading).
  void restore_state(std::size_t i, Matrix value, Matrix m, Matrix v);
  void set_step(std::int64_t step) { step_ = step; }

 private:
  friend void adam_step(ParamStore&, std::span<const Matrix>,
                        const AdamConfig&);

  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update. Increments the step counter exactly once.
// Rejects (without mutating anything) gradients containing NaN/Inf or whose
// shapes do not match the store.
void adam_step(ParamStore& store, std::span<const Matrix> grads,
               const AdamConfig& cfg);

// Global L2 norm over a gradient list.
double global_norm(std::span<const Matrix> grads);

// Rescales `grads` in place so the global norm is at most `max_norm`.
// Returns the pre-clip norm.
double clip_global_norm(std::span<Matrix> grads, double max_norm);

}  // namespace bsmpc

#endif  // BSMPC_PARAM_STORE_H_
