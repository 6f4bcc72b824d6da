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

#ifndef BSMPC_MODELS_H_
#define BSMPC_MODELS_H_

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsmpc/param_store.h"
#include "bsmpc/tape.h"
#include "bsmpc/tensor.h"

namespace bsmpc {

// Three affine layers: in -> hidden -> hidden -> out, ELU after each hidden
// layer. With `layer_norm` the hidden layers are affine -> LayerNorm -> ELU.
class Mlp {
 public:
  Mlp() = default;
  // Registers parameters "<prefix>.<layer>.{w,b,ln_gain,ln_bias}" in `store`.
  Mlp(ParamStore& store, const std::string& prefix, int in, int hidden,
      int out, bool layer_norm, Rng& rng);

  // Number of parameter arrays this network owns.
  int count() const { return count_; }
  int first() const { return first_; }
  int in_dim() const { return in_; }
  int out_dim() const { return out_; }

  // `params` is the network's own slice, in registration order.
  Matrix forward(std::span<const Matrix> params, const Matrix& x) const;
  Var forward(std::span<const Var> params, Var x) const;

 private:
  int first_ = 0;
  int count_ = 0;
  int in_ = 0;
  int out_ = 0;
  bool layer_norm_ = false;
};

struct ModelConfig {
  int state_dim = 3;
  int action_dim = 1;
  int latent_dim = 16;
  int hidden_dim = 64;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

enum class QMode { kMin, kHead1, kHead2, kAvg };

// Encoder, latent dynamics, reward, twin Q heads (all in `theta`), the policy
// (in `psi`), and slow-moving target copies of encoder, dynamics and both Q
// heads. Actions live in the normalized box [-1, 1]^action_dim.
class ModelSet {
 public:
  ModelSet(const ModelConfig& cfg, Rng& rng);

  const ModelConfig& config() const { return cfg_; }

  ParamStore& theta() { return theta_; }
  const ParamStore& theta() const { return theta_; }
  ParamStore& psi() { return psi_; }
  const ParamStore& psi() const { return psi_; }
  // Target arrays, laid out as encoder | dynamics | q1 | q2.
  std::span<const Matrix> target() const { return target_; }
  std::span<Matrix> target_mutable() { return target_; }

  const Mlp& encoder_net() const { return encoder_; }
  const Mlp& dynamics_net() const { return dynamics_; }
  const Mlp& reward_net() const { return reward_; }
  const Mlp& q1_net() const { return q1_; }
  const Mlp& q2_net() const { return q2_; }
  const Mlp& policy_net() const { return policy_; }

  // Slices of theta / target belonging to a given network.
  std::span<const Matrix> online(const Mlp& net) const;
  std::span<const Matrix> targets(const Mlp& net) const;

  // ---- inference (no tape) ----
  Matrix encode(const Matrix& states) const;
  Matrix encode_target(const Matrix& states) const;
  Matrix predict_next(const Matrix& z, const Matrix& a) const;
  Matrix predict_next_target(const Matrix& z, const Matrix& a) const;
  Matrix predict_reward(const Matrix& z, const Matrix& a) const;
  Matrix q_value(const Matrix& z, const Matrix& a, QMode mode) const;
  Matrix q_value_target(const Matrix& z, const Matrix& a, QMode mode) const;
  // Deterministic tanh-squashed policy output, in [-1, 1].
  Matrix policy_mean(const Matrix& z) const;
  // Policy output plus N(0, noise_std^2) noise, clipped to [-1, 1].
  Matrix policy_action(const Matrix& z, double noise_std, Rng& rng) const;

  // theta_bar <- zeta * theta_bar + (1 - zeta) * theta for encoder, dynamics
  // and Q heads when step % every == 0. Returns true if applied.
  bool update_targets(double zeta, int every, std::int64_t step);

  // Index ranges into theta for the networks that the EMA tracks.
  const std::vector<int>& target_sources() const { return target_sources_; }

 private:
  ModelConfig cfg_;
  ParamStore theta_;
  ParamStore psi_;
  std::vector<Matrix> target_;
  std::vector<int> target_sources_;  // theta index for every target array
  Mlp encoder_, dynamics_, reward_, q1_, q2_, policy_;
};

// Tape-side views of the networks, built from leaves that alias the store.
struct TapeParams {
  std::vector<Var> vars;
  std::span<const Var> slice(const Mlp& net) const {
    return std::span<const Var>(vars).subspan(net.first(), net.count());
  }
};

// Leaves referencing every array of `values` (no copies).
TapeParams bind_params(Tape& tape, std::span<const Matrix> values,
                       bool requires_grad);

// Concatenates latent and action columns.
Matrix join(const Matrix& z, const Matrix& a);

}  // namespace bsmpc

#endif  // BSMPC_MODELS_H_
