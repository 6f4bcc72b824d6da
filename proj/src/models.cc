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

#include "bsmpc/models.h"

#include <algorithm>
#include <cmath>

namespace bsmpc {
namespace {

Matrix uniform_init(int fan_in, int fan_out, Rng& rng) {
  const double bound = std::sqrt(1.0 / fan_in);
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
  return w;
}

}  // namespace

Mlp::Mlp(ParamStore& store, const std::string& prefix, int in, int hidden,
         int out, bool layer_norm, Rng& rng)
    : first_(static_cast<int>(store.size())),
      in_(in),
      out_(out),
      layer_norm_(layer_norm) {
  if (in <= 0 || hidden <= 0 || out <= 0) {
    throw ContractError("Mlp: dimensions must be positive");
  }
  const int dims[4] = {in, hidden, hidden, out};
  for (int l = 0; l < 3; ++l) {
    const std::string p = prefix + "." + std::to_string(l);
    store.add(p + ".w", uniform_init(dims[l], dims[l + 1], rng));
    store.add(p + ".b", Matrix::Zero(1, dims[l + 1]));
    if (layer_norm && l < 2) {
      store.add(p + ".ln_gain", Matrix::Ones(1, dims[l + 1]));
      store.add(p + ".ln_bias", Matrix::Zero(1, dims[l + 1]));
    }
  }
  count_ = static_cast<int>(store.size()) - first_;
}

Matrix Mlp::forward(std::span<const Matrix> params, const Matrix& x) const {
  if (static_cast<int>(params.size()) != count_) {
    throw ContractError("Mlp::forward: wrong parameter count");
  }
  if (x.cols() != in_) {
    throw ContractError("Mlp::forward: input width " +
                        std::to_string(x.cols()) + ", expected " +
                        std::to_string(in_));
  }
  std::size_t p = 0;
  Matrix h = x;
  for (int l = 0; l < 3; ++l) {
    h = affine_value(h, params[p], params[p + 1]);
    p += 2;
    if (l < 2) {
      if (layer_norm_) {
        layer_norm_inplace(h, params[p], params[p + 1]);
        p += 2;
      }
      elu_inplace(h);
    }
  }
  return h;
}

Var Mlp::forward(std::span<const Var> params, Var x) const {
  if (static_cast<int>(params.size()) != count_) {
    throw ContractError("Mlp::forward: wrong parameter count");
  }
  if (x.cols() != in_) {
    throw ContractError("Mlp::forward: input width " +
                        std::to_string(x.cols()) + ", expected " +
                        std::to_string(in_));
  }
  std::size_t p = 0;
  Var h = x;
  for (int l = 0; l < 3; ++l) {
    h = affine(h, params[p], params[p + 1]);
    p += 2;
    if (l < 2) {
      if (layer_norm_) {
        h = layer_norm(h, params[p], params[p + 1]);
        p += 2;
      }
      h = elu(h);
    }
  }
  return h;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"state_dim", state_dim},
          {"action_dim", action_dim},
          {"latent_dim", latent_dim},
          {"hidden_dim", hidden_dim}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.state_dim = j.value("state_dim", c.state_dim);
  c.action_dim = j.value("action_dim", c.action_dim);
  c.latent_dim = j.value("latent_dim", c.latent_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  return c;
}

ModelSet::ModelSet(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const int za = cfg.latent_dim + cfg.action_dim;
  encoder_ = Mlp(theta_, "encoder", cfg.state_dim, cfg.hidden_dim,
                 cfg.latent_dim, false, rng);
  dynamics_ = Mlp(theta_, "dynamics", za, cfg.hidden_dim, cfg.latent_dim,
                  false, rng);
  reward_ = Mlp(theta_, "reward", za, cfg.hidden_dim, 1, false, rng);
  q1_ = Mlp(theta_, "q1", za, cfg.hidden_dim, 1, true, rng);
  q2_ = Mlp(theta_, "q2", za, cfg.hidden_dim, 1, true, rng);
  policy_ = Mlp(psi_, "policy", cfg.latent_dim, cfg.hidden_dim,
                cfg.action_dim, false, rng);

  for (const Mlp* net : {&encoder_, &dynamics_, &q1_, &q2_}) {
    for (int i = 0; i < net->count(); ++i) {
      target_sources_.push_back(net->first() + i);
      target_.push_back(theta_.value(net->first() + i));
    }
  }
}

std::span<const Matrix> ModelSet::online(const Mlp& net) const {
  const ParamStore& store = (&net == &policy_) ? psi_ : theta_;
  return store.values().subspan(net.first(), net.count());
}

std::span<const Matrix> ModelSet::targets(const Mlp& net) const {
  std::size_t offset = 0;
  for (const Mlp* n : {&encoder_, &dynamics_, &q1_, &q2_}) {
    if (n == &net) {
      return std::span<const Matrix>(target_).subspan(offset, net.count());
    }
    offset += n->count();
  }
  throw ContractError("ModelSet::targets: network has no target copy");
}

Matrix join(const Matrix& z, const Matrix& a) {
  if (z.rows() != a.rows()) {
    throw ContractError("join: row mismatch " + shape_string(z) + " vs " +
                        shape_string(a));
  }
  Matrix za(z.rows(), z.cols() + a.cols());
  za << z, a;
  return za;
}

Matrix ModelSet::encode(const Matrix& states) const {
  return encoder_.forward(online(encoder_), states);
}

Matrix ModelSet::encode_target(const Matrix& states) const {
  return encoder_.forward(targets(encoder_), states);
}

Matrix ModelSet::predict_next(const Matrix& z, const Matrix& a) const {
  return dynamics_.forward(online(dynamics_), join(z, a));
}

Matrix ModelSet::predict_next_target(const Matrix& z, const Matrix& a) const {
  return dynamics_.forward(targets(dynamics_), join(z, a));
}

Matrix ModelSet::predict_reward(const Matrix& z, const Matrix& a) const {
  return reward_.forward(online(reward_), join(z, a));
}

namespace {

Matrix combine_heads(Matrix q1, const Matrix& q2, QMode mode) {
  switch (mode) {
    case QMode::kMin:
      return q1.cwiseMin(q2);
    case QMode::kHead1:
      return q1;
    case QMode::kHead2:
      return q2;
    case QMode::kAvg:
      return 0.5 * (q1 + q2);
  }
  return q1;
}

}  // namespace

Matrix ModelSet::q_value(const Matrix& z, const Matrix& a, QMode mode) const {
  const Matrix za = join(z, a);
  Matrix q1 = mode == QMode::kHead2 ? Matrix() : q1_.forward(online(q1_), za);
  Matrix q2 = mode == QMode::kHead1 ? Matrix() : q2_.forward(online(q2_), za);
  return combine_heads(std::move(q1), q2, mode);
}

Matrix ModelSet::q_value_target(const Matrix& z, const Matrix& a,
                                QMode mode) const {
  const Matrix za = join(z, a);
  Matrix q1 = mode == QMode::kHead2 ? Matrix() : q1_.forward(targets(q1_), za);
  Matrix q2 = mode == QMode::kHead1 ? Matrix() : q2_.forward(targets(q2_), za);
  return combine_heads(std::move(q1), q2, mode);
}

Matrix ModelSet::policy_mean(const Matrix& z) const {
  return policy_.forward(online(policy_), z).array().tanh().matrix();
}

Matrix ModelSet::policy_action(const Matrix& z, double noise_std,
                               Rng& rng) const {
  if (noise_std < 0.0) throw ContractError("policy_action: noise_std < 0");
  Matrix a = policy_mean(z);
  if (noise_std > 0.0) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] += noise_std * n(rng);
    }
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

bool ModelSet::update_targets(double zeta, int every, std::int64_t step) {
  if (!(zeta >= 0.0 && zeta < 1.0)) {
    throw ContractError("update_targets: zeta must lie in [0, 1)");
  }
  if (every <= 0) throw ContractError("update_targets: every must be > 0");
  if (step % every != 0) return false;
  for (std::size_t i = 0; i < target_.size(); ++i) {
    target_[i] = zeta * target_[i] + (1.0 - zeta) * theta_.value(target_sources_[i]);
  }
  return true;
}

TapeParams bind_params(Tape& tape, std::span<const Matrix> values,
                       bool requires_grad) {
  TapeParams p;
  p.vars.reserve(values.size());
  for (const Matrix& v : values) p.vars.push_back(tape.ref(v, requires_grad));
  return p;
}

}  // namespace bsmpc
