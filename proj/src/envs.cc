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

#include "bsmpc/envs.h"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace bsmpc {

namespace {

constexpr double kPi = std::numbers::pi;

// Pendulum constants (classic-control values).
constexpr double kGravity = 10.0;
constexpr double kMass = 1.0;
constexpr double kLength = 1.0;
constexpr double kPendulumDt = 0.05;
constexpr double kMaxSpeed = 8.0;
constexpr double kMaxTorque = 2.0;

constexpr double kPointDt = 0.05;
constexpr double kDamping = 0.05;

Vector clip_action(const Vector& a, const EnvSpec& spec, bool* clipped) {
  if (a.size() != spec.action_dim) {
    throw ContractError("action has " + std::to_string(a.size()) +
                        " entries, expected " +
                        std::to_string(spec.action_dim));
  }
  if (!a.allFinite()) throw NumericError("non-finite action");
  Vector c = a.cwiseMax(spec.action_low).cwiseMin(spec.action_high);
  *clipped = (c.array() != a.array()).any();
  return c;
}

EnvSpec pendulum_spec(int episode_length) {
  EnvSpec s;
  s.state_dim = 3;
  s.action_dim = 1;
  s.action_low = Vector::Constant(1, -kMaxTorque);
  s.action_high = Vector::Constant(1, kMaxTorque);
  s.episode_length = episode_length;
  s.dt = kPendulumDt;
  s.validate();
  return s;
}

EnvSpec pointmass_spec(int episode_length) {
  EnvSpec s;
  s.state_dim = 4;
  s.action_dim = 2;
  s.action_low = Vector::Constant(2, -1.0);
  s.action_high = Vector::Constant(2, 1.0);
  s.episode_length = episode_length;
  s.dt = kPointDt;
  s.validate();
  return s;
}

}  // namespace

void EnvSpec::validate() const {
  if (state_dim <= 0 || action_dim <= 0) {
    throw ContractError("EnvSpec: dimensions must be positive");
  }
  if (action_low.size() != action_dim || action_high.size() != action_dim) {
    throw ContractError("EnvSpec: bounds must match action_dim");
  }
  if (!action_low.allFinite() || !action_high.allFinite() ||
      (action_low.array() >= action_high.array()).any()) {
    throw ContractError("EnvSpec: bounds must be finite with low < high");
  }
  if (episode_length <= 0) {
    throw ContractError("EnvSpec: episode length must be positive");
  }
}

double wrap_angle(double theta) {
  double w = std::fmod(theta + kPi, 2.0 * kPi);
  if (w < 0.0) w += 2.0 * kPi;
  return w - kPi;
}

StepResult pendulum_step(const Vector& state, const Vector& action) {
  if (state.size() != 3) throw ContractError("pendulum state has 3 entries");
  const double c = state(0);
  const double s = state(1);
  if (std::abs(c * c + s * s - 1.0) > 1e-9) {
    throw ContractError("pendulum state is off the unit circle");
  }
  static const EnvSpec spec = pendulum_spec(1);
  StepResult out;
  const double u = clip_action(action, spec, &out.clipped)(0);
  const double theta = std::atan2(s, c);
  const double thdot = state(2);
  out.reward = -(std::pow(wrap_angle(theta), 2) + 0.1 * thdot * thdot +
                 0.001 * u * u);
  double new_thdot =
      thdot + (3.0 * kGravity / (2.0 * kLength) * std::sin(theta) +
               3.0 / (kMass * kLength * kLength) * u) *
                  kPendulumDt;
  new_thdot = std::clamp(new_thdot, -kMaxSpeed, kMaxSpeed);
  const double new_theta = theta + new_thdot * kPendulumDt;
  out.obs = Vector(3);
  out.obs << std::cos(new_theta), std::sin(new_theta), new_thdot;
  return out;
}

StepResult pointmass_step(const Vector& state, const Vector& action) {
  if (state.size() != 4) throw ContractError("pointmass state has 4 entries");
  static const EnvSpec spec = pointmass_spec(1);
  StepResult out;
  const Vector f = clip_action(action, spec, &out.clipped);
  const Vector pos = state.head(2);
  const Vector vel = state.tail(2);
  out.reward = -pos.norm();
  const Vector new_vel = vel + (f - kDamping * vel) * kPointDt;
  out.obs = Vector(4);
  out.obs << pos + new_vel * kPointDt, new_vel;
  return out;
}

PendulumEnv::PendulumEnv(std::uint64_t seed, int episode_length)
    : spec_(pendulum_spec(episode_length)), rng_(seed) {}

Vector PendulumEnv::reset() {
  std::uniform_real_distribution<double> angle(-kPi, kPi);
  std::uniform_real_distribution<double> speed(-1.0, 1.0);
  const double th = angle(rng_);
  state_ = Vector(3);
  state_ << std::cos(th), std::sin(th), speed(rng_);
  t_ = 0;
  return state_;
}

StepResult PendulumEnv::step(const Vector& action) {
  if (state_.size() == 0) throw ContractError("step() before reset()");
  StepResult r = pendulum_step(state_, action);
  state_ = r.obs;
  ++t_;
  return r;
}

PointmassEnv::PointmassEnv(std::uint64_t seed, int episode_length)
    : spec_(pointmass_spec(episode_length)), rng_(seed) {}

Vector PointmassEnv::reset() {
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  state_ = Vector::Zero(4);
  state_(0) = pos(rng_);
  state_(1) = pos(rng_);
  t_ = 0;
  return state_;
}

StepResult PointmassEnv::step(const Vector& action) {
  if (state_.size() == 0) throw ContractError("step() before reset()");
  StepResult r = pointmass_step(state_, action);
  state_ = r.obs;
  ++t_;
  return r;
}

void DistractorConfig::validate() const {
  if (n_distractors < 0) {
    throw ContractError("n_distractors must be nonnegative");
  }
  if (!(std::abs(rho) < 1.0)) throw ContractError("|rho| must be below 1");
  if (!(noise_scale >= 0.0)) {
    throw ContractError("noise_scale must be nonnegative");
  }
}

nlohmann::json DistractorConfig::to_json() const {
  return {{"n", n_distractors},
          {"process", process == DistractorProcess::kAr1 ? "ar1" : "iid_gauss"},
          {"rho", rho},
          {"noise_scale", noise_scale}};
}

DistractorConfig DistractorConfig::from_json(const nlohmann::json& j) {
  DistractorConfig c;
  c.n_distractors = j.value("n", c.n_distractors);
  const std::string p = j.value("process", std::string("ar1"));
  if (p == "ar1") {
    c.process = DistractorProcess::kAr1;
  } else if (p == "iid_gauss") {
    c.process = DistractorProcess::kIidGauss;
  } else {
    throw ContractError("distractors.process must be 'ar1' or 'iid_gauss', "
                        "got '" + p + "'");
  }
  c.rho = j.value("rho", c.rho);
  c.noise_scale = j.value("noise_scale", c.noise_scale);
  c.validate();
  return c;
}

DistractorEnv::DistractorEnv(std::unique_ptr<Env> base,
                             const DistractorConfig& cfg, std::uint64_t seed)
    : base_(std::move(base)), cfg_(cfg), spec_(base_->spec()), rng_(seed) {
  cfg_.validate();
  spec_.state_dim += cfg_.n_distractors;
}

void DistractorEnv::seed(std::uint64_t seed) {
  base_->seed(seed);
  rng_.seed(seed ^ 0x9e3779b97f4a7c15ULL);
}

Vector DistractorEnv::observe(const Vector& base_obs) const {
  Vector o(spec_.state_dim);
  o << base_obs, d_;
  return o;
}

Vector DistractorEnv::reset() {
  const Vector b = base_->reset();
  std::normal_distribution<double> n(0.0, 1.0);
  // Start AR(1) at its stationary law so the marginal never drifts.
  const double sd = cfg_.process == DistractorProcess::kAr1
                        ? cfg_.noise_scale / std::sqrt(1.0 - cfg_.rho * cfg_.rho)
                        : cfg_.noise_scale;
  d_ = Vector(cfg_.n_distractors);
  for (int i = 0; i < cfg_.n_distractors; ++i) d_(i) = sd * n(rng_);
  return observe(b);
}

StepResult DistractorEnv::step(const Vector& action) {
  StepResult r = base_->step(action);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < cfg_.n_distractors; ++i) {
    const double e = cfg_.noise_scale * n(rng_);
    d_(i) = cfg_.process == DistractorProcess::kAr1 ? cfg_.rho * d_(i) + e : e;
  }
  r.obs = observe(r.obs);
  return r;
}

void EnvConfig::validate() const {
  if (task != "pendulum" && task != "pointmass") {
    throw ContractError("env.task must be 'pendulum' or 'pointmass', got '" +
                        task + "'");
  }
  if (episode_length <= 0) {
    throw ContractError("env.episode_length must be positive");
  }
  distractors.validate();
}

nlohmann::json EnvConfig::to_json() const {
  return {{"task", task},
          {"episode_length", episode_length},
          {"distractors", distractors.to_json()}};
}

EnvConfig EnvConfig::from_json(const nlohmann::json& j) {
  EnvConfig c;
  c.task = j.value("task", c.task);
  c.episode_length = j.value("episode_length", c.episode_length);
  if (j.contains("distractors")) {
    c.distractors = DistractorConfig::from_json(j.at("distractors"));
  }
  c.validate();
  return c;
}

std::unique_ptr<Env> make_env(const EnvConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::unique_ptr<Env> env;
  if (cfg.task == "pendulum") {
    env = std::make_unique<PendulumEnv>(seed, cfg.episode_length);
  } else {
    env = std::make_unique<PointmassEnv>(seed, cfg.episode_length);
  }
  if (cfg.distractors.n_distractors > 0) {
    env = std::make_unique<DistractorEnv>(std::move(env), cfg.distractors,
                                          seed);
    env->seed(seed);
  }
  return env;
}

}  // namespace bsmpc
