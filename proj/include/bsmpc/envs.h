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

#ifndef BSMPC_ENVS_H_
#define BSMPC_ENVS_H_

#include <cstdint>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "bsmpc/tensor.h"

namespace bsmpc {

struct EnvSpec {
  int state_dim = 0;
  int action_dim = 0;
  Vector action_low;
  Vector action_high;
  int episode_length = 0;
  double dt = 0.0;

  void validate() const;
};

struct StepResult {
  Vector obs;
  double reward = 0.0;
  bool clipped = false;  // action was outside bounds and got clipped
};

// Pure transition functions. The state is the observation vector.
StepResult pendulum_step(const Vector& state, const Vector& action);
StepResult pointmass_step(const Vector& state, const Vector& action);

// Wraps an angle into [-pi, pi).
double wrap_angle(double theta);

class Env {
 public:
  virtual ~Env() = default;
  virtual const EnvSpec& spec() const = 0;
  // Reseeds the instance; the next reset() draws from the new stream.
  virtual void seed(std::uint64_t seed) = 0;
  virtual Vector reset() = 0;
  virtual StepResult step(const Vector& action) = 0;
  // Number of steps taken in the current episode.
  virtual int t() const = 0;
  bool done() const { return t() >= spec().episode_length; }
};

// theta = 0 upright; observation (cos, sin, thetadot); torque in [-2, 2].
class PendulumEnv : public Env {
 public:
  explicit PendulumEnv(std::uint64_t seed = 0, int episode_length = 200);
  const EnvSpec& spec() const override { return spec_; }
  void seed(std::uint64_t seed) override { rng_.seed(seed); }
  Vector reset() override;
  StepResult step(const Vector& action) override;
  int t() const override { return t_; }

 private:
  EnvSpec spec_;
  Rng rng_;
  Vector state_;
  int t_ = 0;
};

// Planar double integrator with damping; goal at the origin.
class PointmassEnv : public Env {
 public:
  explicit PointmassEnv(std::uint64_t seed = 0, int episode_length = 200);
  const EnvSpec& spec() const override { return spec_; }
  void seed(std::uint64_t seed) override { rng_.seed(seed); }
  Vector reset() override;
  StepResult step(const Vector& action) override;
  int t() const override { return t_; }

 private:
  EnvSpec spec_;
  Rng rng_;
  Vector state_;
  int t_ = 0;
};

enum class DistractorProcess { kIidGauss, kAr1 };

struct DistractorConfig {
  int n_distractors = 0;
  DistractorProcess process = DistractorProcess::kAr1;
  double rho = 0.9;
  double noise_scale = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
  static DistractorConfig from_json(const nlohmann::json& j);
};

// Appends action-independent noise dimensions to the observation. The noise
// has its own generator, so the distractor stream depends only on the seed.
class DistractorEnv : public Env {
 public:
  DistractorEnv(std::unique_ptr<Env> base, const DistractorConfig& cfg,
                std::uint64_t seed);
  const EnvSpec& spec() const override { return spec_; }
  void seed(std::uint64_t seed) override;
  Vector reset() override;
  StepResult step(const Vector& action) override;
  int t() const override { return base_->t(); }
  const Vector& distractors() const { return d_; }

 private:
  Vector observe(const Vector& base_obs) const;

  std::unique_ptr<Env> base_;
  DistractorConfig cfg_;
  EnvSpec spec_;
  Rng rng_;
  Vector d_;
};

struct EnvConfig {
  std::string task = "pendulum";
  int episode_length = 200;
  DistractorConfig distractors;

  void validate() const;
  nlohmann::json to_json() const;
  static EnvConfig from_json(const nlohmann::json& j);
};

std::unique_ptr<Env> make_env(const EnvConfig& cfg, std::uint64_t seed);

}  // namespace bsmpc

#endif  // BSMPC_ENVS_H_
