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

#ifndef BSMPC_PLANNER_H_
#define BSMPC_PLANNER_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsmpc/models.h"
#include "bsmpc/tensor.h"

namespace bsmpc {

// What the planner needs from a latent model. All batched calls take [M x .]
// inputs and must treat rows independently.
class LatentModel {
 public:
  virtual ~LatentModel() = default;
  virtual int latent_dim() const = 0;
  virtual int action_dim() const = 0;
  virtual Matrix next(const Matrix& z, const Matrix& a) const = 0;
  virtual Matrix reward(const Matrix& z, const Matrix& a) const = 0;
  // Terminal value Q(z, pi(z)), [M x 1].
  virtual Matrix value(const Matrix& z) const = 0;
  virtual Matrix policy(const Matrix& z, double noise_std, Rng& rng) const = 0;
};

// Learned models: value is the min over the twin online Q heads.
class ModelSetLatent final : public LatentModel {
 public:
  explicit ModelSetLatent(const ModelSet& models) : m_(models) {}
  int latent_dim() const override { return m_.config().latent_dim; }
  int action_dim() const override { return m_.config().action_dim; }
  Matrix next(const Matrix& z, const Matrix& a) const override;
  Matrix reward(const Matrix& z, const Matrix& a) const override;
  Matrix value(const Matrix& z) const override;
  Matrix policy(const Matrix& z, double noise_std, Rng& rng) const override;

 private:
  const ModelSet& m_;
};

struct PlanConfig {
  int horizon = 5;
  int population = 512;
  int elites = 64;
  int iterations = 6;
  double temperature = 0.5;
  double policy_fraction = 0.05;
  double init_mean = 0.0;
  double init_std = 2.0;
  // Linear schedules over the first schedule_steps env steps.
  double std_floor_start = 0.5;
  double std_floor_end = 0.05;
  int horizon_start = 1;
  std::int64_t schedule_steps = 25000;
  // mu <- momentum * mu_old + (1 - momentum) * mu_new between iterations.
  double momentum = 0.0;
  // Best sequences of one iteration re-entered into the next population in
  // place of Gaussian samples; with >= 1 the best score never decreases.
  int carry_elites = 1;
  int workers = 1;

  int policy_trajectories() const;
  double std_floor(std::int64_t env_step) const;
  int horizon_at(std::int64_t env_step) const;
  void validate() const;
  nlohmann::json to_json() const;
  static PlanConfig from_json(const nlohmann::json& j);
};

// Sampling distribution carried between env steps.
struct PlanState {
  Matrix mu;     // H x action_dim
  Matrix sigma;  // H x action_dim
  bool warm = false;

  // Forget the previous solution (start of an episode).
  void reset() { warm = false; }
};

struct PlanContext {
  std::int64_t env_step = 0;
  double gamma = 0.99;
  // Add the scheduled Gaussian noise to the returned action.
  bool explore = false;
};

struct PlanResult {
  Vector action;
  // Best score among the candidates of each iteration.
  std::vector<double> best_scores;
  double elite_spread = 0.0;  // max - min elite score, last iteration
  double sigma_mean = 0.0;
  bool fallback = false;
  std::string diagnostic;
};

// sum_h gamma^h R(z_h, a_h) + gamma^H V(z_H) for one sequence (H x A).
double rollout_score(const LatentModel& model, const Matrix& z,
                     const Matrix& actions, double gamma);

// Scores M sequences given as H blocks of [M x A]. Rows are processed in fixed
// chunks, so the result does not depend on `workers`.
Vector score_sequences(const LatentModel& model, const Matrix& z,
                       std::span<const Matrix> actions, double gamma,
                       int workers = 1);

struct EliteMoments {
  Matrix mean;
  Matrix std;
};

// Omega_i = exp((S_i - S_max) / tau); weighted mean and std of the elites.
EliteMoments weighted_moments(std::span<const Matrix> elites,
                              std::span<const double> scores,
                              double temperature);

// One MPPI solve from latent z (1 x latent_dim). Updates `state` in place and
// leaves it warm-started for the next env step.
PlanResult plan(const LatentModel& model, const Matrix& z,
                const PlanConfig& cfg, PlanState& state,
                const PlanContext& ctx, Rng& rng);

}  // namespace bsmpc

#endif  // BSMPC_PLANNER_H_
