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

#ifndef BSMPC_TRAINER_H_
#define BSMPC_TRAINER_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsmpc/envs.h"
#include "bsmpc/losses.h"
#include "bsmpc/models.h"
#include "bsmpc/param_store.h"
#include "bsmpc/planner.h"

namespace bsmpc {

struct TrainConfig {
  EnvConfig env;
  int latent_dim = 50;
  int hidden_dim = 512;
  LossCoefficients loss;
  PlanConfig planner;
  AdamConfig adam;
  int horizon = 5;  // training segment length H
  int batch_size = 512;
  std::int64_t total_steps = 100000;
  std::int64_t seed_steps = 5000;
  std::int64_t buffer_capacity = 1000000;
  double zeta = 0.99;
  int target_every = 2;
  double grad_clip = 10.0;
  std::int64_t eval_every = 5000;  // 0 disables periodic evaluation
  int eval_episodes = 10;
  std::int64_t checkpoint_every = 0;  // 0 writes only the final checkpoint
  int workers = 1;
  std::uint64_t seed = 1;

  void validate() const;
  ModelConfig model_config() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

struct Episode {
  std::int64_t id = 0;
  Matrix obs;      // (L + 1) x state_dim
  Matrix actions;  // L x action_dim, normalized to [-1, 1]
  Vector rewards;  // L
  int length() const { return static_cast<int>(actions.rows()); }
};

// Whole episodes, oldest evicted first once the transition count exceeds the
// capacity. Segments are drawn uniformly over all valid start points.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::int64_t capacity) : capacity_(capacity) {}
  void add(Episode ep);
  std::int64_t transitions() const { return transitions_; }
  const std::deque<Episode>& episodes() const { return episodes_; }
  // Number of start points t with t + horizon + 1 <= episode length.
  std::int64_t valid_starts(int horizon) const;
  struct Start {
    std::size_t episode;  // index into episodes()
    int t;
  };
  Start sample_start(int horizon, Rng& rng) const;
  SegmentBatch sample(int batch, int horizon, Rng& rng,
                      std::vector<Start>* starts = nullptr) const;

 private:
  std::int64_t capacity_;
  std::int64_t transitions_ = 0;
  std::deque<Episode> episodes_;
};

struct UpdateStats {
  LossBreakdown breakdown;
  double policy_loss = 0.0;
  double policy_grad_norm = 0.0;
  bool skipped = false;
};

struct EvalResult {
  std::vector<double> returns;
  double mean = 0.0;
  double std = 0.0;
};

struct EpisodeResult {
  double episode_return = 0.0;
  int plan_calls = 0;
  int fallbacks = 0;
  int clipped_actions = 0;
};

class Trainer {
 public:
  // With an empty `out_dir` nothing is written to disk.
  Trainer(TrainConfig cfg, std::filesystem::path out_dir = {});

  const TrainConfig& config() const { return cfg_; }
  ModelSet& models() { return *models_; }
  const ModelSet& models() const { return *models_; }
  ReplayBuffer& buffer() { return buffer_; }
  std::int64_t env_step() const { return env_step_; }
  std::int64_t updates() const { return updates_; }
  std::int64_t skipped_steps() const { return skipped_; }

  // One episode in the training env; random actions until seed_steps.
  EpisodeResult collect_episode();
  UpdateStats train_step(const SegmentBatch& batch);
  EvalResult evaluate(int episodes, std::uint64_t seed) const;
  // Runs until total_steps env steps have been collected.
  EvalResult run();

  void save_checkpoint(const std::filesystem::path& path) const;

  // Called after every training update (metrics CSV rows go through here too).
  std::function<void(const UpdateStats&)> on_update;
  // Called after every periodic evaluation; returning true ends the run there.
  std::function<bool(const EvalResult&)> on_eval;
  // Called after every episode with its return.
  std::function<void(const EpisodeResult&)> on_episode;

 private:
  void write_row(const UpdateStats& u);

  TrainConfig cfg_;
  std::filesystem::path out_dir_;
  Rng rng_;
  std::unique_ptr<ModelSet> models_;
  std::unique_ptr<Env> env_;
  ReplayBuffer buffer_;
  PlanState plan_state_;
  std::int64_t env_step_ = 0;
  std::int64_t last_update_step_ = 0;
  std::int64_t updates_ = 0;
  std::int64_t skipped_ = 0;
  std::int64_t episodes_ = 0;
  std::optional<double> last_return_;
  std::optional<EvalResult> last_eval_;
  std::ofstream csv_;
};

// Normalized [-1, 1] action to the env's box.
Vector scale_action(const EnvSpec& spec, const Vector& a);

// Plans with exploration off on a fresh env per episode (seed + i).
EvalResult evaluate_policy(const ModelSet& models, const TrainConfig& cfg,
                           std::int64_t env_step, int episodes,
                           std::uint64_t seed);

struct LoadedRun {
  TrainConfig config;
  std::unique_ptr<ModelSet> models;
  std::int64_t env_step = 0;
};
LoadedRun load_checkpoint(const std::filesystem::path& path);

extern const char* const kMetricsHeader;

}  // namespace bsmpc

#endif  // BSMPC_TRAINER_H_
