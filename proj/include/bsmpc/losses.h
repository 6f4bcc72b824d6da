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

#ifndef BSMPC_LOSSES_H_
#define BSMPC_LOSSES_H_

#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsmpc/models.h"
#include "bsmpc/tensor.h"

namespace bsmpc {

enum class BisimDynDistance { kSquaredL2, kL2 };

struct LossCoefficients {
  double c1 = 0.5;   // reward
  double c2 = 0.1;   // value
  double c3 = 0.5;   // latent consistency
  double c4 = 0.01;  // bisimulation (pendulum setting)
  double lambda = 0.5;
  double gamma = 0.99;
  BisimDynDistance dyn_distance = BisimDynDistance::kSquaredL2;

  void validate() const;
  nlohmann::json to_json() const;
  static LossCoefficients from_json(const nlohmann::json& j);
};

// H+1 consecutive transitions for each of B sampled segments. Step k holds a
// [B x dim] block per quantity; obs has H+2 blocks (s_0 .. s_{H+1}).
struct SegmentBatch {
  std::vector<Matrix> obs;
  std::vector<Matrix> actions;
  std::vector<Matrix> rewards;  // [B x 1]

  int horizon() const { return static_cast<int>(actions.size()) - 1; }
  int batch_size() const {
    return actions.empty() ? 0 : static_cast<int>(actions.front().rows());
  }
  void validate() const;
};

// Unweighted per-step terms (batch means).
struct StepLoss {
  double reward = 0.0;
  double value = 0.0;
  double consistency = 0.0;
  double bisim = 0.0;
};

struct LossBreakdown {
  std::vector<StepLoss> per_step;
  // lambda^k-weighted sums of each term (before c1..c4).
  StepLoss weighted;
  // sum_k lambda^k (c1 A_k + c2 B_k + c3 C_k + c4 D_k)
  double total = 0.0;
  double grad_norm = 0.0;
  // Mean of the twin online Q heads over all (k, row).
  double q_mean = 0.0;
};

struct ModelLossResult {
  LossBreakdown breakdown;
  std::vector<Matrix> grads;  // aligned with ModelSet::theta()
};

struct PolicyLossResult {
  double loss = 0.0;
  std::vector<Matrix> grads;  // aligned with ModelSet::psi()
};

// Standard-normal observations and uniform [-1, 1] actions, rewards in
// [-1, 0]. Synthetic input for benchmarks.
SegmentBatch random_segment_batch(int state_dim, int action_dim, int batch,
                                  int horizon, Rng& rng);

// Uniform random permutation of {0..batch-1}, drawn once per training step.
std::vector<int> permute_batch(int batch, Rng& rng);

// Loss terms of step k only, evaluated without gradients.
StepLoss per_step_loss(const ModelSet& models, const SegmentBatch& batch,
                       int k, std::span<const int> perm,
                       const LossCoefficients& coeffs);

// Per-timestep objective with gradients w.r.t. theta. Every step k is built on
// its own tape from precomputed online encodings, so steps run concurrently
// on `workers` OpenMP threads. Partial gradients are reduced in step order,
// which makes the result independent of `workers`.
ModelLossResult total_model_loss(const ModelSet& models,
                                 const SegmentBatch& batch,
                                 std::span<const int> perm,
                                 const LossCoefficients& coeffs,
                                 int workers = 1);

// Serial reference: the whole objective on a single tape with one backward
// sweep. Kept for testing the parallel kernel.
ModelLossResult total_model_loss_serial(const ModelSet& models,
                                        const SegmentBatch& batch,
                                        std::span<const int> perm,
                                        const LossCoefficients& coeffs);

// Latent-rollout objective (terms A-C only) in which step k+1 consumes the
// dynamics prediction of step k, so steps cannot be evaluated independently.
// Used as the sequential baseline in benchmarks.
ModelLossResult sequential_rollout_loss(const ModelSet& models,
                                        const SegmentBatch& batch,
                                        const LossCoefficients& coeffs);

// -sum_k lambda^k mean_i minQ(z_k, pi(zbar_k)); z_k online encodings and
// zbar_k target encodings, both detached; Q heads frozen.
PolicyLossResult policy_loss(const ModelSet& models, const SegmentBatch& batch,
                             double lambda);

}  // namespace bsmpc

#endif  // BSMPC_LOSSES_H_
