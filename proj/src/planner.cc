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

#include "bsmpc/planner.h"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numeric>

namespace bsmpc {
namespace {

constexpr Eigen::Index kChunk = 64;

Matrix repeat_rows(const Matrix& row, Eigen::Index n) {
  return row.replicate(n, 1);
}

}  // namespace

Matrix ModelSetLatent::next(const Matrix& z, const Matrix& a) const {
  return m_.predict_next(z, a);
}

Matrix ModelSetLatent::reward(const Matrix& z, const Matrix& a) const {
  return m_.predict_reward(z, a);
}

Matrix ModelSetLatent::value(const Matrix& z) const {
  return m_.q_value(z, m_.policy_mean(z), QMode::kMin);
}

Matrix ModelSetLatent::policy(const Matrix& z, double noise_std,
                              Rng& rng) const {
  return m_.policy_action(z, noise_std, rng);
}

int PlanConfig::policy_trajectories() const {
  return static_cast<int>(std::floor(policy_fraction * population));
}

double PlanConfig::std_floor(std::int64_t env_step) const {
  const double f =
      schedule_steps <= 0
          ? 1.0
          : std::min(1.0, static_cast<double>(env_step) / schedule_steps);
  return std_floor_start + (std_floor_end - std_floor_start) * f;
}

int PlanConfig::horizon_at(std::int64_t env_step) const {
  const double f =
      schedule_steps <= 0
          ? 1.0
          : std::min(1.0, static_cast<double>(env_step) / schedule_steps);
  return static_cast<int>(
      std::lround(horizon_start + (horizon - horizon_start) * f));
}

void PlanConfig::validate() const {
  if (horizon < 1) throw ContractError("planner.horizon must be >= 1");
  if (horizon_start < 1 || horizon_start > horizon) {
    throw ContractError("planner.horizon_start must lie in [1, horizon]");
  }
  if (population < 1) throw ContractError("planner.population must be >= 1");
  if (elites < 1 || elites > population) {
    throw ContractError("planner.elites must lie in [1, population]");
  }
  if (iterations < 1) throw ContractError("planner.iterations must be >= 1");
  if (!(temperature > 0.0)) {
    throw ContractError("planner.temperature must be positive");
  }
  if (!(policy_fraction >= 0.0 && policy_fraction <= 1.0)) {
    throw ContractError("planner.policy_fraction must lie in [0, 1]");
  }
  if (!(init_std > 0.0)) throw ContractError("planner.init_std must be > 0");
  if (!(std_floor_start >= 0.0 && std_floor_end >= 0.0)) {
    throw ContractError("planner std floors must be nonnegative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ContractError("planner.momentum must lie in [0, 1)");
  }
  if (carry_elites < 0) throw ContractError("planner.carry_elites must be >= 0");
  if (workers < 1) throw ContractError("planner.workers must be >= 1");
}

nlohmann::json PlanConfig::to_json() const {
  return {{"horizon", horizon},
          {"population", population},
          {"elites", elites},
          {"iterations", iterations},
          {"temperature", temperature},
          {"policy_fraction", policy_fraction},
          {"init_mean", init_mean},
          {"init_std", init_std},
          {"std_floor_start", std_floor_start},
          {"std_floor_end", std_floor_end},
          {"horizon_start", horizon_start},
          {"schedule_steps", schedule_steps},
          {"momentum", momentum},
          {"carry_elites", carry_elites},
          {"workers", workers}};
}

PlanConfig PlanConfig::from_json(const nlohmann::json& j) {
  PlanConfig c;
  c.horizon = j.value("horizon", c.horizon);
  c.population = j.value("population", c.population);
  c.elites = j.value("elites", c.elites);
  c.iterations = j.value("iterations", c.iterations);
  c.temperature = j.value("temperature", c.temperature);
  c.policy_fraction = j.value("policy_fraction", c.policy_fraction);
  c.init_mean = j.value("init_mean", c.init_mean);
  c.init_std = j.value("init_std", c.init_std);
  c.std_floor_start = j.value("std_floor_start", c.std_floor_start);
  c.std_floor_end = j.value("std_floor_end", c.std_floor_end);
  c.horizon_start = j.value("horizon_start", c.horizon_start);
  c.schedule_steps = j.value("schedule_steps", c.schedule_steps);
  c.momentum = j.value("momentum", c.momentum);
  c.carry_elites = j.value("carry_elites", c.carry_elites);
  c.workers = j.value("workers", c.workers);
  c.validate();
  return c;
}

double rollout_score(const LatentModel& model, const Matrix& z,
                     const Matrix& actions, double gamma) {
  std::vector<Matrix> steps;
  for (Eigen::Index h = 0; h < actions.rows(); ++h) {
    steps.push_back(actions.row(h));
  }
  return score_sequences(model, z, steps, gamma)(0);
}

Vector score_sequences(const LatentModel& model, const Matrix& z,
                       std::span<const Matrix> actions, double gamma,
                       int workers) {
  if (z.rows() != 1 || z.cols() != model.latent_dim()) {
    throw ContractError("score_sequences: z must be 1 x latent_dim");
  }
  if (workers < 1) throw ContractError("score_sequences: workers must be >= 1");
  const Eigen::Index m = actions.empty() ? 1 : actions.front().rows();
  for (const Matrix& a : actions) {
    if (a.rows() != m || a.cols() != model.action_dim()) {
      throw ContractError("score_sequences: action block has shape " +
                          shape_string(a));
    }
  }
  Vector scores(m);
  const Eigen::Index chunks = (m + kChunk - 1) / kChunk;
  std::exception_ptr error;
#pragma omp parallel for num_threads(workers) schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    try {
      const Eigen::Index begin = c * kChunk;
      const Eigen::Index rows = std::min(kChunk, m - begin);
      Matrix zh = repeat_rows(z, rows);
      Vector g = Vector::Zero(rows);
      double discount = 1.0;
      for (const Matrix& a : actions) {
        const Matrix ah = a.middleRows(begin, rows);
        g += discount * model.reward(zh, ah).col(0);
        zh = model.next(zh, ah);
        discount *= gamma;
      }
      g += discount * model.value(zh).col(0);
      scores.segment(begin, rows) = g;
    } catch (...) {
#pragma omp critical(planner_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return scores;
}

EliteMoments weighted_moments(std::span<const Matrix> elites,
                              std::span<const double> scores,
                              double temperature) {
  if (elites.empty() || elites.size() != scores.size()) {
    throw ContractError("weighted_moments: need one score per elite");
  }
  if (!(temperature > 0.0)) {
    throw ContractError("weighted_moments: temperature must be positive");
  }
  const double smax = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    w[i] = std::exp((scores[i] - smax) / temperature);
    total += w[i];
  }
  EliteMoments out;
  out.mean = Matrix::Zero(elites[0].rows(), elites[0].cols());
  for (std::size_t i = 0; i < elites.size(); ++i) {
    out.mean += (w[i] / total) * elites[i];
  }
  Matrix var = Matrix::Zero(out.mean.rows(), out.mean.cols());
  for (std::size_t i = 0; i < elites.size(); ++i) {
    var += (w[i] / total) * (elites[i] - out.mean).cwiseAbs2();
  }
  out.std = var.cwiseSqrt();
  return out;
}

PlanResult plan(const LatentModel& model, const Matrix& z,
                const PlanConfig& cfg, PlanState& state,
                const PlanContext& ctx, Rng& rng) {
  cfg.validate();
  if (!all_finite(z)) throw NumericError("plan: latent state is not finite");
  const int horizon = cfg.horizon_at(ctx.env_step);
  const int adim = model.action_dim();
  const double floor = cfg.std_floor(ctx.env_step);
  const int m = cfg.population;
  const int n_pi = cfg.policy_trajectories();

  // Warm start: shift the previous mean one step left and pad with zeros;
  // sigma restarts wide.
  Matrix mu = Matrix::Constant(horizon, adim, cfg.init_mean);
  if (state.warm) {
    mu.setZero();
    const Eigen::Index keep =
        std::min<Eigen::Index>(horizon, state.mu.rows() - 1);
    if (keep > 0) mu.topRows(keep) = state.mu.middleRows(1, keep);
  }
  Matrix sigma = Matrix::Constant(horizon, adim, cfg.init_std);

  std::vector<Matrix> seq(static_cast<std::size_t>(horizon),
                          Matrix(m, adim));
  // Policy-prior trajectories are rolled out once and kept for all iterations.
  if (n_pi > 0) {
    Matrix zp = repeat_rows(z, n_pi);
    for (int h = 0; h < horizon; ++h) {
      const Matrix a = model.policy(zp, floor, rng);
      seq[static_cast<std::size_t>(h)].topRows(n_pi) = a;
      zp = model.next(zp, a);
    }
  }

  PlanResult res;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> order(static_cast<std::size_t>(m));
  const Matrix pi0 = model.policy(z, 0.0, rng);
  std::vector<Matrix> carried;
  for (int it = 0; it < cfg.iterations; ++it) {
    for (int h = 0; h < horizon; ++h) {
      Matrix& block = seq[static_cast<std::size_t>(h)];
      for (int i = n_pi; i < m; ++i) {
        for (int d = 0; d < adim; ++d) {
          block(i, d) = std::clamp(mu(h, d) + sigma(h, d) * normal(rng),
                                   -1.0, 1.0);
        }
      }
    }
    // The best sequences of the previous iteration take the last slots.
    for (std::size_t c = 0; c < carried.size(); ++c) {
      const int row = m - 1 - static_cast<int>(c);
      for (int h = 0; h < horizon; ++h) {
        seq[static_cast<std::size_t>(h)].row(row) = carried[c].row(h);
      }
    }
    Vector scores = score_sequences(model, z, seq, ctx.gamma, cfg.workers);
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      if (!std::isfinite(scores(i))) {
        scores(i) = -std::numeric_limits<double>::infinity();
      }
    }
    std::iota(order.begin(), order.end(), 0);
    const int n_elite = cfg.elites;
    std::partial_sort(order.begin(), order.begin() + n_elite, order.end(),
                      [&](int a, int b) {
                        if (scores(a) != scores(b)) return scores(a) > scores(b);
                        return a < b;
                      });
    std::vector<Matrix> elites;
    std::vector<double> elite_scores;
    for (int e = 0; e < n_elite; ++e) {
      const int i = order[static_cast<std::size_t>(e)];
      if (!std::isfinite(scores(i))) break;
      Matrix a(horizon, adim);
      for (int h = 0; h < horizon; ++h) {
        a.row(h) = seq[static_cast<std::size_t>(h)].row(i);
      }
      elites.push_back(std::move(a));
      elite_scores.push_back(scores(i));
    }
    if (elites.empty()) {
      res.fallback = true;
      res.diagnostic = "planner: every candidate score was non-finite at "
                       "iteration " + std::to_string(it) +
                       "; using the policy action";
      res.action = pi0.row(0).transpose();
      state.reset();
      return res;
    }
    const std::size_t keep = static_cast<std::size_t>(
        std::min(cfg.carry_elites, m - n_pi));
    carried.assign(elites.begin(),
                   elites.begin() + std::min(keep, elites.size()));
    res.best_scores.push_back(elite_scores.front());
    res.elite_spread = elite_scores.front() - elite_scores.back();
    const EliteMoments mom =
        weighted_moments(elites, elite_scores, cfg.temperature);
    mu = cfg.momentum * mu + (1.0 - cfg.momentum) * mom.mean;
    sigma = mom.std.cwiseMax(floor);
  }

  state.mu = mu;
  state.sigma = sigma;
  state.warm = true;
  res.sigma_mean = sigma.mean();
  Vector a = mu.row(0).transpose();
  if (ctx.explore && floor > 0.0) {
    for (Eigen::Index d = 0; d < a.size(); ++d) a(d) += floor * normal(rng);
  }
  res.action = a.cwiseMax(-1.0).cwiseMin(1.0);
  return res;
}

}  // namespace bsmpc
