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

#include "bsmpc/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>

#include "bsmpc/checkpoint.h"

namespace bsmpc {

const char* const kMetricsHeader =
    "step,total,reward_loss,value_loss,consistency_loss,bisim_loss,grad_norm,"
    "q_mean,env_step,episode_return,eval_return_mean,eval_return_std,"
    "skipped_steps";

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

bool grads_finite(const std::vector<Matrix>& grads) {
  return std::all_of(grads.begin(), grads.end(),
                     [](const Matrix& g) { return all_finite(g); });
}

EvalResult summarize(std::vector<double> returns) {
  EvalResult r;
  r.returns = std::move(returns);
  const double n = static_cast<double>(r.returns.size());
  r.mean = std::accumulate(r.returns.begin(), r.returns.end(), 0.0) / n;
  double sq = 0.0;
  for (double x : r.returns) sq += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(sq / n);
  return r;
}

}  // namespace

void TrainConfig::validate() const {
  env.validate();
  loss.validate();
  planner.validate();
  if (latent_dim < 1 || hidden_dim < 1) {
    throw ContractError("latent_dim and hidden_dim must be positive");
  }
  if (horizon < 1) throw ContractError("train.horizon must be >= 1");
  if (batch_size < 2) {
    throw ContractError("train.batch_size must be >= 2 (bisimulation pairs)");
  }
  if (total_steps < 0 || seed_steps < 0) {
    throw ContractError("step budgets must be nonnegative");
  }
  if (buffer_capacity < env.episode_length) {
    throw ContractError("train.buffer_capacity must hold one episode");
  }
  if (env.episode_length < horizon + 1) {
    throw ContractError("episode_length must be at least horizon + 1");
  }
  if (!(zeta >= 0.0 && zeta < 1.0)) throw ContractError("train.zeta in [0, 1)");
  if (target_every < 1) throw ContractError("train.target_every must be >= 1");
  if (!(grad_clip > 0.0)) throw ContractError("train.grad_clip must be > 0");
  if (eval_every < 0 || checkpoint_every < 0) {
    throw ContractError("eval_every / checkpoint_every must be >= 0");
  }
  if (eval_episodes < 1) throw ContractError("train.eval_episodes must be >= 1");
  if (workers < 1) throw ContractError("train.workers must be >= 1");
  if (!(adam.lr > 0.0)) throw ContractError("train.lr must be positive");
}

ModelConfig TrainConfig::model_config() const {
  const EnvSpec spec = make_env(env, 0)->spec();
  ModelConfig m;
  m.state_dim = spec.state_dim;
  m.action_dim = spec.action_dim;
  m.latent_dim = latent_dim;
  m.hidden_dim = hidden_dim;
  return m;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"env", env.to_json()},
          {"model", {{"latent_dim", latent_dim}, {"hidden_dim", hidden_dim}}},
          {"loss", loss.to_json()},
          {"planner", planner.to_json()},
          {"train",
           {{"horizon", horizon},
            {"batch_size", batch_size},
            {"total_steps", total_steps},
            {"seed_steps", seed_steps},
            {"buffer_capacity", buffer_capacity},
            {"lr", adam.lr},
            {"beta1", adam.beta1},
            {"beta2", adam.beta2},
            {"zeta", zeta},
            {"target_every", target_every},
            {"grad_clip", grad_clip},
            {"eval_every", eval_every},
            {"eval_episodes", eval_episodes},
            {"checkpoint_every", checkpoint_every},
            {"workers", workers}}},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  const nlohmann::json empty = nlohmann::json::object();
  c.env = EnvConfig::from_json(j.value("env", empty));
  const nlohmann::json& m = j.contains("model") ? j.at("model") : empty;
  c.latent_dim = m.value("latent_dim", c.latent_dim);
  c.hidden_dim = m.value("hidden_dim", c.hidden_dim);
  c.loss = LossCoefficients::from_json(j.value("loss", empty));
  c.planner = PlanConfig::from_json(j.value("planner", empty));
  const nlohmann::json& t = j.contains("train") ? j.at("train") : empty;
  c.horizon = t.value("horizon", c.horizon);
  c.batch_size = t.value("batch_size", c.batch_size);
  c.total_steps = t.value("total_steps", c.total_steps);
  c.seed_steps = t.value("seed_steps", c.seed_steps);
  c.buffer_capacity = t.value("buffer_capacity", c.buffer_capacity);
  c.adam.lr = t.value("lr", c.adam.lr);
  c.adam.beta1 = t.value("beta1", c.adam.beta1);
  c.adam.beta2 = t.value("beta2", c.adam.beta2);
  c.zeta = t.value("zeta", c.zeta);
  c.target_every = t.value("target_every", c.target_every);
  c.grad_clip = t.value("grad_clip", c.grad_clip);
  c.eval_every = t.value("eval_every", c.eval_every);
  c.eval_episodes = t.value("eval_episodes", c.eval_episodes);
  c.checkpoint_every = t.value("checkpoint_every", c.checkpoint_every);
  c.workers = t.value("workers", c.workers);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

void ReplayBuffer::add(Episode ep) {
  if (ep.length() < 1 || ep.obs.rows() != ep.length() + 1 ||
      ep.rewards.size() != ep.length()) {
    throw ContractError("ReplayBuffer::add: inconsistent episode shapes");
  }
  if (!ep.rewards.allFinite()) {
    throw NumericError("ReplayBuffer::add: non-finite reward");
  }
  transitions_ += ep.length();
  episodes_.push_back(std::move(ep));
  while (transitions_ > capacity_ && episodes_.size() > 1) {
    transitions_ -= episodes_.front().length();
    episodes_.pop_front();
  }
}

std::int64_t ReplayBuffer::valid_starts(int horizon) const {
  std::int64_t n = 0;
  for (const Episode& ep : episodes_) {
    n += std::max(0, ep.length() - horizon);
  }
  return n;
}

ReplayBuffer::Start ReplayBuffer::sample_start(int horizon, Rng& rng) const {
  const std::int64_t total = valid_starts(horizon);
  if (total == 0) {
    throw ContractError("replay buffer holds no episode with at least " +
                        std::to_string(horizon + 1) + " transitions");
  }
  std::uniform_int_distribution<std::int64_t> u(0, total - 1);
  std::int64_t k = u(rng);
  for (std::size_t e = 0; e < episodes_.size(); ++e) {
    const std::int64_t n = std::max(0, episodes_[e].length() - horizon);
    if (k < n) return {e, static_cast<int>(k)};
    k -= n;
  }
  throw std::logic_error("sample_start: unreachable");
}

SegmentBatch ReplayBuffer::sample(int batch, int horizon, Rng& rng,
                                  std::vector<Start>* starts) const {
  if (batch < 1) throw ContractError("ReplayBuffer::sample: batch < 1");
  if (episodes_.empty()) throw ContractError("replay buffer is empty");
  const Episode& first = episodes_.front();
  const Eigen::Index sdim = first.obs.cols();
  const Eigen::Index adim = first.actions.cols();
  SegmentBatch b;
  b.obs.assign(static_cast<std::size_t>(horizon + 2), Matrix(batch, sdim));
  b.actions.assign(static_cast<std::size_t>(horizon + 1), Matrix(batch, adim));
  b.rewards.assign(static_cast<std::size_t>(horizon + 1), Matrix(batch, 1));
  if (starts) starts->clear();
  for (int i = 0; i < batch; ++i) {
    const Start s = sample_start(horizon, rng);
    if (starts) starts->push_back(s);
    const Episode& ep = episodes_[s.episode];
    for (int k = 0; k <= horizon + 1; ++k) {
      b.obs[static_cast<std::size_t>(k)].row(i) = ep.obs.row(s.t + k);
    }
    for (int k = 0; k <= horizon; ++k) {
      b.actions[static_cast<std::size_t>(k)].row(i) = ep.actions.row(s.t + k);
      b.rewards[static_cast<std::size_t>(k)](i, 0) = ep.rewards(s.t + k);
    }
  }
  return b;
}

Vector scale_action(const EnvSpec& spec, const Vector& a) {
  return spec.action_low.array() +
         (a.array() + 1.0) * 0.5 * (spec.action_high - spec.action_low).array();
}

Trainer::Trainer(TrainConfig cfg, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)),
      out_dir_(std::move(out_dir)),
      rng_(cfg_.seed),
      buffer_(cfg_.buffer_capacity) {
  cfg_.validate();
  models_ = std::make_unique<ModelSet>(cfg_.model_config(), rng_);
  env_ = make_env(cfg_.env, cfg_.seed);
  if (!out_dir_.empty()) {
    std::filesystem::create_directories(out_dir_);
    csv_.open(out_dir_ / "metrics.csv");
    if (!csv_) {
      throw std::runtime_error("cannot write " +
                               (out_dir_ / "metrics.csv").string());
    }
    csv_ << kMetricsHeader << '\n';
  }
}

EpisodeResult Trainer::collect_episode() {
  const EnvSpec spec = env_->spec();
  const int len = spec.episode_length;
  Episode ep;
  ep.id = episodes_++;
  ep.obs.resize(len + 1, spec.state_dim);
  ep.actions.resize(len, spec.action_dim);
  ep.rewards.resize(len);
  ep.obs.row(0) = env_->reset().transpose();
  plan_state_.reset();
  EpisodeResult res;
  const ModelSetLatent latent(*models_);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  for (int t = 0; t < len; ++t) {
    Vector a(spec.action_dim);
    if (env_step_ < cfg_.seed_steps) {
      for (Eigen::Index d = 0; d < a.size(); ++d) a(d) = uniform(rng_);
    } else {
      PlanContext ctx;
      ctx.env_step = env_step_;
      ctx.gamma = cfg_.loss.gamma;
      ctx.explore = true;
      const Matrix z = models_->encode(ep.obs.row(t));
      const PlanResult pr = plan(latent, z, cfg_.planner, plan_state_, ctx,
                                 rng_);
      ++res.plan_calls;
      res.fallbacks += pr.fallback;
      a = pr.action;
    }
    const StepResult sr = env_->step(scale_action(spec, a));
    res.clipped_actions += sr.clipped;
    ep.actions.row(t) = a.transpose();
    ep.rewards(t) = sr.reward;
    ep.obs.row(t + 1) = sr.obs.transpose();
    res.episode_return += sr.reward;
    ++env_step_;
  }
  buffer_.add(std::move(ep));
  last_return_ = res.episode_return;
  if (on_episode) on_episode(res);
  return res;
}

UpdateStats Trainer::train_step(const SegmentBatch& batch) {
  UpdateStats u;
  const std::vector<int> perm = permute_batch(batch.batch_size(), rng_);
  ModelLossResult ml;
  try {
    ml = total_model_loss(*models_, batch, perm, cfg_.loss, cfg_.workers);
  } catch (const NumericError&) {
    u.skipped = true;
  }
  if (!u.skipped &&
      (!std::isfinite(ml.breakdown.total) || !grads_finite(ml.grads))) {
    u.skipped = true;
  }
  if (u.skipped) {
    ++skipped_;
    u.breakdown.total = std::nan("");
    return u;
  }
  u.breakdown = ml.breakdown;
  u.breakdown.grad_norm = clip_global_norm(ml.grads, cfg_.grad_clip);
  adam_step(models_->theta(), ml.grads, cfg_.adam);

  PolicyLossResult pl;
  bool policy_ok = true;
  try {
    pl = policy_loss(*models_, batch, cfg_.loss.lambda);
  } catch (const NumericError&) {
    policy_ok = false;
  }
  if (policy_ok && std::isfinite(pl.loss) && grads_finite(pl.grads)) {
    u.policy_loss = pl.loss;
    u.policy_grad_norm = clip_global_norm(pl.grads, cfg_.grad_clip);
    adam_step(models_->psi(), pl.grads, cfg_.adam);
  } else {
    u.policy_loss = std::nan("");
  }
  ++updates_;
  models_->update_targets(cfg_.zeta, cfg_.target_every, updates_);
  return u;
}

void Trainer::write_row(const UpdateStats& u) {
  if (!csv_.is_open()) return;
  const StepLoss& w = u.breakdown.weighted;
  csv_ << updates_ + skipped_ << ',' << num(u.breakdown.total) << ','
       << num(w.reward) << ',' << num(w.value) << ',' << num(w.consistency)
       << ',' << num(w.bisim) << ',' << num(u.breakdown.grad_norm) << ','
       << num(u.breakdown.q_mean) << ',' << env_step_ << ','
       << (last_return_ ? num(*last_return_) : "") << ','
       << (last_eval_ ? num(last_eval_->mean) : "") << ','
       << (last_eval_ ? num(last_eval_->std) : "") << ',' << skipped_ << '\n';
}

EvalResult Trainer::evaluate(int episodes, std::uint64_t seed) const {
  return evaluate_policy(*models_, cfg_, env_step_, episodes, seed);
}

EvalResult evaluate_policy(const ModelSet& models, const TrainConfig& cfg,
                           std::int64_t env_step, int episodes,
                           std::uint64_t seed) {
  if (episodes < 1) throw ContractError("evaluate: episodes must be >= 1");
  std::vector<double> returns(static_cast<std::size_t>(episodes), 0.0);
  PlanConfig pc = cfg.planner;
  pc.workers = 1;
  const ModelSetLatent latent(models);
  std::exception_ptr error;
#pragma omp parallel for num_threads(cfg.workers) schedule(dynamic)
  for (int i = 0; i < episodes; ++i) {
    try {
      const std::uint64_t s = seed + static_cast<std::uint64_t>(i);
      auto env = make_env(cfg.env, s);
      Rng rng(s ^ 0x5851f42d4c957f2dULL);
      PlanState state;
      PlanContext ctx;
      ctx.env_step = env_step;
      ctx.gamma = cfg.loss.gamma;
      Vector obs = env->reset();
      double ret = 0.0;
      while (!env->done()) {
        const Matrix z = models.encode(obs.transpose());
        const PlanResult pr = plan(latent, z, pc, state, ctx, rng);
        const StepResult sr = env->step(scale_action(env->spec(), pr.action));
        ret += sr.reward;
        obs = sr.obs;
      }
      returns[static_cast<std::size_t>(i)] = ret;
    } catch (...) {
#pragma omp critical(eval_error)
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return summarize(std::move(returns));
}

EvalResult Trainer::run() {
  const std::uint64_t eval_seed = cfg_.seed * 1000003ULL + 17;
  std::int64_t next_eval = cfg_.eval_every > 0 ? cfg_.eval_every : -1;
  std::int64_t next_ckpt =
      cfg_.checkpoint_every > 0 ? cfg_.checkpoint_every : -1;
  bool stopped = false;
  while (env_step_ < cfg_.total_steps && !stopped) {
    collect_episode();
    if (env_step_ >= cfg_.seed_steps &&
        buffer_.valid_starts(cfg_.horizon) > 0) {
      // One update per env step collected since the previous phase.
      const std::int64_t k = env_step_ - last_update_step_;
      for (std::int64_t i = 0; i < k; ++i) {
        const SegmentBatch batch =
            buffer_.sample(cfg_.batch_size, cfg_.horizon, rng_);
        const UpdateStats u = train_step(batch);
        write_row(u);
        if (on_update) on_update(u);
      }
      last_update_step_ = env_step_;
    }
    if (next_eval > 0 && env_step_ >= next_eval) {
      last_eval_ = evaluate(cfg_.eval_episodes, eval_seed);
      while (next_eval <= env_step_) next_eval += cfg_.eval_every;
      if (on_eval && on_eval(*last_eval_)) stopped = true;
    }
    if (next_ckpt > 0 && env_step_ >= next_ckpt && !out_dir_.empty()) {
      save_checkpoint(out_dir_ / ("checkpoint_" + std::to_string(env_step_) +
                                  ".bin"));
      while (next_ckpt <= env_step_) next_ckpt += cfg_.checkpoint_every;
    }
  }
  // A run stopped by on_eval ends on the evaluation that stopped it.
  const EvalResult final_eval =
      stopped ? *last_eval_ : evaluate(cfg_.eval_episodes, eval_seed);
  last_eval_ = final_eval;
  if (!out_dir_.empty()) {
    save_checkpoint(out_dir_ / "final.bin");
    nlohmann::json summary = {{"env_step", env_step_},
                              {"updates", updates_},
                              {"skipped_steps", skipped_},
                              {"stopped_early", stopped},
                              {"eval_return_mean", final_eval.mean},
                              {"eval_return_std", final_eval.std},
                              {"eval_returns", final_eval.returns}};
    std::ofstream(out_dir_ / "summary.json") << summary.dump(2) << '\n';
    csv_.flush();
  }
  return final_eval;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.meta = {{"config", cfg_.to_json()},
             {"env_step", env_step_},
             {"updates", updates_},
             {"revision", BSMPC_REVISION},
             {"rng", rng_state(rng_)}};
  write_param_store(ck, "theta", models_->theta());
  write_param_store(ck, "psi", models_->psi());
  const auto targets = models_->target();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ck.arrays.emplace_back("target." + std::to_string(i),
                           DenseArray::from_matrix(targets[i]));
  }
  ck.save(path);
}

LoadedRun load_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  if (!ck.meta.contains("config")) {
    throw ContractError(path.string() + ": checkpoint has no config");
  }
  LoadedRun run;
  run.config = TrainConfig::from_json(ck.meta.at("config"));
  run.env_step = ck.meta.value("env_step", std::int64_t{0});
  Rng rng(run.config.seed);
  run.models = std::make_unique<ModelSet>(run.config.model_config(), rng);
  read_param_store(ck, "theta", run.models->theta());
  read_param_store(ck, "psi", run.models->psi());
  auto targets = run.models->target_mutable();
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Matrix m = ck.at("target." + std::to_string(i)).to_matrix();
    if (m.rows() != targets[i].rows() || m.cols() != targets[i].cols()) {
      throw ContractError(path.string() + ": target array " +
                          std::to_string(i) + " has the wrong shape");
    }
    targets[i] = m;
  }
  return run;
}

}  // namespace bsmpc
