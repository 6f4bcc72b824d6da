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

#include "bsmpc/losses.h"

#include <cmath>
#include <numeric>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bsmpc {

void LossCoefficients::validate() const {
  if (c1 < 0 || c2 < 0 || c3 < 0 || c4 < 0) {
    throw ContractError("loss coefficients must be nonnegative");
  }
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw ContractError("lambda must lie in (0, 1]");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ContractError("gamma must lie in (0, 1)");
  }
}

nlohmann::json LossCoefficients::to_json() const {
  return {{"c1", c1},
          {"c2", c2},
          {"c3", c3},
          {"c4", c4},
          {"lambda", lambda},
          {"gamma", gamma},
          {"bisim_dyn_distance",
           dyn_distance == BisimDynDistance::kSquaredL2 ? "sq_l2" : "l2"}};
}

LossCoefficients LossCoefficients::from_json(const nlohmann::json& j) {
  LossCoefficients c;
  c.c1 = j.value("c1", c.c1);
  c.c2 = j.value("c2", c.c2);
  c.c3 = j.value("c3", c.c3);
  c.c4 = j.value("c4", c.c4);
  c.lambda = j.value("lambda", c.lambda);
  c.gamma = j.value("gamma", c.gamma);
  const std::string d = j.value("bisim_dyn_distance", std::string("sq_l2"));
  if (d == "sq_l2") {
    c.dyn_distance = BisimDynDistance::kSquaredL2;
  } else if (d == "l2") {
    c.dyn_distance = BisimDynDistance::kL2;
  } else {
    throw ContractError("bisim_dyn_distance must be 'sq_l2' or 'l2', got '" +
                        d + "'");
  }
  c.validate();
  return c;
}

void SegmentBatch::validate() const {
  if (actions.empty()) throw ContractError("SegmentBatch: no steps");
  const std::size_t steps = actions.size();
  if (rewards.size() != steps || obs.size() != steps + 1) {
    throw ContractError(
        "SegmentBatch: need H+2 observation blocks and H+1 action/reward "
        "blocks");
  }
  const Eigen::Index b = actions.front().rows();
  for (std::size_t k = 0; k < steps; ++k) {
    if (actions[k].rows() != b || rewards[k].rows() != b ||
        rewards[k].cols() != 1 || obs[k].rows() != b) {
      throw ContractError("SegmentBatch: inconsistent block shapes at step " +
                          std::to_string(k));
    }
  }
  if (obs.back().rows() != b) {
    throw ContractError("SegmentBatch: inconsistent final observation block");
  }
}

SegmentBatch random_segment_batch(int state_dim, int action_dim, int batch,
                                  int horizon, Rng& rng) {
  if (batch < 1 || horizon < 0) {
    throw ContractError("random_segment_batch: bad shape");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  SegmentBatch b;
  for (int k = 0; k <= horizon + 1; ++k) {
    Matrix o(batch, state_dim);
    for (Eigen::Index i = 0; i < o.size(); ++i) o.data()[i] = normal(rng);
    b.obs.push_back(std::move(o));
  }
  for (int k = 0; k <= horizon; ++k) {
    Matrix a(batch, action_dim);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = unit(rng);
    b.actions.push_back(std::move(a));
    Matrix r(batch, 1);
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      r.data()[i] = 0.5 * (unit(rng) - 1.0);
    }
    b.rewards.push_back(std::move(r));
  }
  return b;
}

std::vector<int> permute_batch(int batch, Rng& rng) {
  if (batch < 2) {
    throw ContractError("permute_batch: batch size must be at least 2");
  }
  std::vector<int> perm(static_cast<std::size_t>(batch));
  std::iota(perm.begin(), perm.end(), 0);
  // Fisher-Yates with an explicit uniform draw (std::shuffle's algorithm is
  // implementation-defined).
  for (int i = batch - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(pick(rng))]);
  }
  return perm;
}

namespace {

Matrix stack_rows(std::span<const Matrix> blocks) {
  Eigen::Index rows = 0;
  for (const Matrix& b : blocks) rows += b.rows();
  Matrix out(rows, blocks.front().cols());
  Eigen::Index r = 0;
  for (const Matrix& b : blocks) {
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

// Quantities every step consumes as constants (no gradient).
struct Frozen {
  std::vector<Matrix> z;          // online encodings, H+2 blocks
  std::vector<Matrix> zt_next;    // target encoder of s_{k+1}, H+1 blocks
  std::vector<Matrix> zbar_next;  // target dynamics on z_k, H+1 blocks
  std::vector<Matrix> td_target;  // r_k + gamma minQbar(z_{k+1}, pi(z_{k+1}))
};

std::vector<Matrix> split_rows(const Matrix& m, int blocks, Eigen::Index b) {
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(blocks));
  for (int k = 0; k < blocks; ++k) out.push_back(m.middleRows(k * b, b));
  return out;
}

Frozen freeze(const ModelSet& models, const SegmentBatch& batch,
              const Matrix* z_all, double gamma) {
  const int steps = batch.horizon() + 1;
  const Eigen::Index b = batch.batch_size();
  Frozen f;
  const Matrix z_stack =
      z_all != nullptr ? *z_all : models.encode(stack_rows(batch.obs));
  f.z = split_rows(z_stack, steps + 1, b);

  const Matrix next_obs =
      stack_rows(std::span<const Matrix>(batch.obs).subspan(1));
  f.zt_next = split_rows(models.encode_target(next_obs), steps, b);

  const Matrix z_cur = z_stack.topRows(steps * b);
  const Matrix a_cur = stack_rows(batch.actions);
  f.zbar_next =
      split_rows(models.predict_next_target(z_cur, a_cur), steps, b);

  const Matrix z_next = z_stack.bottomRows(steps * b);
  const Matrix q_next = models.q_value_target(
      z_next, models.policy_mean(z_next), QMode::kMin);
  const Matrix r = stack_rows(batch.rewards);
  f.td_target = split_rows(r + gamma * q_next, steps, b);
  return f;
}

struct StepVars {
  Var reward, value, consistency, bisim;
  Var weighted;  // lambda^k (c1 A + c2 B + c3 C + c4 D)
  double q_sum = 0.0;
};

StepVars build_step(Tape& tape, const ModelSet& models, const TapeParams& th,
                    Var z, const SegmentBatch& batch, const Frozen& fz, int k,
                    std::span<const int> perm, const LossCoefficients& c) {
  const std::size_t ks = static_cast<std::size_t>(k);
  const Matrix& a = batch.actions[ks];
  const Matrix& r = batch.rewards[ks];
  const Eigen::Index b = a.rows();

  Var za = concat_cols(z, tape.ref(a, false));

  StepVars s;
  Var r_hat = models.reward_net().forward(th.slice(models.reward_net()), za);
  s.reward = mean(square(sub(r_hat, tape.ref(r, false))));

  Var y = tape.ref(fz.td_target[ks], false);
  Var q1 = models.q1_net().forward(th.slice(models.q1_net()), za);
  Var q2 = models.q2_net().forward(th.slice(models.q2_net()), za);
  s.value = add(mean(square(sub(q1, y))), mean(square(sub(q2, y))));
  s.q_sum = 0.5 * (q1.value().sum() + q2.value().sum());

  Var z_hat = models.dynamics_net().forward(th.slice(models.dynamics_net()), za);
  s.consistency =
      mean(row_square_sum(sub(z_hat, tape.ref(fz.zt_next[ks], false))));

  // Bisimulation target per row: |r_i - r_j| + gamma * dist(zbar_i, zbar_j).
  const Matrix& zbar = fz.zbar_next[ks];
  Matrix target(b, 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    const int j = perm[static_cast<std::size_t>(i)];
    const double dyn2 = (zbar.row(i) - zbar.row(j)).squaredNorm();
    const double dyn = c.dyn_distance == BisimDynDistance::kSquaredL2
                           ? dyn2
                           : std::sqrt(dyn2);
    target(i, 0) = std::abs(r(i, 0) - r(j, 0)) + c.gamma * dyn;
  }
  Var l1 = row_abs_sum(sub(z, gather_rows(z, perm)));
  s.bisim = mean(square(add_const(l1, -target)));

  const std::pair<const char*, Var> terms[] = {{"reward", s.reward},
                                               {"value", s.value},
                                               {"consistency", s.consistency},
                                               {"bisim", s.bisim}};
  for (const auto& [name, v] : terms) {
    if (!std::isfinite(v.value()(0, 0))) {
      throw NumericError(std::string("non-finite ") + name +
                         " loss at step " + std::to_string(k));
    }
  }

  const double w = std::pow(c.lambda, k);
  Var inner = add(add(scale(s.reward, c.c1), scale(s.value, c.c2)),
                  add(scale(s.consistency, c.c3), scale(s.bisim, c.c4)));
  s.weighted = scale(inner, w);
  return s;
}

StepLoss step_values(const StepVars& s) {
  return StepLoss{s.reward.value()(0, 0), s.value.value()(0, 0),
                  s.consistency.value()(0, 0), s.bisim.value()(0, 0)};
}

void check_inputs(const SegmentBatch& batch, std::span<const int> perm,
                  const LossCoefficients& coeffs) {
  batch.validate();
  coeffs.validate();
  if (static_cast<int>(perm.size()) != batch.batch_size()) {
    throw ContractError("permutation length does not match batch size");
  }
}

void finish_breakdown(LossBreakdown& out, const LossCoefficients& c,
                      double q_sum, double q_count) {
  out.weighted = StepLoss{};
  for (std::size_t k = 0; k < out.per_step.size(); ++k) {
    const double w = std::pow(c.lambda, static_cast<double>(k));
    const StepLoss& s = out.per_step[k];
    out.weighted.reward += w * s.reward;
    out.weighted.value += w * s.value;
    out.weighted.consistency += w * s.consistency;
    out.weighted.bisim += w * s.bisim;
  }
  out.q_mean = q_sum / q_count;
}

}  // namespace

StepLoss per_step_loss(const ModelSet& models, const SegmentBatch& batch,
                       int k, std::span<const int> perm,
                       const LossCoefficients& coeffs) {
  check_inputs(batch, perm, coeffs);
  if (k < 0 || k > batch.horizon()) {
    throw ContractError("per_step_loss: step " + std::to_string(k) +
                        " outside [0, " + std::to_string(batch.horizon()) +
                        "]");
  }
  const Frozen fz = freeze(models, batch, nullptr, coeffs.gamma);
  Tape tape;
  TapeParams th = bind_params(tape, models.theta().values(), false);
  Var z = tape.ref(fz.z[static_cast<std::size_t>(k)], false);
  return step_values(
      build_step(tape, models, th, z, batch, fz, k, perm, coeffs));
}

ModelLossResult total_model_loss(const ModelSet& models,
                                 const SegmentBatch& batch,
                                 std::span<const int> perm,
                                 const LossCoefficients& coeffs, int workers) {
  check_inputs(batch, perm, coeffs);
  if (workers < 1) throw ContractError("workers must be >= 1");
  const int steps = batch.horizon() + 1;
  const Eigen::Index b = batch.batch_size();
  const ParamStore& theta = models.theta();

  // Online encodings of every observation, recorded for the encoder backward.
  Tape enc_tape;
  TapeParams enc_params = bind_params(enc_tape, theta.values(), true);
  Var obs = enc_tape.leaf(stack_rows(batch.obs));
  Var z_all = models.encoder_net().forward(
      enc_params.slice(models.encoder_net()), obs);
  const Frozen fz = freeze(models, batch, &z_all.value(), coeffs.gamma);

  struct StepOut {
    StepLoss loss;
    double weighted = 0.0;
    double q_sum = 0.0;
    std::vector<Matrix> grads;  // one per theta entry; empty if untouched
    Matrix dz;
    std::string error;
  };
  std::vector<StepOut> outs(static_cast<std::size_t>(steps));

#pragma omp parallel for num_threads(workers) schedule(static)
  for (int k = 0; k < steps; ++k) {
    StepOut& out = outs[static_cast<std::size_t>(k)];
    try {
      Tape tape;
      TapeParams th = bind_params(tape, theta.values(), true);
      Var z = tape.leaf(fz.z[static_cast<std::size_t>(k)], true);
      StepVars s = build_step(tape, models, th, z, batch, fz, k, perm, coeffs);
      tape.backward(s.weighted);
      out.loss = step_values(s);
      out.weighted = s.weighted.value()(0, 0);
      out.q_sum = s.q_sum;
      out.grads.resize(theta.size());
      for (std::size_t i = 0; i < theta.size(); ++i) {
        out.grads[i] = th.vars[i].grad();
      }
      out.dz = z.grad();
    } catch (const std::exception& e) {
      out.error = e.what();
    }
  }

  for (const StepOut& out : outs) {
    if (!out.error.empty()) throw NumericError(out.error);
  }

  ModelLossResult result;
  result.grads = theta.zeros_like();
  Matrix dz_all = Matrix::Zero(z_all.rows(), z_all.cols());
  double q_sum = 0.0;
  for (int k = 0; k < steps; ++k) {
    const StepOut& out = outs[static_cast<std::size_t>(k)];
    result.breakdown.per_step.push_back(out.loss);
    result.breakdown.total += out.weighted;
    q_sum += out.q_sum;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      result.grads[i] += out.grads[i];
    }
    dz_all.middleRows(k * b, b) = out.dz;
  }
  enc_tape.backward(z_all, dz_all);
  const Mlp& enc = models.encoder_net();
  for (int i = enc.first(); i < enc.first() + enc.count(); ++i) {
    result.grads[static_cast<std::size_t>(i)] +=
        enc_params.vars[static_cast<std::size_t>(i)].grad();
  }
  finish_breakdown(result.breakdown, coeffs, q_sum,
                   2.0 * static_cast<double>(steps * b));
  result.breakdown.grad_norm = global_norm(result.grads);
  return result;
}

ModelLossResult total_model_loss_serial(const ModelSet& models,
                                        const SegmentBatch& batch,
                                        std::span<const int> perm,
                                        const LossCoefficients& coeffs) {
  check_inputs(batch, perm, coeffs);
  const int steps = batch.horizon() + 1;
  const Eigen::Index b = batch.batch_size();
  const ParamStore& theta = models.theta();

  Tape tape;
  TapeParams th = bind_params(tape, theta.values(), true);
  Var obs = tape.leaf(stack_rows(batch.obs));
  Var z_all =
      models.encoder_net().forward(th.slice(models.encoder_net()), obs);
  const Frozen fz = freeze(models, batch, &z_all.value(), coeffs.gamma);

  ModelLossResult result;
  double q_sum = 0.0;
  Var total;
  for (int k = 0; k < steps; ++k) {
    Var z = row_block(z_all, k * b, b);
    StepVars s = build_step(tape, models, th, z, batch, fz, k, perm, coeffs);
    result.breakdown.per_step.push_back(step_values(s));
    q_sum += s.q_sum;
    total = k == 0 ? s.weighted : add(total, s.weighted);
  }
  tape.backward(total);
  result.breakdown.total = total.value()(0, 0);
  result.grads.reserve(theta.size());
  for (const Var& v : th.vars) result.grads.push_back(v.grad());
  finish_breakdown(result.breakdown, coeffs, q_sum,
                   2.0 * static_cast<double>(steps * b));
  result.breakdown.grad_norm = global_norm(result.grads);
  return result;
}

ModelLossResult sequential_rollout_loss(const ModelSet& models,
                                        const SegmentBatch& batch,
                                        const LossCoefficients& coeffs) {
  batch.validate();
  coeffs.validate();
  const int steps = batch.horizon() + 1;
  const Eigen::Index b = batch.batch_size();
  const ParamStore& theta = models.theta();

  // Targets need online encodings of s_1..s_{H+1} only.
  const Frozen fz = freeze(models, batch, nullptr, coeffs.gamma);

  Tape tape;
  TapeParams th = bind_params(tape, theta.values(), true);
  Var z = models.encoder_net().forward(th.slice(models.encoder_net()),
                                       tape.leaf(batch.obs.front()));
  ModelLossResult result;
  double q_sum = 0.0;
  Var total;
  for (int k = 0; k < steps; ++k) {
    const std::size_t ks = static_cast<std::size_t>(k);
    Var za = concat_cols(z, tape.ref(batch.actions[ks], false));
    Var r_hat = models.reward_net().forward(th.slice(models.reward_net()), za);
    Var a_loss = mean(square(sub(r_hat, tape.ref(batch.rewards[ks], false))));
    Var y = tape.ref(fz.td_target[ks], false);
    Var q1 = models.q1_net().forward(th.slice(models.q1_net()), za);
    Var q2 = models.q2_net().forward(th.slice(models.q2_net()), za);
    Var b_loss = add(mean(square(sub(q1, y))), mean(square(sub(q2, y))));
    q_sum += 0.5 * (q1.value().sum() + q2.value().sum());
    // The next step consumes this prediction: a true sequential dependency.
    z = models.dynamics_net().forward(th.slice(models.dynamics_net()), za);
    Var c_loss =
        mean(row_square_sum(sub(z, tape.ref(fz.zt_next[ks], false))));
    result.breakdown.per_step.push_back(
        StepLoss{a_loss.value()(0, 0), b_loss.value()(0, 0),
                 c_loss.value()(0, 0), 0.0});
    Var inner = add(add(scale(a_loss, coeffs.c1), scale(b_loss, coeffs.c2)),
                    scale(c_loss, coeffs.c3));
    Var w = scale(inner, std::pow(coeffs.lambda, k));
    total = k == 0 ? w : add(total, w);
  }
  tape.backward(total);
  result.breakdown.total = total.value()(0, 0);
  for (const Var& v : th.vars) result.grads.push_back(v.grad());
  finish_breakdown(result.breakdown, coeffs, q_sum,
                   2.0 * static_cast<double>(steps * b));
  result.breakdown.grad_norm = global_norm(result.grads);
  return result;
}

PolicyLossResult policy_loss(const ModelSet& models, const SegmentBatch& batch,
                             double lambda) {
  batch.validate();
  if (!(lambda > 0.0 && lambda <= 1.0)) {
    throw ContractError("lambda must lie in (0, 1]");
  }
  const int steps = batch.horizon() + 1;
  const Eigen::Index b = batch.batch_size();
  const auto cur_obs =
      std::span<const Matrix>(batch.obs).subspan(0, static_cast<std::size_t>(steps));
  const Matrix obs = stack_rows(cur_obs);
  const Matrix z = models.encode(obs);
  const Matrix z_bar = models.encode_target(obs);

  Tape tape;
  TapeParams psi = bind_params(tape, models.psi().values(), true);
  TapeParams th = bind_params(tape, models.theta().values(), false);
  Var a = tanh(models.policy_net().forward(psi.slice(models.policy_net()),
                                           tape.ref(z_bar, false)));
  Var za = concat_cols(tape.ref(z, false), a);
  Var q = min(models.q1_net().forward(th.slice(models.q1_net()), za),
              models.q2_net().forward(th.slice(models.q2_net()), za));
  Matrix w(steps * b, 1);
  for (int k = 0; k < steps; ++k) {
    w.middleRows(k * b, b).setConstant(-std::pow(lambda, k) /
                                       static_cast<double>(b));
  }
  Var loss = sum(mul_const(q, w));
  require_finite(loss.value(), "policy loss");
  tape.backward(loss);
  PolicyLossResult out;
  out.loss = loss.value()(0, 0);
  for (const Var& v : psi.vars) out.grads.push_back(v.grad());
  return out;
}

}  // namespace bsmpc
