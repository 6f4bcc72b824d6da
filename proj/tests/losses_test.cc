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

#include <cmath>
#include <set>

#include "bsmpc/losses.h"
#include "doctest.h"
#include "loss_oracle.h"
#include "test_util.h"

using namespace bsmpc;
using namespace bsmpc::testing;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.state_dim = 3;
  c.action_dim = 1;
  c.latent_dim = 4;
  c.hidden_dim = 8;
  return c;
}

std::vector<int> identity(int n) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  return p;
}

// Term D for one row with identity encoder and dynamics, written out by hand.
double hand_bisim(double s_i, double s_j, double r_i, double r_j,
                  double gamma) {
  const double e = std::abs(s_i - s_j) - std::abs(r_i - r_j) -
                   gamma * (s_i - s_j) * (s_i - s_j);
  return e * e;
}

}  // namespace

TEST_CASE("two-sample hand example") {
  CHECK(hand_bisim(1.0, 3.0, 0.5, 0.2, 0.9) == doctest::Approx(3.61));
  CHECK(hand_bisim(3.0, 1.0, 0.2, 0.5, 0.9) == doctest::Approx(3.61));

  // The same arithmetic through the tape kernels that implement term D.
  Tape t;
  Var z = t.leaf((Matrix(2, 1) << 1.0, 3.0).finished(), true);
  const std::vector<int> swap = {1, 0};
  Matrix target(2, 1);
  target << 0.3 + 0.9 * 4.0, 0.3 + 0.9 * 4.0;
  Var d = mean(square(add_const(row_abs_sum(sub(z, gather_rows(z, swap))),
                                -target)));
  CHECK(d.value()(0, 0) == doctest::Approx(3.61).epsilon(1e-12));
}

TEST_CASE("per-step terms match the inference oracle") {
  Rng rng(11);
  ModelSet m(tiny(), rng);
  const SegmentBatch b = random_segment(tiny(), 2, 5, rng);
  LossCoefficients c;
  for (auto dist : {BisimDynDistance::kSquaredL2, BisimDynDistance::kL2}) {
    c.dyn_distance = dist;
    const std::vector<int> perm = permute_batch(5, rng);
    const FrozenTargets f = capture_targets(m, b, c.gamma);
    for (int k = 0; k <= 2; ++k) {
      const StepLoss got = per_step_loss(m, b, k, perm, c);
      const StepLoss want = oracle_step(m, b, f, k, perm, c);
      CHECK(got.reward == doctest::Approx(want.reward).epsilon(1e-12));
      CHECK(got.value == doctest::Approx(want.value).epsilon(1e-12));
      CHECK(got.consistency ==
            doctest::Approx(want.consistency).epsilon(1e-12));
      CHECK(got.bisim == doctest::Approx(want.bisim).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(per_step_loss(m, b, 3, identity(5), c), ContractError);
  CHECK_THROWS_AS(per_step_loss(m, b, -1, identity(5), c), ContractError);
}

TEST_CASE("identity permutation zeroes the bisimulation term") {
  Rng rng(12);
  ModelSet m(tiny(), rng);
  const SegmentBatch b = random_segment(tiny(), 3, 6, rng);
  const ModelLossResult r = total_model_loss(m, b, identity(6), {});
  for (const StepLoss& s : r.breakdown.per_step) CHECK(s.bisim == 0.0);
}

TEST_CASE("perfect reward model zeroes the reward term") {
  Rng rng(13);
  ModelSet m(tiny(), rng);
  SegmentBatch b = random_segment(tiny(), 1, 4, rng);
  for (int k = 0; k <= 1; ++k) {
    b.rewards[k] = m.predict_reward(m.encode(b.obs[k]), b.actions[k]);
  }
  const ModelLossResult r = total_model_loss(m, b, identity(4), {});
  // Batched and per-block GEMMs may round differently in the last bit.
  for (const StepLoss& s : r.breakdown.per_step) CHECK(s.reward <= 1e-28);
}

TEST_CASE("horizon weighting") {
  Rng rng(14);
  ModelSet m(tiny(), rng);
  LossCoefficients c;

  SUBCASE("H = 0 total equals the single step") {
    const SegmentBatch b = random_segment(tiny(), 0, 4, rng);
    const auto perm = permute_batch(4, rng);
    const ModelLossResult r = total_model_loss(m, b, perm, c);
    const StepLoss s = per_step_loss(m, b, 0, perm, c);
    CHECK(r.breakdown.total ==
          doctest::Approx(c.c1 * s.reward + c.c2 * s.value +
                          c.c3 * s.consistency + c.c4 * s.bisim)
              .epsilon(1e-12));
  }
  SUBCASE("equal steps at lambda 0.5, H = 2 give 1.75 L") {
    // Repeat one step's data so every L_k is the same.
    const SegmentBatch one = random_segment(tiny(), 0, 4, rng);
    SegmentBatch b;
    b.obs = {one.obs[0], one.obs[0], one.obs[0], one.obs[0]};
    b.actions = {one.actions[0], one.actions[0], one.actions[0]};
    b.rewards = {one.rewards[0], one.rewards[0], one.rewards[0]};
    const auto perm = permute_batch(4, rng);
    const double l0 = total_model_loss(m, SegmentBatch{{b.obs[0], b.obs[0]},
                                                       {b.actions[0]},
                                                       {b.rewards[0]}},
                                       perm, c)
                          .breakdown.total;
    const ModelLossResult r = total_model_loss(m, b, perm, c);
    CHECK(r.breakdown.total == doctest::Approx(1.75 * l0).epsilon(1e-12));
  }
  SUBCASE("grand total is the weighted sum of components") {
    const SegmentBatch b = random_segment(tiny(), 3, 5, rng);
    const ModelLossResult r =
        total_model_loss(m, b, permute_batch(5, rng), c);
    const StepLoss& w = r.breakdown.weighted;
    CHECK(r.breakdown.total ==
          doctest::Approx(c.c1 * w.reward + c.c2 * w.value +
                          c.c3 * w.consistency + c.c4 * w.bisim)
              .epsilon(1e-12));
    for (const StepLoss& s : r.breakdown.per_step) {
      CHECK(s.reward >= 0.0);
      CHECK(s.value >= 0.0);
      CHECK(s.consistency >= 0.0);
      CHECK(s.bisim >= 0.0);
    }
  }
}

TEST_CASE("permute_batch") {
  Rng rng(15);
  for (int n : {2, 3, 7, 64}) {
    const auto p = permute_batch(n, rng);
    CHECK(std::set<int>(p.begin(), p.end()).size() ==
          static_cast<std::size_t>(n));
    CHECK(*std::min_element(p.begin(), p.end()) == 0);
    CHECK(*std::max_element(p.begin(), p.end()) == n - 1);
  }
  Rng a(99);
  Rng b(99);
  CHECK(permute_batch(32, a) == permute_batch(32, b));
  CHECK_THROWS_AS(permute_batch(1, rng), ContractError);

  // Batch of two: identity and swap each with probability 1/2.
  const int draws = 10000;
  int swaps = 0;
  for (int seed = 0; seed < draws; ++seed) {
    Rng r(static_cast<std::uint64_t>(seed));
    if (permute_batch(2, r)[0] == 1) ++swaps;
  }
  const double sigma = std::sqrt(draws * 0.25);
  CHECK(std::abs(swaps - draws / 2.0) <= 3.0 * sigma);
}

TEST_CASE("parallel and serial evaluation agree") {
  Rng rng(16);
  ModelSet m(tiny(), rng);
  const SegmentBatch b = random_segment(tiny(), 5, 16, rng);
  const auto perm = permute_batch(16, rng);
  LossCoefficients c;
  c.c4 = 0.3;
  const ModelLossResult ref = total_model_loss_serial(m, b, perm, c);
  const ModelLossResult w1 = total_model_loss(m, b, perm, c, 1);
  for (int w : {1, 2, 4}) {
    const ModelLossResult r = total_model_loss(m, b, perm, c, w);
    CHECK(rel_error(r.breakdown.total, ref.breakdown.total) <= 1e-12);
    for (std::size_t i = 0; i < r.grads.size(); ++i) {
      CHECK((r.grads[i] - ref.grads[i]).cwiseAbs().maxCoeff() <=
            1e-12 * (1.0 + ref.grads[i].cwiseAbs().maxCoeff()));
      // Fixed reduction order: worker count does not change a single bit.
      CHECK(r.grads[i] == w1.grads[i]);
    }
    CHECK(r.breakdown.total == w1.breakdown.total);
  }
  CHECK_THROWS_AS(total_model_loss(m, b, perm, c, 0), ContractError);
}

TEST_CASE("bisimulation-only objective feeds the encoder alone") {
  Rng rng(17);
  ModelSet m(tiny(), rng);
  const SegmentBatch b = random_segment(tiny(), 2, 6, rng);
  LossCoefficients c;
  c.c1 = c.c2 = c.c3 = 0.0;
  c.c4 = 0.5;
  std::vector<int> perm = {1, 0, 3, 2, 5, 4};
  const ModelLossResult r = total_model_loss(m, b, perm, c);
  for (const Mlp* net : {&m.reward_net(), &m.dynamics_net(), &m.q1_net(),
                         &m.q2_net()}) {
    for (int i = net->first(); i < net->first() + net->count(); ++i) {
      CHECK(r.grads[static_cast<std::size_t>(i)].isZero(0.0));
    }
  }
  double enc_norm = 0.0;
  const Mlp& enc = m.encoder_net();
  for (int i = enc.first(); i < enc.first() + enc.count(); ++i) {
    enc_norm += r.grads[static_cast<std::size_t>(i)].squaredNorm();
  }
  CHECK(enc_norm > 0.0);
}

TEST_CASE("target parameters affect values but receive no gradient") {
  Rng rng(18);
  ModelSet m(tiny(), rng);
  const SegmentBatch b = random_segment(tiny(), 2, 4, rng);
  const auto perm = permute_batch(4, rng);
  const ModelLossResult before = total_model_loss(m, b, perm, {});
  for (Matrix& t : m.target_mutable()) t.array() += 0.25;
  const ModelLossResult after = total_model_loss(m, b, perm, {});
  CHECK(after.breakdown.total != before.breakdown.total);
  // Gradients are reported for online parameters only.
  CHECK(after.grads.size() == m.theta().size());
  // FD of the oracle w.r.t. a target entry, holding stop-gradient values,
  // is zero: the captured constants already absorb the target networks.
  const FrozenTargets f = capture_targets(m, b, 0.99);
  const double base = oracle_total(m, b, f, perm, {});
  m.target_mutable()[0].array() += 1e-3;
  CHECK(oracle_total(m, b, f, perm, {}) == base);
}

TEST_CASE("policy loss examples") {
  Rng rng(19);
  ModelSet m(tiny(), rng);
  const SegmentBatch b = random_segment(tiny(), 1, 4, rng);

  SUBCASE("constant Q gives zero policy gradient") {
    // Zero the last layer weights of both heads: Q == bias.
    for (const Mlp* q : {&m.q1_net(), &m.q2_net()}) {
      m.theta().value(static_cast<std::size_t>(q->first() + q->count() - 2))
          .setZero();
    }
    const PolicyLossResult r = policy_loss(m, b, 0.5);
    for (const Matrix& g : r.grads) CHECK(g.isZero(0.0));
  }
  SUBCASE("lambda weighting: loss = -(q0 + 0.5 q1)") {
    double q[2];
    for (int k = 0; k < 2; ++k) {
      q[k] = m.q_value(m.encode(b.obs[k]),
                       m.policy_mean(m.encode_target(b.obs[k])), QMode::kMin)
                 .mean();
    }
    CHECK(policy_loss(m, b, 0.5).loss ==
          doctest::Approx(-(q[0] + 0.5 * q[1])).epsilon(1e-12));
  }
  SUBCASE("quadratic Q: loss a0^2, gradient 2 a0 through the policy") {
    // Q(z, a) = -a^2 on the tape, policy output a0 = tanh(u).
    Tape t;
    Matrix u = Matrix::Constant(1, 1, 0.4);
    Var uv = t.ref(u, true);
    Var a = tanh(uv);
    Var loss = scale(mean(scale(square(a), -1.0)), -1.0);
    t.backward(loss);
    const double a0 = std::tanh(0.4);
    CHECK(loss.value()(0, 0) == doctest::Approx(a0 * a0));
    CHECK(uv.grad()(0, 0) ==
          doctest::Approx(2.0 * a0 * (1.0 - a0 * a0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(policy_loss(m, b, 0.0), ContractError);
}

TEST_CASE("full objective gradients match finite differences") {
  Rng rng(20);
  for (int trial = 0; trial < 3; ++trial) {
    ModelSet m(tiny(), rng);
    // Pull targets away from the online weights so both branches matter.
    for (Matrix& t : m.target_mutable()) {
      t += random_matrix(t.rows(), t.cols(), rng, 0.1);
    }
    const SegmentBatch b = random_segment(tiny(), 3, 4, rng);
    LossCoefficients c;
    c.c4 = 0.2;
    c.dyn_distance =
        trial == 2 ? BisimDynDistance::kL2 : BisimDynDistance::kSquaredL2;
    const GradCheck g = check_gradients(m, b, permute_batch(4, rng), c);
    CHECK(g.model <= 1e-4);
    CHECK(g.policy <= 1e-4);
  }
}

TEST_CASE("sequential rollout baseline") {
  Rng rng(21);
  ModelSet m(tiny(), rng);
  const SegmentBatch b = random_segment(tiny(), 2, 4, rng);
  LossCoefficients c;
  const ModelLossResult seq = sequential_rollout_loss(m, b, c);
  const ModelLossResult par = total_model_loss(m, b, identity(4), c);
  // Step 0 is identical: both start from the encoding of s_0.
  CHECK(seq.breakdown.per_step[0].reward ==
        doctest::Approx(par.breakdown.per_step[0].reward).epsilon(1e-12));
  CHECK(seq.breakdown.per_step[0].consistency ==
        doctest::Approx(par.breakdown.per_step[0].consistency)
            .epsilon(1e-12));
  CHECK(seq.breakdown.per_step.size() == 3);
  CHECK(std::isfinite(seq.breakdown.grad_norm));
}

TEST_CASE("malformed inputs are rejected") {
  Rng rng(22);
  ModelSet m(tiny(), rng);
  SegmentBatch b = random_segment(tiny(), 2, 4, rng);
  CHECK_THROWS_AS(total_model_loss(m, b, identity(3), {}), ContractError);
  LossCoefficients bad;
  bad.c2 = -1.0;
  CHECK_THROWS_AS(total_model_loss(m, b, identity(4), bad), ContractError);
  b.obs.pop_back();
  CHECK_THROWS_AS(total_model_loss(m, b, identity(4), {}), ContractError);
  SegmentBatch nan = random_segment(tiny(), 1, 4, rng);
  nan.rewards[1](2, 0) = std::nan("");
  CHECK_THROWS_AS(total_model_loss(m, nan, identity(4), {}), NumericError);
}
