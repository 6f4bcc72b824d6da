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

#ifndef BSMPC_BISIM_H_
#define BSMPC_BISIM_H_

#include <vector>

#include "bsmpc/tabular_mdp.h"
#include "bsmpc/tensor.h"

namespace bsmpc {

// d <- reward * |r_i - r_j| + transition * W1(d)(P_i, P_j).
struct BisimWeights {
  double reward = 1.0;
  double transition = 0.9;

  // (1, gamma): the on-policy metric with discount weights.
  static BisimWeights discounted(double gamma) { return {1.0, gamma}; }
  // (1 - c, c): the convex weighting used with the optimal policy.
  static BisimWeights convex(double c) { return {1.0 - c, c}; }
  void validate() const;
};

struct MetricResult {
  Matrix d;
  int iterations = 0;
  // Sup-norm change of every sweep, first to last.
  std::vector<double> changes;
};

// Least fixed point for a fixed stochastic policy (n x A rows summing to 1),
// iterated from zero until the sup change drops below tol. Pairs within a
// sweep are solved on `workers` OpenMP threads.
MetricResult pi_bisim_metric(const TabularMdp& mdp, const Matrix& policy,
                             const BisimWeights& w, double tol = 1e-9,
                             int workers = 1);
// Single-threaded reference used to test the parallel sweep.
MetricResult pi_bisim_metric_serial(const TabularMdp& mdp,
                                    const Matrix& policy,
                                    const BisimWeights& w, double tol = 1e-9);

// Max over actions of (1-c)|R(i,a) - R(j,a)| + c W1(d)(P_a(i), P_a(j)).
MetricResult ferns_bisim_metric(const TabularMdp& mdp, double c,
                                double tol = 1e-9, int workers = 1);

struct ValueResult {
  Vector v;
  Matrix q;  // n x A
  int iterations = 0;
  std::vector<double> changes;
};

ValueResult value_iteration(const TabularMdp& mdp, double tol = 1e-12);

// Deterministic greedy policy as an n x A one-hot table; ties go to the lowest
// action index.
Matrix greedy_policy(const ValueResult& values);

struct Aggregation {
  double epsilon = 0.0;
  // Radius the chosen greedy cover was built with (<= epsilon).
  double cover_radius = 0.0;
  std::vector<int> phi;      // state -> cluster
  std::vector<int> medoids;  // cluster -> medoid state
  // Uniform member averages of rewards and cluster-retargeted transitions.
  TabularMdp abstract;
  // max_ij |d(medoid(phi(i)), medoid(phi(j))) - d(i, j)|
  double encoder_error = 0.0;

  int clusters() const { return static_cast<int>(medoids.size()); }
};

// Greedy medoid cover in state-index order: the first uncovered state becomes
// a medoid and absorbs every uncovered state within the cover radius. The
// radius is chosen in [0, eps] to minimize the number of clusters.
Aggregation epsilon_cluster(const TabularMdp& mdp, const Matrix& d,
                            double eps);

// Everything the bound checks need for one (mdp, c, eps) instance.
struct BisimAnalysis {
  double c = 0.0;
  double epsilon = 0.0;
  ValueResult values;      // on the original MDP
  Matrix policy;           // greedy optimal policy
  MetricResult metric;     // on-policy metric with convex(c) weights
  Aggregation aggregation;
  ValueResult abstract_values;
  // Clusters whose members disagree on the greedy optimal action. Only the
  // on-policy reward is tied to the metric, so per-action averages over such
  // clusters can sit far from every member's reward.
  int mixed_action_clusters = 0;
};

BisimAnalysis analyze_bisim(const TabularMdp& mdp, double c, double eps,
                            double metric_tol = 1e-11, int workers = 1);

struct ValueBoundReport {
  Vector lhs;  // |V*(s) - Vbar*(phi(s))| per state
  double max_lhs = 0.0;
  double rhs = 0.0;  // (2 eps + 2 L) / ((1 - gamma)(1 - c))
  bool pass = false;
};

struct ReturnBoundReport {
  int horizon = 0;
  Vector lhs;  // |S(tau) - S(phi(tau))| per start state
  double max_lhs = 0.0;
  // 2 gamma^H (eps + L)/((1-gamma)(1-c)) + 2 eps (1 - gamma^k)/((1-gamma)(1-c))
  // with k = H (bound_h) and k = H - 1 (bound_h1).
  double bound_h = 0.0;
  double bound_h1 = 0.0;
  bool pass_h = false;
  bool pass_h1 = false;
  // Pass against the looser of the two bounds.
  bool pass = false;
};

struct RewardBoundReport {
  double lhs = 0.0;  // max (1-c)|R(s,a) - Rbar(phi(s),a)| over supported a
  double rhs = 0.0;  // 2 eps
  bool pass = false;
};

ValueBoundReport verify_value_bound(const TabularMdp& mdp,
                                    const BisimAnalysis& an, double tol);
ReturnBoundReport verify_return_bound(const TabularMdp& mdp,
                                      const BisimAnalysis& an, int horizon,
                                      double tol);
RewardBoundReport verify_reward_bound(const TabularMdp& mdp,
                                      const BisimAnalysis& an, double tol);

}  // namespace bsmpc

#endif  // BSMPC_BISIM_H_
