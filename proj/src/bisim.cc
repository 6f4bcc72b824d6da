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

#include "bsmpc/bisim.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <utility>

#include "bsmpc/wasserstein.h"

namespace bsmpc {

namespace {

constexpr int kMaxSweeps = 1000000;

void check_policy(const TabularMdp& mdp, const Matrix& policy) {
  if (policy.rows() != mdp.n_states || policy.cols() != mdp.n_actions) {
    throw ContractError("policy table must be n_states x n_actions");
  }
  if (!all_finite(policy) || policy.minCoeff() < 0.0) {
    throw ContractError("policy entries must be nonnegative");
  }
  for (int s = 0; s < mdp.n_states; ++s) {
    if (std::abs(policy.row(s).sum() - 1.0) > 1e-12) {
      throw ContractError("policy row " + std::to_string(s) +
                          " does not sum to 1");
    }
  }
}

// Policy-marginalised rewards and transitions.
struct Marginal {
  Vector r;
  Matrix p;
};

Marginal marginalize(const TabularMdp& mdp, const Matrix& policy) {
  Marginal m{Vector::Zero(mdp.n_states),
             Matrix::Zero(mdp.n_states, mdp.n_states)};
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      const double w = policy(s, a);
      if (w == 0.0) continue;
      m.r(s) += w * mdp.r(s, a);
      m.p.row(s) += w * mdp.p[static_cast<std::size_t>(a)].row(s);
    }
  }
  // Re-normalise away rounding so W1's input check sees exact rows.
  for (int s = 0; s < mdp.n_states; ++s) m.p.row(s) /= m.p.row(s).sum();
  return m;
}

std::vector<std::pair<int, int>> upper_pairs(int n) {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) out.emplace_back(i, j);
  }
  return out;
}

// Runs the fixed-point iteration; `pair_value(d, i, j)` evaluates the update
// for one pair against the previous iterate.
template <typename PairValue>
MetricResult iterate_metric(int n, double tol, int workers,
                            PairValue pair_value) {
  if (!(tol > 0.0)) throw ContractError("tolerance must be positive");
  if (workers < 1) throw ContractError("workers must be >= 1");
  const auto pairs = upper_pairs(n);
  const int np = static_cast<int>(pairs.size());
  MetricResult res;
  res.d = Matrix::Zero(n, n);
  Matrix next = res.d;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    std::string error;
#pragma omp parallel for num_threads(workers) schedule(dynamic)
    for (int k = 0; k < np; ++k) {
      const auto [i, j] = pairs[static_cast<std::size_t>(k)];
      try {
        const double v = pair_value(res.d, i, j);
        next(i, j) = v;
        next(j, i) = v;
      } catch (const std::exception& e) {
#pragma omp critical(bisim_error)
        error = e.what();
      }
    }
    if (!error.empty()) throw NumericError(error);
    const double change = (next - res.d).cwiseAbs().maxCoeff();
    std::swap(res.d, next);
    res.changes.push_back(change);
    res.iterations = sweep + 1;
    if (change < tol) return res;
  }
  throw NumericError("bisimulation metric did not converge");
}

}  // namespace

void BisimWeights::validate() const {
  if (!(transition > 0.0 && transition < 1.0)) {
    throw ContractError("transition weight must lie in (0, 1) for a "
                        "contraction");
  }
  if (!(reward >= 0.0) || !std::isfinite(reward)) {
    throw ContractError("reward weight must be finite and nonnegative");
  }
}

MetricResult pi_bisim_metric(const TabularMdp& mdp, const Matrix& policy,
                             const BisimWeights& w, double tol, int workers) {
  mdp.validate();
  check_policy(mdp, policy);
  w.validate();
  const Marginal m = marginalize(mdp, policy);
  return iterate_metric(mdp.n_states, tol, workers,
                        [&](const Matrix& d, int i, int j) {
                          return w.reward * std::abs(m.r(i) - m.r(j)) +
                                 w.transition * w1_discrete(m.p.row(i).transpose(),
                                                            m.p.row(j).transpose(),
                                                            d);
                        });
}

MetricResult pi_bisim_metric_serial(const TabularMdp& mdp,
                                    const Matrix& policy,
                                    const BisimWeights& w, double tol) {
  mdp.validate();
  check_policy(mdp, policy);
  w.validate();
  if (!(tol > 0.0)) throw ContractError("tolerance must be positive");
  const Marginal m = marginalize(mdp, policy);
  const int n = mdp.n_states;
  MetricResult res;
  res.d = Matrix::Zero(n, n);
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    Matrix next = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        next(i, j) = w.reward * std::abs(m.r(i) - m.r(j)) +
                     w.transition * w1_discrete(m.p.row(i).transpose(),
                                                m.p.row(j).transpose(), res.d);
        next(j, i) = next(i, j);
      }
    }
    const double change = (next - res.d).cwiseAbs().maxCoeff();
    res.d = std::move(next);
    res.changes.push_back(change);
    res.iterations = sweep + 1;
    if (change < tol) return res;
  }
  throw NumericError("bisimulation metric did not converge");
}

MetricResult ferns_bisim_metric(const TabularMdp& mdp, double c, double tol,
                                int workers) {
  mdp.validate();  // includes rewards in [0, 1]
  const BisimWeights w = BisimWeights::convex(c);
  w.validate();
  return iterate_metric(
      mdp.n_states, tol, workers, [&](const Matrix& d, int i, int j) {
        double best = 0.0;
        for (int a = 0; a < mdp.n_actions; ++a) {
          const Matrix& pa = mdp.p[static_cast<std::size_t>(a)];
          const double v =
              w.reward * std::abs(mdp.r(i, a) - mdp.r(j, a)) +
              w.transition * w1_discrete(pa.row(i).transpose(),
                                         pa.row(j).transpose(), d);
          best = std::max(best, v);
        }
        return best;
      });
}

ValueResult value_iteration(const TabularMdp& mdp, double tol) {
  mdp.validate();
  if (!(tol > 0.0)) throw ContractError("tolerance must be positive");
  ValueResult res;
  res.v = Vector::Zero(mdp.n_states);
  res.q = Matrix::Zero(mdp.n_states, mdp.n_actions);
  for (int it = 0; it < kMaxSweeps; ++it) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      res.q.col(a) = mdp.r.col(a) +
                     mdp.gamma * mdp.p[static_cast<std::size_t>(a)] * res.v;
    }
    const Vector next = res.q.rowwise().maxCoeff();
    const double change = (next - res.v).cwiseAbs().maxCoeff();
    res.v = next;
    res.changes.push_back(change);
    res.iterations = it + 1;
    if (change < tol) {
      // Q consistent with the returned V.
      for (int a = 0; a < mdp.n_actions; ++a) {
        res.q.col(a) = mdp.r.col(a) +
                       mdp.gamma * mdp.p[static_cast<std::size_t>(a)] * res.v;
      }
      return res;
    }
  }
  throw NumericError("value iteration did not converge");
}

Matrix greedy_policy(const ValueResult& values) {
  const Matrix& q = values.q;
  Matrix pi = Matrix::Zero(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < q.rows(); ++s) {
    Eigen::Index best = 0;
    for (Eigen::Index a = 1; a < q.cols(); ++a) {
      if (q(s, a) > q(s, best)) best = a;
    }
    pi(s, best) = 1.0;
  }
  return pi;
}

namespace {

// First uncovered state (index order) becomes a medoid and absorbs every
// uncovered state within r.
void greedy_cover(const Matrix& d, double r, std::vector<int>& phi,
                  std::vector<int>& medoids) {
  const int n = static_cast<int>(d.rows());
  phi.assign(static_cast<std::size_t>(n), -1);
  medoids.clear();
  for (int s = 0; s < n; ++s) {
    if (phi[static_cast<std::size_t>(s)] >= 0) continue;
    const int id = static_cast<int>(medoids.size());
    medoids.push_back(s);
    for (int t = s; t < n; ++t) {
      if (phi[static_cast<std::size_t>(t)] < 0 && d(s, t) <= r) {
        phi[static_cast<std::size_t>(t)] = id;
      }
    }
  }
}

}  // namespace

Aggregation epsilon_cluster(const TabularMdp& mdp, const Matrix& d,
                            double eps) {
  const int n = mdp.n_states;
  if (d.rows() != n || d.cols() != n) {
    throw ContractError("metric must be n_states x n_states");
  }
  if (!(eps >= 0.0)) throw ContractError("epsilon must be nonnegative");
  Aggregation ag;
  ag.epsilon = eps;

  // A single greedy pass is not monotone in eps. Every cover built at a radius
  // r <= eps is also a valid eps-cover, so take the smallest greedy cover over
  // the radii where the threshold graph changes; the cluster count is then
  // non-increasing in eps.
  std::vector<double> radii{eps};
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (d(i, j) < eps) radii.push_back(d(i, j));
    }
  }
  std::sort(radii.begin(), radii.end(), std::greater<>());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
  std::vector<int> phi, medoids;
  for (double r : radii) {
    greedy_cover(d, r, phi, medoids);
    if (ag.medoids.empty() || medoids.size() < ag.medoids.size()) {
      ag.phi = phi;
      ag.medoids = medoids;
      ag.cover_radius = r;
    }
    if (ag.medoids.size() == 1) break;
  }

  const int k = ag.clusters();
  std::vector<int> size(static_cast<std::size_t>(k), 0);
  for (int s = 0; s < n; ++s) ++size[static_cast<std::size_t>(ag.phi[s])];
  TabularMdp& m = ag.abstract;
  m.n_states = k;
  m.n_actions = mdp.n_actions;
  m.gamma = mdp.gamma;
  m.r = Matrix::Zero(k, mdp.n_actions);
  m.p.assign(static_cast<std::size_t>(mdp.n_actions), Matrix::Zero(k, k));
  for (int s = 0; s < n; ++s) {
    const int cs = ag.phi[static_cast<std::size_t>(s)];
    const double w = 1.0 / size[static_cast<std::size_t>(cs)];
    for (int a = 0; a < mdp.n_actions; ++a) {
      m.r(cs, a) += w * mdp.r(s, a);
      const Matrix& pa = mdp.p[static_cast<std::size_t>(a)];
      Matrix& qa = m.p[static_cast<std::size_t>(a)];
      for (int t = 0; t < n; ++t) {
        qa(cs, ag.phi[static_cast<std::size_t>(t)]) += w * pa(s, t);
      }
    }
  }
  for (Matrix& qa : m.p) {
    for (int c = 0; c < k; ++c) qa.row(c) /= qa.row(c).sum();
  }
  m.r = m.r.cwiseMax(0.0).cwiseMin(1.0);  // averages of [0,1] values
  m.validate();

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int mi = ag.medoids[static_cast<std::size_t>(ag.phi[i])];
      const int mj = ag.medoids[static_cast<std::size_t>(ag.phi[j])];
      ag.encoder_error =
          std::max(ag.encoder_error, std::abs(d(mi, mj) - d(i, j)));
    }
  }
  return ag;
}

BisimAnalysis analyze_bisim(const TabularMdp& mdp, double c, double eps,
                            double metric_tol, int workers) {
  BisimAnalysis an;
  an.c = c;
  an.epsilon = eps;
  an.values = value_iteration(mdp);
  an.policy = greedy_policy(an.values);
  an.metric = pi_bisim_metric(mdp, an.policy, BisimWeights::convex(c),
                              metric_tol, workers);
  an.aggregation = epsilon_cluster(mdp, an.metric.d, eps);
  an.abstract_values = value_iteration(an.aggregation.abstract);
  const Aggregation& ag = an.aggregation;
  std::vector<int> action(static_cast<std::size_t>(ag.clusters()), -1);
  std::vector<char> mixed(static_cast<std::size_t>(ag.clusters()), 0);
  for (int s = 0; s < mdp.n_states; ++s) {
    Eigen::Index a = 0;
    an.policy.row(s).maxCoeff(&a);
    int& seen = action[static_cast<std::size_t>(ag.phi[s])];
    if (seen < 0) seen = static_cast<int>(a);
    if (seen != a) mixed[static_cast<std::size_t>(ag.phi[s])] = 1;
  }
  for (char m : mixed) an.mixed_action_clusters += m;
  return an;
}

namespace {

double bound_scale(const TabularMdp& mdp, double c) {
  return 1.0 / ((1.0 - mdp.gamma) * (1.0 - c));
}

}  // namespace

ValueBoundReport verify_value_bound(const TabularMdp& mdp,
                                    const BisimAnalysis& an, double tol) {
  const Aggregation& ag = an.aggregation;
  ValueBoundReport rep;
  rep.lhs.resize(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) {
    rep.lhs(s) = std::abs(an.values.v(s) - an.abstract_values.v(ag.phi[s]));
  }
  rep.max_lhs = rep.lhs.maxCoeff();
  rep.rhs = (2.0 * an.epsilon + 2.0 * ag.encoder_error) * bound_scale(mdp, an.c);
  rep.pass = rep.max_lhs <= rep.rhs + tol;
  return rep;
}

ReturnBoundReport verify_return_bound(const TabularMdp& mdp,
                                      const BisimAnalysis& an, int horizon,
                                      double tol) {
  if (horizon < 0) throw ContractError("horizon must be nonnegative");
  const int n = mdp.n_states;
  const Aggregation& ag = an.aggregation;
  const Matrix& pi = an.policy;

  // Per-state expected reward under pi from the original and abstract tables,
  // and the terminal values, all indexed by original states.
  Vector r(n), r_bar(n), v(n), v_bar(n);
  Matrix p = Matrix::Zero(n, n);
  for (int s = 0; s < n; ++s) {
    const int cs = ag.phi[static_cast<std::size_t>(s)];
    r(s) = 0.0;
    r_bar(s) = 0.0;
    for (int a = 0; a < mdp.n_actions; ++a) {
      r(s) += pi(s, a) * mdp.r(s, a);
      r_bar(s) += pi(s, a) * ag.abstract.r(cs, a);
      p.row(s) += pi(s, a) * mdp.p[static_cast<std::size_t>(a)].row(s);
    }
    v(s) = an.values.v(s);
    v_bar(s) = an.abstract_values.v(cs);
  }

  // Exact expectations: rows of `dist` are the state law at step h for each
  // start state.
  Matrix dist = Matrix::Identity(n, n);
  Vector score = Vector::Zero(n);
  Vector score_bar = Vector::Zero(n);
  double disc = 1.0;
  for (int h = 0; h < horizon; ++h) {
    score += disc * dist * r;
    score_bar += disc * dist * r_bar;
    dist = dist * p;
    disc *= mdp.gamma;
  }
  score += disc * dist * v;
  score_bar += disc * dist * v_bar;

  ReturnBoundReport rep;
  rep.horizon = horizon;
  rep.lhs = (score - score_bar).cwiseAbs();
  rep.max_lhs = rep.lhs.maxCoeff();
  const double scale = bound_scale(mdp, an.c);
  const double g = mdp.gamma;
  const double head = 2.0 * std::pow(g, horizon) *
                      (an.epsilon + ag.encoder_error) * scale;
  rep.bound_h =
      head + 2.0 * an.epsilon * (1.0 - std::pow(g, horizon)) * scale;
  rep.bound_h1 =
      head + 2.0 * an.epsilon * (1.0 - std::pow(g, horizon - 1)) * scale;
  rep.pass_h = rep.max_lhs <= rep.bound_h + tol;
  rep.pass_h1 = rep.max_lhs <= rep.bound_h1 + tol;
  rep.pass = rep.max_lhs <= std::max(rep.bound_h, rep.bound_h1) + tol;
  return rep;
}

RewardBoundReport verify_reward_bound(const TabularMdp& mdp,
                                      const BisimAnalysis& an, double tol) {
  const Aggregation& ag = an.aggregation;
  RewardBoundReport rep;
  for (int s = 0; s < mdp.n_states; ++s) {
    const int cs = ag.phi[static_cast<std::size_t>(s)];
    for (int a = 0; a < mdp.n_actions; ++a) {
      if (an.policy(s, a) <= 0.0) continue;
      rep.lhs = std::max(rep.lhs, (1.0 - an.c) * std::abs(mdp.r(s, a) -
                                                          ag.abstract.r(cs, a)));
    }
  }
  rep.rhs = 2.0 * an.epsilon;
  rep.pass = rep.lhs <= rep.rhs + tol;
  return rep;
}

}  // namespace bsmpc
