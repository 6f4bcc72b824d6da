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

#include "bsmpc/wasserstein.h"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace bsmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Residual capacities below this are treated as exhausted.
constexpr double kCapEps = 1e-15;

void check_distribution(const Vector& v, const char* name) {
  if (!v.allFinite() || v.minCoeff() < 0.0) {
    throw ContractError(std::string("w1_discrete: ") + name +
                        " must be finite and nonnegative");
  }
  if (std::abs(v.sum() - 1.0) > 1e-12) {
    throw ContractError(std::string("w1_discrete: ") + name +
                        " does not sum to 1");
  }
}

}  // namespace

double w1_discrete(const Vector& p, const Vector& q, const Matrix& cost) {
  const int n = static_cast<int>(p.size());
  if (n == 0 || q.size() != n || cost.rows() != n || cost.cols() != n) {
    throw ContractError("w1_discrete: size mismatch");
  }
  check_distribution(p, "p");
  check_distribution(q, "q");
  if (!all_finite(cost) || cost.minCoeff() < 0.0) {
    throw ContractError("w1_discrete: cost must be finite and nonnegative");
  }

  Vector supply = p;  // mass not yet shipped
  Vector demand = q;  // mass not yet received
  Matrix flow = Matrix::Zero(n, n);

  // Nodes: 0 source, 1..n supply points, n+1..2n demand points, 2n+1 sink.
  const int v_count = 2 * n + 2;
  const int src = 0;
  const int snk = 2 * n + 1;
  auto sup_node = [](int i) { return 1 + i; };
  auto dem_node = [n](int j) { return 1 + n + j; };

  std::vector<double> pot(static_cast<std::size_t>(v_count), 0.0);
  std::vector<double> dist(static_cast<std::size_t>(v_count));
  std::vector<int> prev(static_cast<std::size_t>(v_count));
  std::vector<char> done(static_cast<std::size_t>(v_count));

  // Visits every residual edge leaving u as (v, cost). Edges back into the
  // source or out of the sink never lie on a shortest source-sink path.
  auto for_each_edge = [&](int u, auto&& visit) {
    if (u == src) {
      for (int i = 0; i < n; ++i) {
        if (supply(i) > kCapEps) visit(sup_node(i), 0.0);
      }
    } else if (u <= n) {
      const int i = u - 1;
      for (int j = 0; j < n; ++j) visit(dem_node(j), cost(i, j));
    } else if (u < snk) {
      const int j = u - 1 - n;
      for (int i = 0; i < n; ++i) {
        if (flow(i, j) > kCapEps) visit(sup_node(i), -cost(i, j));
      }
      if (demand(j) > kCapEps) visit(snk, 0.0);
    }
  };

  const int max_rounds = 64 * n * n + 64;
  for (int round = 0;; ++round) {
    if (supply.sum() <= kCapEps || demand.sum() <= kCapEps) break;
    if (round == max_rounds) {
      throw NumericError("w1_discrete: flow did not converge");
    }
    std::fill(dist.begin(), dist.end(), kInf);
    std::fill(prev.begin(), prev.end(), -1);
    std::fill(done.begin(), done.end(), 0);
    dist[src] = 0.0;
    for (;;) {
      int u = -1;
      for (int v = 0; v < v_count; ++v) {
        if (!done[v] && dist[v] < kInf && (u < 0 || dist[v] < dist[u])) u = v;
      }
      if (u < 0 || u == snk) break;
      done[u] = 1;
      for_each_edge(u, [&](int v, double c) {
        // Reduced costs are nonnegative up to rounding; clamp the noise.
        const double rc = std::max(0.0, c + pot[u] - pot[v]);
        if (!done[v] && dist[u] + rc < dist[v]) {
          dist[v] = dist[u] + rc;
          prev[v] = u;
        }
      });
    }
    if (dist[snk] == kInf) break;
    for (int v = 0; v < v_count; ++v) pot[v] += std::min(dist[v], dist[snk]);

    // Bottleneck along the path, then push.
    double push = kInf;
    for (int v = snk; v != src; v = prev[v]) {
      const int u = prev[v];
      if (u == src) {
        push = std::min(push, supply(v - 1));
      } else if (v == snk) {
        push = std::min(push, demand(u - 1 - n));
      } else if (u > n) {
        push = std::min(push, flow(v - 1, u - 1 - n));
      }
    }
    for (int v = snk; v != src; v = prev[v]) {
      const int u = prev[v];
      if (u == src) {
        supply(v - 1) -= push;
      } else if (v == snk) {
        demand(u - 1 - n) -= push;
      } else if (u <= n) {
        flow(u - 1, v - 1 - n) += push;
      } else {
        flow(v - 1, u - 1 - n) -= push;
      }
    }
  }
  return (flow.array() * cost.array()).sum();
}

}  // namespace bsmpc
