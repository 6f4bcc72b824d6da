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

#ifndef BSMPC_TABULAR_MDP_H_
#define BSMPC_TABULAR_MDP_H_

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "bsmpc/tensor.h"

namespace bsmpc {

// Finite MDP with rewards in [0, 1]. p[a] is the n x n row-stochastic matrix
// of action a; r is n x A.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  double gamma = 0.9;
  Matrix r;
  std::vector<Matrix> p;

  double prob(int s, int a, int next) const { return p[a](s, next); }
  void validate() const;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dirichlet(1) successor rows over ceil(sparsity * n) random successors,
// rewards uniform in [0, 1].
TabularMdp random_mdp(int n_states, int n_actions, double sparsity,
                      std::uint64_t seed, double gamma = 0.9);

// Gives state `dst` the reward row and transition rows of `src`, which makes
// the two states exactly bisimilar.
void plant_twin(TabularMdp& mdp, int src, int dst);

// Text format, whitespace separated, '#' starts a comment:
//   n_states n_actions gamma
//   n_states rows of R (n_actions values each)
//   n_states * n_actions rows of P, state-major: row (s, a) holds
//   P(. | s, a) as n_states values
TabularMdp read_tabular_mdp(std::istream& in);
TabularMdp load_tabular_mdp(const std::string& path);
void write_tabular_mdp(std::ostream& out, const TabularMdp& mdp);

}  // namespace bsmpc

#endif  // BSMPC_TABULAR_MDP_H_
