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

#include "bsmpc/tabular_mdp.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace bsmpc {

void TabularMdp::validate() const {
  if (n_states <= 0 || n_actions <= 0) {
    throw ContractError("TabularMdp: need at least one state and action");
  }
  if (!(gamma > 0.0 && gamma < 1.0)) {
    throw ContractError("TabularMdp: gamma must lie in (0, 1)");
  }
  if (r.rows() != n_states || r.cols() != n_actions) {
    throw ContractError("TabularMdp: reward table must be n_states x n_actions");
  }
  if (!all_finite(r) || r.minCoeff() < 0.0 || r.maxCoeff() > 1.0) {
    throw ContractError("TabularMdp: rewards must lie in [0, 1]");
  }
  if (static_cast<int>(p.size()) != n_actions) {
    throw ContractError("TabularMdp: need one transition matrix per action");
  }
  for (int a = 0; a < n_actions; ++a) {
    const Matrix& pa = p[static_cast<std::size_t>(a)];
    if (pa.rows() != n_states || pa.cols() != n_states) {
      throw ContractError("TabularMdp: transition matrix has wrong shape");
    }
    if (!all_finite(pa) || pa.minCoeff() < 0.0) {
      throw ContractError("TabularMdp: transition entries must be >= 0");
    }
    for (int s = 0; s < n_states; ++s) {
      if (std::abs(pa.row(s).sum() - 1.0) > 1e-12) {
        throw ContractError("TabularMdp: row (s=" + std::to_string(s) +
                            ", a=" + std::to_string(a) + ") does not sum to 1");
      }
    }
  }
}

TabularMdp random_mdp(int n_states, int n_actions, double sparsity,
                      std::uint64_t seed, double gamma) {
  if (n_states <= 0 || n_actions <= 0) {
    throw ContractError("random_mdp: sizes must be positive");
  }
  if (!(sparsity > 0.0 && sparsity <= 1.0)) {
    throw ContractError("random_mdp: sparsity must lie in (0, 1]");
  }
  Rng rng(seed);
  TabularMdp m;
  m.n_states = n_states;
  m.n_actions = n_actions;
  m.gamma = gamma;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  m.r.resize(n_states, n_actions);
  for (Eigen::Index i = 0; i < m.r.size(); ++i) m.r.data()[i] = u(rng);

  const int support = std::clamp(
      static_cast<int>(std::ceil(sparsity * n_states - 1e-12)), 1, n_states);
  std::gamma_distribution<double> g(1.0, 1.0);
  std::vector<int> order(static_cast<std::size_t>(n_states));
  m.p.assign(static_cast<std::size_t>(n_actions),
             Matrix::Zero(n_states, n_states));
  for (int s = 0; s < n_states; ++s) {
    for (int a = 0; a < n_actions; ++a) {
      std::iota(order.begin(), order.end(), 0);
      for (int i = 0; i < support; ++i) {
        std::uniform_int_distribution<int> pick(i, n_states - 1);
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(pick(rng))]);
      }
      Matrix& pa = m.p[static_cast<std::size_t>(a)];
      double total = 0.0;
      for (int i = 0; i < support; ++i) {
        const double w = std::max(g(rng), 1e-300);
        pa(s, order[static_cast<std::size_t>(i)]) = w;
        total += w;
      }
      pa.row(s) /= total;
    }
  }
  m.validate();
  return m;
}

void plant_twin(TabularMdp& mdp, int src, int dst) {
  if (src < 0 || dst < 0 || src >= mdp.n_states || dst >= mdp.n_states) {
    throw ContractError("plant_twin: state out of range");
  }
  mdp.r.row(dst) = mdp.r.row(src);
  for (Matrix& pa : mdp.p) pa.row(dst) = pa.row(src);
}

namespace {

// Splits the stream into non-empty logical lines, dropping comments, and
// remembers physical line numbers for diagnostics.
struct Line {
  int number;
  std::vector<std::string> tokens;
};

std::vector<Line> tokenize(std::istream& in) {
  std::vector<Line> lines;
  std::string raw;
  int number = 0;
  while (std::getline(in, raw)) {
    ++number;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ss(raw);
    Line l{number, {}};
    std::string tok;
    while (ss >> tok) l.tokens.push_back(tok);
    if (!l.tokens.empty()) lines.push_back(std::move(l));
  }
  return lines;
}

double parse_double(const std::string& tok, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != tok.size() || !std::isfinite(v)) {
    throw ParseError(where + ": '" + tok + "' is not a finite number");
  }
  return v;
}

int parse_int(const std::string& tok, const std::string& where) {
  const double v = parse_double(tok, where);
  if (v != std::floor(v) || v < 1 || v > 1e6) {
    throw ParseError(where + ": '" + tok + "' is not a positive integer");
  }
  return static_cast<int>(v);
}

std::string at_line(int number) { return "line " + std::to_string(number); }

}  // namespace

TabularMdp read_tabular_mdp(std::istream& in) {
  const std::vector<Line> lines = tokenize(in);
  if (lines.empty()) throw ParseError("empty MDP file");
  const Line& head = lines.front();
  const std::string hw = at_line(head.number) + " (header)";
  if (head.tokens.size() != 3) {
    throw ParseError(hw + ": expected 'n_states n_actions gamma', got " +
                     std::to_string(head.tokens.size()) + " values");
  }
  TabularMdp m;
  m.n_states = parse_int(head.tokens[0], hw);
  m.n_actions = parse_int(head.tokens[1], hw);
  m.gamma = parse_double(head.tokens[2], hw);
  const int n = m.n_states;
  const int na = m.n_actions;
  const std::size_t expected = 1 + static_cast<std::size_t>(n) +
                               static_cast<std::size_t>(n) * na;
  if (lines.size() != expected) {
    throw ParseError("expected " + std::to_string(expected) +
                     " non-comment rows (header, " + std::to_string(n) +
                     " reward rows, " + std::to_string(n * na) +
                     " transition rows), found " +
                     std::to_string(lines.size()));
  }
  m.r.resize(n, na);
  for (int s = 0; s < n; ++s) {
    const Line& l = lines[1 + static_cast<std::size_t>(s)];
    const std::string w =
        at_line(l.number) + " (reward row for state " + std::to_string(s) + ")";
    if (static_cast<int>(l.tokens.size()) != na) {
      throw ParseError(w + ": expected " + std::to_string(na) +
                       " values, got " + std::to_string(l.tokens.size()));
    }
    for (int a = 0; a < na; ++a) {
      m.r(s, a) = parse_double(l.tokens[static_cast<std::size_t>(a)], w);
      if (m.r(s, a) < 0.0 || m.r(s, a) > 1.0) {
        throw ParseError(w + ": reward " + l.tokens[static_cast<std::size_t>(a)] +
                         " outside [0, 1]");
      }
    }
  }
  m.p.assign(static_cast<std::size_t>(na), Matrix::Zero(n, n));
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < na; ++a) {
      const Line& l =
          lines[1 + static_cast<std::size_t>(n) +
                static_cast<std::size_t>(s) * static_cast<std::size_t>(na) +
                static_cast<std::size_t>(a)];
      const std::string w = at_line(l.number) + " (transition row s=" +
                            std::to_string(s) + ", a=" + std::to_string(a) +
                            ")";
      if (static_cast<int>(l.tokens.size()) != n) {
        throw ParseError(w + ": expected " + std::to_string(n) +
                         " values, got " + std::to_string(l.tokens.size()));
      }
      double total = 0.0;
      for (int t = 0; t < n; ++t) {
        const double v = parse_double(l.tokens[static_cast<std::size_t>(t)], w);
        if (v < 0.0) throw ParseError(w + ": negative probability");
        m.p[static_cast<std::size_t>(a)](s, t) = v;
        total += v;
      }
      if (std::abs(total - 1.0) > 1e-12) {
        std::ostringstream msg;
        msg << w << ": probabilities sum to " << std::setprecision(17) << total;
        throw ParseError(msg.str());
      }
    }
  }
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw ParseError(e.what());
  }
  return m;
}

TabularMdp load_tabular_mdp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open MDP file '" + path + "'");
  try {
    return read_tabular_mdp(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_tabular_mdp(std::ostream& out, const TabularMdp& mdp) {
  mdp.validate();
  out << std::setprecision(17);
  out << mdp.n_states << ' ' << mdp.n_actions << ' ' << mdp.gamma << '\n';
  out << "# rewards: one row per state\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      out << (a ? " " : "") << mdp.r(s, a);
    }
    out << '\n';
  }
  out << "# transitions: row (s, a), state-major\n";
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      for (int t = 0; t < mdp.n_states; ++t) {
        out << (t ? " " : "") << mdp.prob(s, a, t);
      }
      out << '\n';
    }
  }
}

}  // namespace bsmpc
