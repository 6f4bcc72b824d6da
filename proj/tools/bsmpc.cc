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

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bsmpc/bisim.h"
#include "bsmpc/config.h"
#include "bsmpc/losses.h"
#include "bsmpc/plot.h"
#include "bsmpc/tabular_mdp.h"
#include "bsmpc/trainer.h"

namespace fs = std::filesystem;
using namespace bsmpc;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kRuntime = 2;
constexpr int kViolation = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<double> parse_doubles(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size() || !std::isfinite(v)) {
      throw UsageError(std::string("bad ") + what + " value '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string("empty ") + what + " list");
  return out;
}

std::vector<int> parse_ints(const std::string& text, const char* what) {
  std::vector<int> out;
  for (double v : parse_doubles(text, what)) {
    if (v != std::floor(v)) {
      throw UsageError(std::string("bad ") + what + " value " + std::to_string(v));
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

std::vector<std::uint64_t> seeds_or_usage(const std::string& text) {
  try {
    return parse_seed_list(text);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

fs::path default_output_root() {
  const char* env = std::getenv("BSMPC_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string seeds;
  std::string out;
  std::string name = "run";
  bool force = false;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& extras,
              const std::vector<std::string>& argv) {
  TrainConfig base;
  try {
    base = resolve_train_config(a.config, parse_override_args(extras));
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  std::vector<std::uint64_t> seeds{base.seed};
  if (!a.seeds.empty()) seeds = seeds_or_usage(a.seeds);

  const fs::path root = (a.out.empty() ? default_output_root() : fs::path(a.out)) / a.name;
  for (std::uint64_t seed : seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    const fs::path dir = root / ("seed_" + std::to_string(seed));
    if (fs::exists(dir / "metrics.csv") && !a.force) {
      throw UsageError("'" + dir.string() + "' already holds a run (use --force)");
    }
    fs::create_directories(dir);
    const nlohmann::json manifest = {{"config", cfg.to_json()},
                                     {"revision", BSMPC_REVISION},
                                     {"seed", seed},
                                     {"args", argv}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    Trainer trainer(cfg, dir);
    int episodes = 0;
    const auto t0 = std::chrono::steady_clock::now();
    if (!a.quiet) {
      trainer.on_episode = [&](const EpisodeResult& r) {
        ++episodes;
        std::fprintf(stderr, "[seed %llu] step %lld  episode %d  return %.2f  %.0fs\n",
                     static_cast<unsigned long long>(seed),
                     static_cast<long long>(trainer.env_step()), episodes,
                     r.episode_return,
                     std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                         .count());
      };
    }
    const EvalResult e = trainer.run();
    std::printf("seed %llu: eval return %.3f +- %.3f over %zu episodes, %lld skipped steps -> %s\n",
                static_cast<unsigned long long>(seed), e.mean, e.std,
                e.returns.size(), static_cast<long long>(trainer.skipped_steps()),
                dir.string().c_str());
  }
  return kOk;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string& checkpoint, int episodes, std::uint64_t seed,
             int workers, bool json) {
  if (episodes < 1) throw UsageError("--episodes must be >= 1");
  LoadedRun run = load_checkpoint(checkpoint);
  if (workers > 0) run.config.workers = workers;
  const EvalResult e =
      evaluate_policy(*run.models, run.config, run.env_step, episodes, seed);
  if (json) {
    std::cout << nlohmann::json{{"checkpoint", checkpoint},
                                {"env_step", run.env_step},
                                {"seed", seed},
                                {"returns", e.returns},
                                {"mean", e.mean},
                                {"std", e.std}}
                     .dump(2)
              << "\n";
  } else {
    for (std::size_t i = 0; i < e.returns.size(); ++i) {
      std::printf("episode %zu  return %.3f\n", i, e.returns[i]);
    }
    std::printf("mean %.3f  std %.3f  (%d episodes, env_step %lld)\n", e.mean,
                e.std, episodes, static_cast<long long>(run.env_step));
  }
  return kOk;
}

// ---------------------------------------------------------------- bisim-verify

struct VerifyArgs {
  std::string mdp;
  std::vector<int> random;  // n A
  std::string seeds = "1";
  std::string epsilon = "0.05,0.2";
  std::string c = "0.5,0.9";
  std::string horizons = "1,3,5";
  std::string weights = "convex";
  double sparsity = 0.6;
  double tol = 1e-8;
  std::string out = ".";
  int workers = 1;
};

void print_matrix(std::ostream& o, const Matrix& m) {
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    o << "   ";
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, " %9.5f", m(i, j));
      o << buf;
    }
    o << "\n";
  }
}

int cmd_bisim_verify(const VerifyArgs& a) {
  if (a.mdp.empty() == a.random.empty()) {
    throw UsageError("give exactly one of --mdp FILE or --random N A");
  }
  if (a.weights != "convex" && a.weights != "discounted") {
    throw UsageError("--weights must be 'convex' or 'discounted'");
  }
  const auto eps_list = parse_doubles(a.epsilon, "epsilon");
  const auto c_list = parse_doubles(a.c, "c");
  const auto h_list = parse_ints(a.horizons, "horizon");
  for (double e : eps_list) {
    if (e < 0.0) throw UsageError("epsilon must be >= 0");
  }
  for (double c : c_list) {
    if (c <= 0.0 || c >= 1.0) throw UsageError("c must lie in (0, 1)");
  }
  for (int h : h_list) {
    if (h < 1) throw UsageError("horizons must be >= 1");
  }

  struct Instance {
    std::string name;
    std::uint64_t seed;
    TabularMdp mdp;
  };
  std::vector<Instance> instances;
  if (!a.mdp.empty()) {
    instances.push_back({a.mdp, 0, load_tabular_mdp(a.mdp)});
  } else {
    if (a.random.size() != 2 || a.random[0] < 1 || a.random[1] < 1) {
      throw UsageError("--random takes N A with N, A >= 1");
    }
    for (std::uint64_t s : seeds_or_usage(a.seeds)) {
      instances.push_back({"random", s,
                           random_mdp(a.random[0], a.random[1], a.sparsity, s)});
    }
  }

  fs::create_directories(a.out);
  std::ofstream txt(fs::path(a.out) / "report.txt");
  std::ofstream csv(fs::path(a.out) / "report.csv");
  if (!txt || !csv) throw std::runtime_error("cannot write reports under " + a.out);
  csv << "instance,seed,n_states,n_actions,gamma,c,epsilon,clusters,"
         "encoder_error,mixed_action_clusters,check,horizon,lhs,rhs,rhs_alt,pass\n";
  csv.precision(12);

  int checks = 0, violations = 0;
  for (const Instance& inst : instances) {
    const TabularMdp& mdp = inst.mdp;
    txt << "== " << inst.name;
    if (inst.name == "random") txt << " seed " << inst.seed;
    txt << ": " << mdp.n_states << " states, " << mdp.n_actions
        << " actions, gamma " << mdp.gamma << "\n";
    for (double c : c_list) {
      bool printed_metric = false;
      for (double eps : eps_list) {
        const BisimAnalysis an = analyze_bisim(mdp, c, eps, 1e-11, a.workers);
        if (!printed_metric) {
          printed_metric = true;
          if (a.weights == "discounted") {
            const MetricResult d = pi_bisim_metric(
                mdp, an.policy, BisimWeights::discounted(mdp.gamma), 1e-11, a.workers);
            txt << "  discounted on-policy metric (weights 1, gamma), "
                << d.iterations << " sweeps:\n";
            print_matrix(txt, d.d);
          }
          txt << "  c = " << c << ": on-policy metric (weights 1-c, c), "
              << an.metric.iterations << " sweeps:\n";
          print_matrix(txt, an.metric.d);
        }
        const Aggregation& ag = an.aggregation;
        txt << "  c = " << c << ", eps = " << eps << ": " << ag.clusters()
            << " clusters (radius " << ag.cover_radius << "), L = "
            << ag.encoder_error << ", mixed-action clusters "
            << an.mixed_action_clusters << "\n    phi =";
        for (int p : ag.phi) txt << ' ' << p;
        txt << "\n";

        auto row = [&](const char* check, int h, double lhs, double rhs,
                       double rhs_alt, bool pass) {
          ++checks;
          violations += !pass;
          csv << inst.name << ',' << inst.seed << ',' << mdp.n_states << ','
              << mdp.n_actions << ',' << mdp.gamma << ',' << c << ',' << eps
              << ',' << ag.clusters() << ',' << ag.encoder_error << ','
              << an.mixed_action_clusters << ',' << check << ',' << h << ','
              << lhs << ',' << rhs << ',' << rhs_alt << ',' << (pass ? 1 : 0)
              << '\n';
          char buf[200];
          std::snprintf(buf, sizeof buf, "    %-12s", check);
          txt << buf;
          if (h > 0) {
            std::snprintf(buf, sizeof buf, " H=%d", h);
            txt << buf;
          }
          std::snprintf(buf, sizeof buf, "  lhs %.6g  rhs %.6g", lhs, rhs);
          txt << buf;
          if (!std::isnan(rhs_alt)) {
            std::snprintf(buf, sizeof buf, " (alt %.6g)", rhs_alt);
            txt << buf;
          }
          txt << (pass ? "  pass\n" : "  FAIL\n");
        };
        const double nan = std::nan("");
        const ValueBoundReport t2 = verify_value_bound(mdp, an, a.tol);
        row("value_bound", 0, t2.max_lhs, t2.rhs, nan, t2.pass);
        for (int h : h_list) {
          const ReturnBoundReport t3 = verify_return_bound(mdp, an, h, a.tol);
          row("return_bound", h, t3.max_lhs,
              std::max(t3.bound_h, t3.bound_h1),
              std::min(t3.bound_h, t3.bound_h1), t3.pass);
        }
        const RewardBoundReport l1 = verify_reward_bound(mdp, an, a.tol);
        row("reward_bound", 0, l1.lhs, l1.rhs, nan, l1.pass);
      }
    }
  }
  txt << "\n" << checks << " checks, " << violations << " violations\n";
  std::printf("%d checks, %d violations; reports in %s\n", checks, violations,
              a.out.c_str());
  return violations == 0 ? kOk : kViolation;
}

// ---------------------------------------------------------------- bench-loss

struct BenchArgs {
  int batch = 256;
  int horizon = 5;
  std::string workers = "1,2,4";
  int repeats = 5;
  int latent = 16;
  int hidden = 64;
  int state_dim = 3;
  int action_dim = 1;
  std::uint64_t seed = 1;
};

double max_rel_diff(const ModelLossResult& a, const ModelLossResult& b) {
  auto rel = [](double x, double y) {
    return std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-300});
  };
  double worst = rel(a.breakdown.total, b.breakdown.total);
  for (std::size_t i = 0; i < a.grads.size(); ++i) {
    const double scale = std::max(a.grads[i].cwiseAbs().maxCoeff(), 1e-300);
    worst = std::max(worst, (a.grads[i] - b.grads[i]).cwiseAbs().maxCoeff() / scale);
  }
  return worst;
}

int cmd_bench_loss(const BenchArgs& a) {
  if (a.repeats < 1) throw UsageError("--repeats must be >= 1");
  if (a.batch < 2 || a.horizon < 1) throw UsageError("need --batch >= 2 and --horizon >= 1");
  const std::vector<int> workers = parse_ints(a.workers, "workers");
  for (int w : workers) {
    if (w < 1) throw UsageError("workers must be >= 1");
  }
  Rng rng(a.seed);
  ModelConfig mc;
  mc.state_dim = a.state_dim;
  mc.action_dim = a.action_dim;
  mc.latent_dim = a.latent;
  mc.hidden_dim = a.hidden;
  const ModelSet models(mc, rng);
  const SegmentBatch batch =
      random_segment_batch(a.state_dim, a.action_dim, a.batch, a.horizon, rng);
  const std::vector<int> perm = permute_batch(a.batch, rng);
  LossCoefficients coeffs;

  auto time_it = [&](const std::function<ModelLossResult()>& f, ModelLossResult* out) {
    std::vector<double> ms;
    *out = f();  // warm-up
    for (int r = 0; r < a.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      *out = f();
      ms.push_back(std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count());
    }
    double mean = 0.0;
    for (double m : ms) mean += m;
    mean /= static_cast<double>(ms.size());
    double var = 0.0;
    for (double m : ms) var += (m - mean) * (m - mean);
    const double sd = ms.size() > 1 ? std::sqrt(var / static_cast<double>(ms.size() - 1)) : 0.0;
    return std::make_pair(mean, sd);
  };

  ModelLossResult seq;
  const auto [seq_mean, seq_sd] =
      time_it([&] { return sequential_rollout_loss(models, batch, coeffs); }, &seq);
  ModelLossResult serial;
  const auto [ser_mean, ser_sd] = time_it(
      [&] { return total_model_loss_serial(models, batch, perm, coeffs); }, &serial);

  std::printf("batch %d, horizon %d, latent %d, hidden %d, %d repeats\n", a.batch,
              a.horizon, a.latent, a.hidden, a.repeats);
  std::printf("%-26s %10s %8s %12s %12s\n", "variant", "mean_ms", "sd_ms",
              "vs_W1", "vs_sequential");
  std::printf("%-26s %10.3f %8.3f %12s %12.3f\n", "sequential rollout", seq_mean,
              seq_sd, "-", 1.0);
  std::printf("%-26s %10.3f %8.3f %12s %12.3f\n", "single-tape reference",
              ser_mean, ser_sd, "-", seq_mean / ser_mean);

  ModelLossResult first;
  double w1_mean = 0.0;
  double worst = 0.0;
  bool have_first = false;
  for (int w : workers) {
    ModelLossResult res;
    const auto [mean, sd] = time_it(
        [&] { return total_model_loss(models, batch, perm, coeffs, w); }, &res);
    if (!have_first) {
      first = res;
      w1_mean = mean;
      have_first = true;
    }
    worst = std::max(worst, max_rel_diff(first, res));
    char label[40];
    std::snprintf(label, sizeof label, "per-step parallel W=%d", w);
    std::printf("%-26s %10.3f %8.3f %12.3f %12.3f\n", label, mean, sd,
                w1_mean / mean, seq_mean / mean);
  }
  const double vs_ref = max_rel_diff(first, serial);
  std::printf("max relative difference across W: %.3g (limit 1e-12)\n", worst);
  std::printf("parallel vs single-tape reference: %.3g\n", vs_ref);
  if (worst > 1e-12) {
    std::fprintf(stderr, "error: worker counts disagree beyond 1e-12\n");
    return kRuntime;
  }
  return kOk;
}

// ---------------------------------------------------------------- plot

struct PlotArgs {
  std::vector<std::string> csv;
  std::vector<std::string> labels;
  std::string x = "env_step";
  std::string y = "eval_return_mean";
  std::string out = "plot.svg";
  std::string title;
  bool log_y = false;
};

int cmd_plot(const PlotArgs& a) {
  if (!a.labels.empty() && a.labels.size() != a.csv.size()) {
    throw UsageError("--label must be given once per --csv");
  }
  std::vector<Series> series;
  // Evaluation columns repeat the last value on every update row.
  const bool dedupe = a.y.rfind("eval_", 0) == 0 || a.y == "episode_return";
  for (std::size_t i = 0; i < a.csv.size(); ++i) {
    const CsvTable t = read_csv(a.csv[i]);
    const std::string label =
        a.labels.empty() ? fs::path(a.csv[i]).parent_path().filename().string()
                         : a.labels[i];
    try {
      series.push_back(extract_series(t, a.x, a.y, label.empty() ? a.csv[i] : label,
                                      dedupe));
    } catch (const std::runtime_error& e) {
      throw UsageError(a.csv[i] + ": " + e.what());
    }
  }
  PlotOptions opt;
  opt.title = a.title.empty() ? a.y + " vs " + a.x : a.title;
  opt.x_label = a.x;
  opt.y_label = a.y;
  opt.log_y = a.log_y;
  write_text(a.out, render_svg(series, opt));
  std::printf("wrote %s (%zu series)\n", a.out.c_str(), series.size());
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"BS-MPC: latent model-based control with a bisimulation loss"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("bsmpc ") + BSMPC_REVISION);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train on an environment");
  train->add_option("--config", ta.config, "JSON config file (comments allowed)");
  train->add_option("--seed", ta.seeds, "Seed list, e.g. 1,2,3 or 1-3");
  train->add_option("--out", ta.out, "Output root (default $BSMPC_OUTPUT_ROOT or ./runs)");
  train->add_option("--name", ta.name, "Run name under the output root");
  train->add_flag("--force", ta.force, "Overwrite an existing run directory");
  train->add_flag("--quiet", ta.quiet, "No per-episode progress");
  train->allow_extras();
  train->footer("Any config key can be overridden as --section.key VALUE, "
                "e.g. --planner.population 256 --loss.c4 0.1");

  std::string ckpt;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 1;
  int eval_workers = 0;
  bool eval_json = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint without exploration noise");
  eval->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  eval->add_option("--episodes", eval_episodes, "Episodes");
  eval->add_option("--seed", eval_seed, "Env seed of the first episode");
  eval->add_option("--workers", eval_workers, "Concurrent episodes (default: from config)");
  eval->add_flag("--json", eval_json, "JSON output");

  VerifyArgs va;
  auto* verify = app.add_subcommand("bisim-verify", "Check the bisimulation bounds on finite MDPs");
  verify->add_option("--mdp", va.mdp, "Tabular MDP file");
  verify->add_option("--random", va.random, "Random MDPs with N states and A actions")
      ->expected(2);
  verify->add_option("--seeds", va.seeds, "Seeds for --random");
  verify->add_option("--sparsity", va.sparsity, "Successor fraction for --random");
  verify->add_option("--epsilon", va.epsilon, "Aggregation radii");
  verify->add_option("--c", va.c, "Metric weights c (list)");
  verify->add_option("--horizons", va.horizons, "Trajectory horizons");
  verify->add_option("--weights", va.weights,
                     "Also print the discounted metric ('discounted') or not ('convex')");
  verify->add_option("--tol", va.tol, "Slack allowed on every bound");
  verify->add_option("--out", va.out, "Directory for report.txt / report.csv");
  verify->add_option("--workers", va.workers, "Threads per metric sweep");

  BenchArgs ba;
  auto* bench = app.add_subcommand("bench-loss", "Time parallel vs sequential loss evaluation");
  bench->add_option("--batch", ba.batch);
  bench->add_option("--horizon", ba.horizon);
  bench->add_option("--workers", ba.workers, "Worker counts, first is the baseline");
  bench->add_option("--repeats", ba.repeats);
  bench->add_option("--latent", ba.latent);
  bench->add_option("--hidden", ba.hidden);
  bench->add_option("--state-dim", ba.state_dim);
  bench->add_option("--action-dim", ba.action_dim);
  bench->add_option("--seed", ba.seed);

  PlotArgs pa;
  auto* plot = app.add_subcommand("plot", "Render metrics CSVs to SVG");
  plot->add_option("--csv", pa.csv, "metrics.csv files")->required();
  plot->add_option("--label", pa.labels, "Series labels, one per --csv");
  plot->add_option("--x", pa.x, "X column");
  plot->add_option("--y", pa.y, "Y column");
  plot->add_option("--out", pa.out, "SVG file");
  plot->add_option("--title", pa.title);
  plot->add_flag("--log-y", pa.log_y);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) {
      return cmd_train(ta, train->remaining(), std::vector<std::string>(argv, argv + argc));
    }
    if (*eval) return cmd_eval(ckpt, eval_episodes, eval_seed, eval_workers, eval_json);
    if (*verify) return cmd_bisim_verify(va);
    if (*bench) return cmd_bench_loss(ba);
    if (*plot) return cmd_plot(pa);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
