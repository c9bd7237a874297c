/* Copyright 2026 The slime-kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// slime_cli: runs planning, bilinear dynamics, toy training, routing and
// seed sweeps. JSON goes to stdout, diagnostics to stderr.
//
// Exit codes: 0 success, 2 usage/config/input error, 3 divergence.

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "slime/bilinear.hpp"
#include "slime/config.hpp"
#include "slime/io.hpp"
#include "slime/local_path.hpp"
#include "slime/params.hpp"
#include "slime/pipeline.hpp"
#include "slime/slicing.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

namespace fs = std::filesystem;
using slime::RunConfig;

/// Raised for user-facing input problems; maps to exit code 2.
struct UsageError : slime::Error {
  using slime::Error::Error;
};

std::uint64_t seed_fallback() {
  const char* env = std::getenv("SLIME_KIT_SEED");
  if (!env || !*env) return 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (*end != '\0') throw UsageError(std::string("SLIME_KIT_SEED is not an unsigned integer: '") + env + "'");
  return v;
}

void emit(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  out << body;
  if (!out) throw UsageError("failed writing '" + path.string() + "'");
}

RunConfig load_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : slime::load_config(path);
}

// ---------------------------------------------------------------------------
// plan
// ---------------------------------------------------------------------------

struct PlanArgs {
  int width = 0;
  int height = 0;
  int base = slime::kBaseResolution;
  int max_grid = slime::kMaxGrid;
};

int cmd_plan(const PlanArgs& a) {
  if (a.width < 1 || a.height < 1) throw UsageError("--width and --height must be positive");
  const slime::PartitionPlan p = slime::plan_partition({a.width, a.height}, a.base, a.max_grid);
  emit({{"width", a.width}, {"height", a.height}, {"m", p.m}, {"n", p.n}, {"tiles", p.tiles()},
        {"scale", p.scale}, {"utilized", p.utilized}, {"wasted", p.wasted}, {"base", p.base}});
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bilinear
// ---------------------------------------------------------------------------

struct BilinearArgs {
  std::string method = "alt";
  double c = 0.5;
  std::optional<double> eta;
  std::optional<long> steps;
  std::optional<std::size_t> dim;
  std::string init = "generic";
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
};

slime::bilinear::Init parse_init(const std::string& s) {
  using slime::bilinear::Init;
  if (s == "generic") return Init::generic();
  if (s == "antisym") return Init::antisymmetric();
  if (s == "aligned") return Init::aligned();
  throw UsageError("unknown --init '" + s + "' (expected generic, antisym or aligned)");
}

int cmd_bilinear(const BilinearArgs& a) {
  namespace bl = slime::bilinear;
  if (!(a.c > -1.0 && a.c < 1.0)) throw UsageError("--c must lie strictly inside (-1, 1)");
  const RunConfig cfg = load_or_default(a.config);
  bl::RunSpec spec;
  spec.c = a.c;
  spec.dim = a.dim.value_or(cfg.bilinear.dim);
  spec.steps = a.steps.value_or(cfg.bilinear.steps);
  spec.seed = a.seed.value_or(seed_fallback());
  spec.init = parse_init(a.init);
  const double eta = a.eta.value_or(cfg.bilinear.eta);
  if (a.method == "gd") {
    spec.method = bl::Method::gd(eta);
  } else if (a.method == "alt") {
    spec.method = bl::Method::alternating();
  } else {
    throw UsageError("unknown --method '" + a.method + "' (expected gd or alt)");
  }
  if (spec.steps < 0) throw UsageError("--steps must be non-negative");
  if (spec.dim < 2) throw UsageError("--dim must be at least 2");
  if (!(eta > 0.0)) throw UsageError("--eta must be positive");

  const bl::Trace trace = bl::run(spec);
  if (!a.out.empty()) {
    std::ostringstream os;
    bl::write_trace_csv(os, trace);
    write_text(a.out, os.str());
  }
  nlohmann::json j = bl::summary_json(spec, trace);
  j["seed"] = spec.seed;
  j["steps"] = spec.steps;
  emit(j);
  if (trace.diverged) {
    std::cerr << "bilinear run diverged\n";
    return kExitDiverged;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train / sweep
// ---------------------------------------------------------------------------

struct RunOutcome {
  nlohmann::json summary;
  bool diverged = false;
};

/// One training run; writes <out>/<mode>_seed<seed>.{csv,json} when out is set.
RunOutcome run_training(const RunConfig& cfg, slime::pipeline::Mode mode, std::uint64_t seed,
                        const std::string& out, bool save_params) {
  namespace pl = slime::pipeline;
  const pl::ToyTask task = pl::ToyTask::make(cfg.task, cfg.model.llm_dim, seed);
  const pl::RunReport rep = pl::train(pl::StageSchedule::make(mode, cfg.training, seed), task, cfg.model);
  RunOutcome o;
  o.diverged = rep.diverged;
  o.summary = pl::summary_json(rep);
  if (!out.empty()) {
    const std::string stem = pl::to_string(mode) + "_seed" + std::to_string(seed);
    std::ostringstream csv;
    pl::write_report_csv(csv, rep);
    write_text(fs::path(out) / (stem + ".csv"), csv.str());
    nlohmann::json full = o.summary;
    full["config"] = slime::to_json(cfg);
    write_text(fs::path(out) / (stem + ".json"), full.dump(2) + "\n");
    if (save_params) write_text(fs::path(out) / (stem + "_params.json"), slime::params_to_json(rep.params).dump() + "\n");
  }
  return o;
}

struct TrainArgs {
  std::string mode = "alternating";
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  bool save_params = false;
};

int cmd_train(const TrainArgs& a) {
  const RunConfig cfg = load_or_default(a.config);
  const auto mode = slime::pipeline::parse_mode(a.mode);
  const RunOutcome o = run_training(cfg, mode, a.seed.value_or(seed_fallback()), a.out, a.save_params);
  emit(o.summary);
  if (o.diverged) {
    std::cerr << "training diverged\n";
    return kExitDiverged;
  }
  return kExitOk;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(s);
  std::string item;
  auto num = [&](const std::string& t) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(t, &pos);
    } catch (const std::exception&) {
      pos = std::string::npos;
    }
    if (pos != t.size()) throw UsageError("bad seed '" + t + "' in --seeds");
    return static_cast<std::uint64_t>(v);
  };
  while (std::getline(ss, item, ',')) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      seeds.push_back(num(item));
      continue;
    }
    const auto lo = num(item.substr(0, dots)), hi = num(item.substr(dots + 2));
    if (hi < lo) throw UsageError("empty seed range '" + item + "'");
    for (auto k = lo; k <= hi; ++k) seeds.push_back(k);
  }
  if (seeds.empty()) throw UsageError("--seeds is empty");
  return seeds;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct SweepArgs {
  std::vector<std::string> modes{"alternating", "e2e"};
  std::string seeds = "1..5";
  std::string config;
  std::string out;
  unsigned threads = 0;
};

int cmd_sweep(const SweepArgs& a) {
  namespace pl = slime::pipeline;
  const RunConfig cfg = load_or_default(a.config);
  if (a.out.empty()) throw UsageError("sweep needs --out");
  std::vector<pl::Mode> modes;
  for (const auto& m : a.modes) modes.push_back(pl::parse_mode(m));
  const std::vector<std::uint64_t> seeds = parse_seed_list(a.seeds);

  struct Job {
    pl::Mode mode;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (pl::Mode m : modes)
    for (std::uint64_t s : seeds) jobs.push_back({m, s});
  std::vector<RunOutcome> results(jobs.size());
  std::vector<std::string> errors(jobs.size());

  unsigned workers = a.threads ? a.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(jobs.size()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
        try {
          results[i] = run_training(cfg, jobs[i].mode, jobs[i].seed, a.out, false);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (!e.empty()) throw slime::Error(e);

  nlohmann::json runs = nlohmann::json::array();
  nlohmann::json medians = nlohmann::json::object();
  bool any_diverged = false;
  for (pl::Mode m : modes) {
    std::vector<double> finals;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].mode != m) continue;
      runs.push_back(results[i].summary);
      any_diverged = any_diverged || results[i].diverged;
      if (!results[i].diverged) finals.push_back(results[i].summary.at("final_eval").get<double>());
    }
    medians[pl::to_string(m)] = finals.empty() ? nlohmann::json() : nlohmann::json(median(finals));
  }
  nlohmann::json summary{{"seeds", seeds}, {"runs", runs}, {"median_final_eval", medians}};
  if (medians.contains("alternating") && medians.contains("e2e") && !medians["alternating"].is_null() &&
      !medians["e2e"].is_null())
    summary["alternating_le_e2e"] = medians["alternating"].get<double>() <= medians["e2e"].get<double>();
  write_text(fs::path(a.out) / "comparison.json", summary.dump(2) + "\n");
  emit(summary);
  if (any_diverged) {
    std::cerr << "at least one sweep run diverged\n";
    return kExitDiverged;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// route
// ---------------------------------------------------------------------------

struct RouteArgs {
  double gamma = slime::kDefaultGamma;
  std::string tokens;
  std::string text;
  bool training = false;
  double noise = slime::kDefaultRouterNoise;
  std::optional<std::uint64_t> seed;
};

int cmd_route(const RouteArgs& a) {
  const slime::Matrix zv = slime::read_matrix_file(a.tokens);
  const slime::Matrix zx = slime::read_matrix_file(a.text);
  slime::Rng rng(a.seed.value_or(seed_fallback()));
  const auto sel = slime::route_tokens(zv, zx, {a.gamma, a.noise, a.training}, rng);
  emit(slime::to_json(sel));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slime_kit experiments: slicing plans, bilinear dynamics, toy training, routing"};
  app.require_subcommand(1);
  app.footer("Seeds default to $SLIME_KIT_SEED (or 0). Exit codes: 0 ok, 2 usage/config error, 3 divergence.\n"
             "Configuration defaults (override any subset with --config FILE):\n" +
             slime::to_json(RunConfig{}).dump(2));

  PlanArgs plan;
  auto* p = app.add_subcommand("plan", "Choose the tile grid for an image size");
  p->add_option("--width", plan.width, "Image width in pixels")->required();
  p->add_option("--height", plan.height, "Image height in pixels")->required();
  p->add_option("--base", plan.base, "Tile resolution")->capture_default_str();
  p->add_option("--max-grid", plan.max_grid, "Largest tiles per side")->capture_default_str();

  BilinearArgs bil;
  auto* b = app.add_subcommand("bilinear", "Run GD or alternating minimization on the symmetric rank-1 problem");
  b->add_option("--method", bil.method, "gd or alt")->capture_default_str();
  b->add_option("--c", bil.c, "Inner product <a, b>, in (-1, 1)")->capture_default_str();
  b->add_option("--eta", bil.eta, "GD step size [default: 0.01]");
  b->add_option("--steps", bil.steps, "Number of updates [default: 100000]");
  b->add_option("--dim", bil.dim, "Ambient dimension [default: 16]");
  b->add_option("--init", bil.init, "generic (0.9, 0.1), antisym (0.1, -0.1) or aligned (0.1, 0.1)")
      ->capture_default_str();
  b->add_option("--seed", bil.seed, "Instance seed");
  b->add_option("--out", bil.out, "Trace CSV path");
  b->add_option("--config", bil.config, "RunConfig JSON (bilinear section)");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the toy pipeline under one schedule");
  t->add_option("--mode", tr.mode, "alternating, e2e, only_global or only_local")->capture_default_str();
  t->add_option("--seed", tr.seed, "Task, initialization and noise seed");
  t->add_option("--config", tr.config, "RunConfig JSON");
  t->add_option("--out", tr.out, "Directory for <mode>_seed<k>.csv/.json");
  t->add_flag("--save-params", tr.save_params, "Also write trained parameters as JSON");

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Train several modes over several seeds in parallel");
  s->add_option("--modes", sw.modes, "Modes to run")->delimiter(',')->capture_default_str();
  s->add_option("--seeds", sw.seeds, "Comma list and/or ranges like 1..5")->capture_default_str();
  s->add_option("--config", sw.config, "RunConfig JSON");
  s->add_option("--out", sw.out, "Output directory (per-run files and comparison.json)")->required();
  s->add_option("--threads", sw.threads, "Worker threads (0 = hardware concurrency)")->capture_default_str();

  RouteArgs rt;
  auto* r = app.add_subcommand("route", "Select local tokens by text similarity");
  r->add_option("--gamma", rt.gamma, "Cumulative score threshold in (0, 1]")->capture_default_str();
  r->add_option("--tokens", rt.tokens, "Token matrix file ('rows cols' header)")->required();
  r->add_option("--text", rt.text, "Text embedding matrix file")->required();
  r->add_flag("--training", rt.training, "Perturb the ranking with Gaussian noise");
  r->add_option("--noise", rt.noise, "Ranking noise stddev in training mode")->capture_default_str();
  r->add_option("--seed", rt.seed, "Noise seed");

  std::string pc_config;
  auto* pc = app.add_subcommand("print-config", "Print the effective RunConfig as JSON");
  pc->add_option("--config", pc_config, "RunConfig JSON to merge over the defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*p) return cmd_plan(plan);
    if (*b) return cmd_bilinear(bil);
    if (*t) return cmd_train(tr);
    if (*s) return cmd_sweep(sw);
    if (*r) return cmd_route(rt);
    if (*pc) {
      emit(slime::to_json(load_or_default(pc_config)));
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
