// Copyright 2026 The thinkbudget Authors. All Rights Reserved.
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

// thinkbudget command line. Exit codes: 0 ok, 1 usage, 2 data, 3 backend.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "thinkbudget/error.h"
#include "thinkbudget/harness.h"
#include "thinkbudget/presets.h"
#include "thinkbudget/stats.h"

namespace tb = thinkbudget;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitBackend = 3;

json read_json_arg(const std::string& arg) {
  // Inline JSON or a path to a JSON file.
  const auto first = arg.find_first_not_of(" \t\n");
  if (first != std::string::npos && (arg[first] == '{' || arg[first] == '[')) {
    return json::parse(arg);
  }
  std::ifstream in(arg);
  if (!in) throw tb::DataError("cannot open " + arg);
  return json::parse(in);
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  if (!out) throw tb::DataError("cannot write " + path.string());
}

void emit_reports(const tb::RunSet& runs, const std::filesystem::path& out_dir) {
  const auto cells = tb::summarize_cells(runs);
  std::cout << tb::render_table(cells);
  if (out_dir.empty()) return;
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "summary.json", tb::summarize(runs).dump(2) + "\n");
  write_file(out_dir / "summary.csv", tb::render_csv(cells));
}

int finish_sweep(const tb::RunSet& runs, const std::filesystem::path& out_dir) {
  emit_reports(runs, out_dir);
  if (!runs.complete) std::cerr << "sweep stopped early; rerun to resume\n";
  int fatal = 0, retryable = 0;
  for (const auto& r : runs.records) {
    if (r.error) ++(r.error_retryable ? retryable : fatal);
  }
  if (fatal + retryable == 0) return 0;
  std::cerr << fatal << " cell(s) failed with fatal backend errors, " << retryable
            << " exhausted retries (rerun to retry those)\n";
  return kExitBackend;
}

std::vector<std::int64_t> parse_budgets(const std::string& s) {
  std::vector<std::int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoll(tok));
  }
  return out;
}

tb::SimModelConfig load_config(const std::string& config, const std::string& preset) {
  if (!preset.empty()) return tb::presets::by_name(preset);
  if (config.empty()) throw tb::InvalidArgument("give a config path or --preset");
  return read_json_arg(config).get<tb::SimModelConfig>();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Budget-aware reasoning policies, simulator and evaluation harness"};
  app.require_subcommand(1);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Run or resume a sweep from a spec file");
  std::string spec_path, out_dir;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> par_override;
  std::string ckpt_override;
  std::size_t stop_after = 0;
  sweep->add_option("spec", spec_path, "SweepSpec JSON")->required();
  sweep->add_option("--out-dir", out_dir, "Directory for summary.json/summary.csv");
  sweep->add_option("--seed", seed_override, "Override the spec seed");
  sweep->add_option("--parallelism", par_override, "Override the parallelism bound");
  sweep->add_option("--checkpoint", ckpt_override, "Override the checkpoint path");
  sweep->add_option("--stop-after", stop_after, "Stop after N new records (testing)");

  // run
  auto* run = app.add_subcommand("run", "Run one policy over a dataset");
  std::string run_dataset, run_policy, run_backend, run_preset, run_records, run_label = "policy";
  std::optional<std::int64_t> run_budget;
  std::uint64_t run_seed = 0;
  int run_par = 1;
  run->add_option("--dataset", run_dataset, "JSONL dataset")->required();
  run->add_option("--policy", run_policy, "Policy JSON (inline or path)")->required();
  run->add_option("--label", run_label, "Label for the records");
  run->add_option("--budget", run_budget, "Sweep budget override");
  auto* backend_opt = run->add_option("--backend", run_backend, "Backend JSON (inline or path)");
  run->add_option("--preset", run_preset, "Simulator preset name")->excludes(backend_opt);
  run->add_option("--seed", run_seed, "Global seed");
  run->add_option("--parallelism", run_par, "Parallel questions");
  run->add_option("--checkpoint", run_records, "Checkpoint JSONL to write");
  run->add_option("--out-dir", out_dir, "Directory for summary.json/summary.csv");

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "Predicted vs observed accuracy from a run set");
  std::string runset_path, think_label, nothink_label, diag_json;
  std::optional<std::size_t> pilot;
  int reps = 20;
  diag->add_option("runset", runset_path, "Checkpoint JSONL")->required();
  diag->add_option("--think", think_label, "Think-mode label")->required();
  diag->add_option("--nothink", nothink_label, "Nothink label for crossover and tax");
  diag->add_option("--pilot", pilot, "Pilot subset size for RMSE");
  diag->add_option("--reps", reps, "Pilot repetitions");
  diag->add_option("--json", diag_json, "Write the diagnostics JSON here");

  // compare
  auto* cmp = app.add_subcommand("compare", "Paired comparison of two labels");
  std::string cmp_a, cmp_b;
  int iters = tb::kDefaultBootstrapIterations;
  std::uint64_t cmp_seed = 0;
  cmp->add_option("runset", runset_path, "Checkpoint JSONL")->required();
  cmp->add_option("a", cmp_a, "label or label@budget")->required();
  cmp->add_option("b", cmp_b, "label or label@budget")->required();
  cmp->add_option("--iterations", iters, "Bootstrap iterations");
  cmp->add_option("--seed", cmp_seed, "Bootstrap seed");

  // simulate
  auto* sim = app.add_subcommand("simulate", "Monte Carlo identity table for a sim config");
  std::string sim_config, sim_preset, sim_budgets = "256,512,1024,2048", emit_path;
  std::int64_t sim_n = 10000;
  std::uint64_t sim_seed = 0;
  auto* cfg_opt = sim->add_option("config", sim_config, "SimModelConfig JSON (inline or path)");
  sim->add_option("--preset", sim_preset, "Preset name")->excludes(cfg_opt);
  sim->add_option("-n,--n", sim_n, "Questions per budget");
  sim->add_option("--budgets", sim_budgets, "Comma-separated budgets");
  sim->add_option("--seed", sim_seed, "Seed");
  sim->add_option("--emit-dataset", emit_path, "Write an n-item synthetic JSONL dataset");

  // stats
  auto* stats = app.add_subcommand("stats", "Wilson / McNemar / Hoeffding calculator");
  stats->require_subcommand(1);
  auto* wilson = stats->add_subcommand("wilson", "Wilson score interval");
  std::int64_t wk = 0, wn = 0;
  double conf = 0.95;
  wilson->add_option("k", wk)->required();
  wilson->add_option("n", wn)->required();
  wilson->add_option("--confidence", conf);
  auto* mcn = stats->add_subcommand("mcnemar", "Exact two-sided McNemar p");
  std::int64_t ma = 0, mb = 0;
  mcn->add_option("wins", ma)->required();
  mcn->add_option("losses", mb)->required();
  auto* hoef = stats->add_subcommand("hoeffding", "Hoeffding lower bound");
  double hp = 0, hd = 0.05;
  std::int64_t hn = 0;
  hoef->add_option("p_hat", hp)->required();
  hoef->add_option("n", hn)->required();
  hoef->add_option("delta", hd)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sweep) {
      tb::SweepSpec spec = tb::load_sweep_spec(spec_path);
      if (seed_override) spec.seed = *seed_override;
      if (par_override) spec.parallelism = *par_override;
      if (!ckpt_override.empty()) spec.checkpoint = ckpt_override;
      spec.validate();
      tb::SweepOptions opts;
      if (stop_after > 0) opts.stop_after = stop_after;
      const tb::RunSet runs = tb::run_sweep(spec, opts);
      return finish_sweep(runs, out_dir);
    }
    if (*run) {
      tb::SweepSpec spec;
      spec.dataset = run_dataset;
      tb::LabeledPolicy lp;
      lp.label = run_label;
      lp.policy = read_json_arg(run_policy).get<tb::PolicyConfig>();
      if (run_budget) lp.budgets = {*run_budget};
      spec.policies.push_back(lp);
      if (!run_preset.empty()) {
        spec.backend.sim = tb::SimPopulation::single(tb::presets::by_name(run_preset));
      } else if (!run_backend.empty()) {
        json wrapper{{"policies", json::array()}, {"backend", read_json_arg(run_backend)}};
        spec.backend = wrapper.get<tb::SweepSpec>().backend;
      }
      spec.seed = run_seed;
      spec.parallelism = run_par;
      spec.checkpoint = run_records;
      const tb::RunSet runs = tb::run_sweep(spec);
      return finish_sweep(runs, out_dir);
    }
    if (*diag) {
      const tb::RunSet runs = tb::load_runset(runset_path);
      tb::DiagnoseOptions opts;
      opts.think_label = think_label;
      if (!nothink_label.empty()) opts.nothink_label = nothink_label;
      opts.pilot_size = pilot;
      opts.pilot_repetitions = reps;
      const tb::Diagnostics d = tb::diagnose(runs, opts);
      std::cout << tb::render_diagnostics(d);
      if (!diag_json.empty()) write_file(diag_json, json(d).dump(2) + "\n");
      return 0;
    }
    if (*cmp) {
      const tb::RunSet runs = tb::load_runset(runset_path);
      const tb::Comparison c = tb::paired_compare(runs, cmp_a, cmp_b, iters, cmp_seed);
      std::cout << json(c).dump(2) << '\n';
      return 0;
    }
    if (*sim) {
      const tb::SimModelConfig config = load_config(sim_config, sim_preset);
      config.validate();
      if (!emit_path.empty()) {
        std::ofstream out(emit_path);
        tb::write_dataset(out, tb::synthetic_dataset(config, sim_n, sim_seed));
        if (!out) throw tb::DataError("cannot write " + emit_path);
        return 0;
      }
      const auto rows = tb::simulate_identity(config, sim_n, parse_budgets(sim_budgets), sim_seed);
      std::printf("%7s %7s %7s %7s %8s %8s %7s %6s\n", "budget", "F_L", "a_c", "a_t", "pred%",
                  "obs%", "se_pp", "|z|");
      for (const auto& r : rows) {
        const double z = std::abs(r.observed - r.predicted) / r.se;
        std::printf("%7lld %7.4f %7.4f %7.4f %8.2f %8.2f %7.2f %6.2f\n",
                    static_cast<long long>(r.budget), r.f_l, r.alpha_c, r.alpha_t,
                    100 * r.predicted, 100 * r.observed, 100 * r.se, z);
      }
      return 0;
    }
    if (*stats) {
      if (*wilson) {
        const tb::Interval ci = tb::wilson_ci(wk, wn, conf);
        std::printf("p_hat=%.6f lo=%.6f hi=%.6f\n", wn > 0 ? double(wk) / wn : 0.0, ci.lo, ci.hi);
      } else if (*mcn) {
        std::printf("p=%.6e\n", tb::mcnemar_exact(ma, mb));
      } else if (*hoef) {
        std::printf("lower=%.6f\n", tb::hoeffding_lower(hp, hn, hd));
      }
      return 0;
    }
  } catch (const tb::BackendError& e) {
    std::cerr << "backend error: " << e.what() << '\n';
    return kExitBackend;
  } catch (const tb::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    // Bad calculator inputs are usage errors; bad config values are data.
    return *stats ? kExitUsage : kExitData;
  } catch (const tb::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
