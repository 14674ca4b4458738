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

#pragma once

// Dataset loading, resumable sweeps, scoring and reports.
//
// A sweep is a grid of (policy label, budget, item) cells. Each finished
// cell is appended as one JSON line to the checkpoint; a sidecar manifest
// pins the hash of the sweep definition so a checkpoint can't be resumed
// under a different spec.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "thinkbudget/backend.h"
#include "thinkbudget/diagnostics.h"
#include "thinkbudget/orchestrator.h"
#include "thinkbudget/remote_backend.h"
#include "thinkbudget/sim_backend.h"
#include "thinkbudget/stats.h"

namespace thinkbudget {

struct DatasetItem {
  std::string id;
  std::string question;
  std::string gold;  // normalized
  AnswerConvention convention = AnswerConvention::kNumeric;

  bool gold_is_numeric() const { return parse_numeric(gold).has_value(); }
};

// Half-open [begin, end) over dataset line order.
struct IndexRange {
  std::size_t begin = 0;
  std::optional<std::size_t> end;
};

// Pulls the gold out of a raw answer field: text after the last "####",
// else the last \boxed{...}, else the whole string. Always normalized.
std::string gold_from_answer(std::string_view answer);

// JSONL, one {id?, question, answer, convention?} object per line. Blank
// lines are skipped but still count toward line numbers and default ids.
// Throws DataError on malformed lines (with the line number) and duplicate
// ids (naming the id).
std::vector<DatasetItem> parse_dataset(std::istream& in,
                                       std::optional<IndexRange> range = std::nullopt);
std::vector<DatasetItem> load_dataset(const std::filesystem::path& path,
                                      std::optional<IndexRange> range = std::nullopt);
void write_dataset(std::ostream& out, const std::vector<DatasetItem>& items);

struct LabeledPolicy {
  std::string label;
  PolicyConfig policy;
  // Overrides the sweep grid for this label. When both are empty the
  // policy runs once at its own budget.
  std::vector<std::int64_t> budgets;
};

struct BackendSpec {
  enum class Type { kSim, kRemote };
  Type type = Type::kSim;
  SimPopulation sim;
  EndpointConfig remote;
  // Sim only: use dataset golds as the answer key instead of synthetic ones.
  bool answer_key_from_dataset = true;
};

struct SweepSpec {
  std::filesystem::path dataset;
  std::optional<IndexRange> range;
  std::vector<LabeledPolicy> policies;
  std::vector<std::int64_t> budgets;
  BackendSpec backend;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;  // empty: in-memory only
  int parallelism = 1;
  RoutingOptions routing;

  // Labels unique and non-empty, grids strictly increasing, policies valid.
  void validate() const;
  // Budgets a label runs at.
  std::vector<std::int64_t> budgets_for(const LabeledPolicy& p) const;
  // Stable hash over everything that changes results. Checkpoint path and
  // parallelism are excluded.
  std::string hash() const;
};

SweepSpec load_sweep_spec(const std::filesystem::path& path);
void to_json(nlohmann::json& j, const SweepSpec& s);
void from_json(const nlohmann::json& j, SweepSpec& s);

struct RunRecord {
  std::string item_id;
  std::string label;
  std::int64_t budget = 0;
  PolicyOutcome outcome;
  std::string gold;
  bool correct = false;
  double wall_ms = 0.0;
  std::optional<std::string> error;  // backend failure message
  bool error_retryable = false;
};

void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

// Correctness from the stored final answer span against the gold.
bool score(const ExtractedAnswer& final_answer, const std::string& gold);

struct RunSet {
  std::vector<RunRecord> records;  // sorted by (label, budget, item_id)
  bool complete = true;
};

// Per-question seed from the global seed and the item id. The policy label
// is left out on purpose so every policy sees the same draw per question.
std::uint64_t question_seed(std::uint64_t global_seed, std::string_view item_id);

struct SweepOptions {
  // Emulates a kill: after this many records are appended in this process,
  // no further records are written and the sweep returns incomplete.
  std::optional<std::size_t> stop_after;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec,
                                      const std::vector<DatasetItem>& items);

// Runs (or resumes) every cell. Throws DataError when the checkpoint's
// manifest hash does not match the spec or a stored record fails rescoring.
RunSet run_sweep(const SweepSpec& spec, const std::vector<DatasetItem>& items, Backend& backend,
                 const SweepOptions& options = {});
RunSet run_sweep(const SweepSpec& spec, const SweepOptions& options = {});

// Reads a checkpoint JSONL. A torn final line is ignored; any other
// malformed line or a rescoring mismatch throws DataError. Later records
// for the same cell replace earlier ones.
RunSet load_runset(const std::filesystem::path& checkpoint);

struct CellSummary {
  std::string label;
  std::string policy_kind;
  std::int64_t budget = 0;
  std::int64_t n = 0;
  std::int64_t errors = 0;
  std::int64_t correct = 0;
  double accuracy = 0.0;
  Interval ci;
  double avg_tokens_generated = 0.0;
  double avg_tokens_effective = 0.0;
  double natural_stop_rate = 0.0;
  double strict_natural_rate = 0.0;
  double utilization = 0.0;
  double final_marker_rate = 0.0;
  std::vector<std::pair<std::string, std::int64_t>> resolution_mix;
  // Single think-mode cells only.
  std::optional<DecompositionParams> measured;
  std::int64_t natural_count = 0;
};

std::vector<CellSummary> summarize_cells(const RunSet& runs);
// Deterministic JSON document (no wall times), so interrupted and clean
// runs of the same spec dump identically.
nlohmann::json summarize(const RunSet& runs);
std::string render_table(const std::vector<CellSummary>& cells);
std::string render_csv(const std::vector<CellSummary>& cells);

struct Comparison {
  std::string label_a;
  std::string label_b;
  std::int64_t n = 0;
  std::int64_t wins = 0;    // a right, b wrong
  std::int64_t losses = 0;  // a wrong, b right
  std::int64_t ties = 0;
  std::optional<double> p_value;
  std::string note;  // "no discordant pairs" when p is undefined
  double accuracy_a = 0.0;
  double accuracy_b = 0.0;
  double delta_pp = 0.0;
  Interval delta_ci_pp;
};

// Selectors are "label" or "label@budget"; a bare label must have exactly
// one budget in the run set. Throws DataError when the two sides cover
// different ids.
Comparison paired_compare(const RunSet& runs, const std::string& a, const std::string& b,
                          int bootstrap_iterations = kDefaultBootstrapIterations,
                          std::uint64_t seed = 0);
void to_json(nlohmann::json& j, const Comparison& c);

struct DiagnoseOptions {
  std::string think_label;
  std::optional<std::string> nothink_label;
  std::optional<std::size_t> pilot_size;
  int pilot_repetitions = 20;
  std::uint64_t pilot_seed = 0;
};

struct DiagnosticRow {
  std::int64_t budget = 0;
  std::int64_t n = 0;
  double f_l = 0.0;
  std::optional<double> alpha_c;
  std::optional<double> alpha_t;
  std::optional<double> predicted;
  double observed = 0.0;
  std::optional<double> delta_pp;
  double mc_se_pp = 0.0;
  std::optional<double> acc_nt;
  std::optional<TaxBreakdown> breakdown;
  std::vector<std::string> flags;
};

struct PilotRmse {
  std::size_t pilot_size = 0;
  int repetitions = 0;
  double mean_pp = 0.0;
  double std_pp = 0.0;
};

struct Diagnostics {
  std::vector<DiagnosticRow> rows;
  std::optional<CrossoverReport> crossover;
  std::optional<PilotRmse> pilot;
  std::vector<std::string> flags;
};

Diagnostics diagnose(const RunSet& runs, const DiagnoseOptions& options);
void to_json(nlohmann::json& j, const Diagnostics& d);
std::string render_diagnostics(const Diagnostics& d);

// Monte Carlo identity check of one config: think-mode runs at each budget
// over n synthetic questions, with measured components and the prediction.
struct IdentityRow {
  std::int64_t budget = 0;
  double f_l = 0.0;
  double alpha_c = 0.0;
  double alpha_t = 0.0;
  double predicted = 0.0;
  double observed = 0.0;
  double se = 0.0;
};
std::vector<IdentityRow> simulate_identity(const SimModelConfig& config, std::int64_t n,
                                           const std::vector<std::int64_t>& budgets,
                                           std::uint64_t seed);

// Synthetic dataset whose golds come from the simulator's answer space.
std::vector<DatasetItem> synthetic_dataset(const SimModelConfig& config, std::int64_t n,
                                           std::uint64_t key_seed = 0);

}  // namespace thinkbudget
