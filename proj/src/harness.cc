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

#include "thinkbudget/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "thinkbudget/chainstats.h"
#include "thinkbudget/error.h"
#include "thinkbudget/presets.h"
#include "thinkbudget/prf.h"

namespace thinkbudget {
namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::string id_from_json(const json& v, std::size_t line_no) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw DataError("dataset line " + std::to_string(line_no) + ": id must be a string or integer");
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return std::filesystem::path(checkpoint.string() + ".manifest.json");
}

using CellKey = std::tuple<std::string, std::int64_t, std::string>;

CellKey key_of(const RunRecord& r) { return {r.label, r.budget, r.item_id}; }

// Records in canonical order, one per cell, later entries winning.
std::vector<RunRecord> canonical(std::vector<RunRecord> records) {
  std::map<CellKey, RunRecord> by_key;
  for (auto& r : records) by_key[key_of(r)] = std::move(r);
  std::vector<RunRecord> out;
  out.reserve(by_key.size());
  for (auto& [k, r] : by_key) out.push_back(std::move(r));
  return out;
}

void check_scoring(const RunRecord& r, std::size_t line_no) {
  if (r.error) return;
  const auto& fa = r.outcome.final_answer;
  const std::optional<std::string> renorm =
      fa.found() ? std::optional<std::string>(normalize_answer(fa.raw_span)) : std::nullopt;
  if (fa.value != renorm || score(fa, r.gold) != r.correct) {
    throw DataError("checkpoint line " + std::to_string(line_no) + ": stored correctness for " +
                    r.label + "@" + std::to_string(r.budget) + " item " + r.item_id +
                    " does not match rescoring");
  }
}

struct CheckpointContents {
  std::vector<RunRecord> records;
  std::uintmax_t good_bytes = 0;
  bool torn = false;
};

CheckpointContents read_checkpoint(const std::filesystem::path& path) {
  CheckpointContents out;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < data.size()) {
    const std::size_t nl = data.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) {
      // Partial write from an interrupted run.
      out.torn = true;
      break;
    }
    const std::string_view line = trim(std::string_view(data).substr(pos, nl - pos));
    pos = nl + 1;
    out.good_bytes = pos;
    if (line.empty()) continue;
    RunRecord r;
    try {
      r = json::parse(line).get<RunRecord>();
    } catch (const json::exception& e) {
      throw DataError("checkpoint line " + std::to_string(line_no) + ": " + e.what());
    }
    check_scoring(r, line_no);
    out.records.push_back(std::move(r));
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / v.size();
}

struct Selector {
  std::string label;
  std::optional<std::int64_t> budget;
};

Selector parse_selector(const std::string& s) {
  const auto at = s.rfind('@');
  if (at != std::string::npos && at + 1 < s.size()) {
    const std::string tail = s.substr(at + 1);
    if (std::all_of(tail.begin(), tail.end(), [](char c) { return std::isdigit(c); })) {
      return {s.substr(0, at), std::stoll(tail)};
    }
  }
  return {s, std::nullopt};
}

std::vector<const RunRecord*> select(const RunSet& runs, const std::string& spec) {
  const Selector sel = parse_selector(spec);
  std::set<std::int64_t> budgets;
  for (const auto& r : runs.records) {
    if (r.label == sel.label) budgets.insert(r.budget);
  }
  if (budgets.empty()) throw DataError("no records for label " + sel.label);
  std::int64_t budget = 0;
  if (sel.budget) {
    if (!budgets.count(*sel.budget)) {
      throw DataError("no records for " + sel.label + "@" + std::to_string(*sel.budget));
    }
    budget = *sel.budget;
  } else if (budgets.size() == 1) {
    budget = *budgets.begin();
  } else {
    throw DataError("label " + sel.label + " has several budgets; use " + sel.label + "@<budget>");
  }
  std::vector<const RunRecord*> out;
  for (const auto& r : runs.records) {
    if (r.label == sel.label && r.budget == budget) out.push_back(&r);
  }
  return out;
}

// Grouped (label, budget) cells in canonical order.
std::vector<std::vector<const RunRecord*>> group_cells(const RunSet& runs) {
  std::map<std::pair<std::string, std::int64_t>, std::vector<const RunRecord*>> cells;
  for (const auto& r : runs.records) cells[{r.label, r.budget}].push_back(&r);
  std::vector<std::vector<const RunRecord*>> out;
  for (auto& [k, v] : cells) out.push_back(std::move(v));
  return out;
}

struct ThinkMeasure {
  std::int64_t n = 0;
  std::int64_t natural = 0;
  std::int64_t natural_correct = 0;
  std::int64_t truncated_correct = 0;
  std::int64_t correct = 0;
  std::vector<ChainObservation> observations;
};

ThinkMeasure measure_think(const std::vector<const RunRecord*>& records) {
  ThinkMeasure m;
  for (const RunRecord* r : records) {
    if (r->error || r->outcome.stages.empty()) continue;
    const StageRecord& s = r->outcome.stages.front();
    ++m.n;
    m.correct += r->correct;
    const bool natural = s.stop.natural();
    m.observations.push_back({std::max<std::int64_t>(1, s.tokens_generated), !natural});
    if (natural) {
      ++m.natural;
      m.natural_correct += r->correct;
    } else {
      m.truncated_correct += r->correct;
    }
  }
  return m;
}

// F_L(b) from KM over the cell's stop data; nullopt when every chain is
// censored.
std::optional<double> km_fl(const ThinkMeasure& m, std::int64_t budget) {
  try {
    return cdf_at(km_estimate(m.observations), budget);
  } catch (const EstimationError&) {
    return std::nullopt;
  }
}

// The mixture identity, evaluated even when the measured rates break the
// alpha_t <= alpha_c ordering predict_coupled_accuracy enforces.
double mixture(double f, double ac, double at) { return f * ac + (1.0 - f) * at; }

}  // namespace

// ---- dataset -------------------------------------------------------------

std::string gold_from_answer(std::string_view answer) {
  const auto marker = answer.rfind("####");
  if (marker != std::string_view::npos) {
    std::string_view rest = answer.substr(marker + 4);
    const auto nl = rest.find('\n');
    if (nl != std::string_view::npos) rest = rest.substr(0, nl);
    return normalize_answer(trim(rest));
  }
  if (answer.find("\\boxed") != std::string_view::npos) {
    const ExtractedAnswer a = extract_answer(answer, AnswerConvention::kLatexMath, false);
    if (a.method == ExtractionMethod::kBoxed && a.value) return *a.value;
  }
  return normalize_answer(trim(answer));
}

std::vector<DatasetItem> parse_dataset(std::istream& in, std::optional<IndexRange> range) {
  std::vector<DatasetItem> items;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("question") || !j.at("question").is_string() ||
        !j.contains("answer")) {
      throw DataError("dataset line " + std::to_string(line_no) +
                      ": expected an object with question and answer");
    }
    DatasetItem item;
    item.id = j.contains("id") ? id_from_json(j.at("id"), line_no) : std::to_string(line_no - 1);
    if (!seen.insert(item.id).second) throw DataError("duplicate dataset id: " + item.id);
    item.question = j.at("question").get<std::string>();
    const json& ans = j.at("answer");
    std::string raw;
    if (ans.is_string()) {
      raw = ans.get<std::string>();
    } else if (ans.is_number()) {
      raw = ans.dump();
    } else {
      throw DataError("dataset line " + std::to_string(line_no) + ": answer must be a string");
    }
    item.gold = gold_from_answer(raw);
    if (j.contains("convention")) {
      try {
        item.convention = answer_convention_from_string(j.at("convention").get<std::string>());
      } catch (const std::exception& e) {
        throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
      }
    } else {
      item.convention =
          item.gold_is_numeric() ? AnswerConvention::kNumeric : AnswerConvention::kLatexMath;
    }
    items.push_back(std::move(item));
  }
  if (range) {
    const std::size_t begin = std::min(range->begin, items.size());
    const std::size_t end = std::clamp(range->end.value_or(items.size()), begin, items.size());
    items = std::vector<DatasetItem>(items.begin() + begin, items.begin() + end);
  }
  return items;
}

std::vector<DatasetItem> load_dataset(const std::filesystem::path& path,
                                      std::optional<IndexRange> range) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset: " + path.string());
  return parse_dataset(in, range);
}

void write_dataset(std::ostream& out, const std::vector<DatasetItem>& items) {
  for (const auto& item : items) {
    out << json{{"id", item.id},
                {"question", item.question},
                {"answer", item.gold},
                {"convention", to_string(item.convention)}}
               .dump()
        << '\n';
  }
}

// ---- sweep spec ----------------------------------------------------------

void SweepSpec::validate() const {
  std::unordered_set<std::string> labels;
  for (const auto& p : policies) {
    if (p.label.empty()) throw InvalidArgument("policy label must not be empty");
    if (p.label.find('@') != std::string::npos) {
      throw InvalidArgument("policy label must not contain '@': " + p.label);
    }
    if (!labels.insert(p.label).second) throw InvalidArgument("duplicate policy label: " + p.label);
    thinkbudget::validate(p.policy);
    for (std::size_t i = 0; i < p.budgets.size(); ++i) {
      if (p.budgets[i] < 1) throw InvalidArgument("budgets must be >= 1");
      if (i > 0 && p.budgets[i] <= p.budgets[i - 1]) {
        throw InvalidArgument("budget grid for " + p.label + " must be strictly increasing");
      }
    }
  }
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    if (budgets[i] < 1) throw InvalidArgument("budgets must be >= 1");
    if (i > 0 && budgets[i] <= budgets[i - 1]) {
      throw InvalidArgument("budget grid must be strictly increasing");
    }
  }
  if (parallelism < 1) throw InvalidArgument("parallelism must be >= 1");
  if (backend.type == BackendSpec::Type::kSim) {
    backend.sim.validate();
  } else {
    backend.remote.validate();
  }
}

std::vector<std::int64_t> SweepSpec::budgets_for(const LabeledPolicy& p) const {
  if (!p.budgets.empty()) return p.budgets;
  if (!budgets.empty()) return budgets;
  return {sweep_budget(p.policy)};
}

std::string SweepSpec::hash() const {
  json j = *this;
  j.erase("checkpoint");
  j.erase("parallelism");
  return hex64(prf::hash_string(j.dump()));
}

void to_json(json& j, const SweepSpec& s) {
  json policies = json::array();
  for (const auto& p : s.policies) {
    json e{{"label", p.label}, {"policy", p.policy}};
    if (!p.budgets.empty()) e["budgets"] = p.budgets;
    policies.push_back(std::move(e));
  }
  json backend;
  if (s.backend.type == BackendSpec::Type::kSim) {
    backend = {{"type", "sim"},
               {"config", s.backend.sim},
               {"answer_key", s.backend.answer_key_from_dataset ? "dataset" : "synthetic"}};
  } else {
    backend = {{"type", "remote"}, {"config", s.backend.remote}};
  }
  j = json{{"dataset", s.dataset.generic_string()},
           {"policies", policies},
           {"budgets", s.budgets},
           {"backend", backend},
           {"seed", s.seed},
           {"checkpoint", s.checkpoint.generic_string()},
           {"parallelism", s.parallelism},
           {"routing",
            {{"strict_stage0", s.routing.strict_stage0},
             {"strict_threshold", s.routing.strict_threshold},
             {"strengthened_answer_budget", s.routing.strengthened_answer_budget},
             {"system_prompt", s.routing.system_prompt}}}};
  if (s.range) {
    j["range"] = {{"begin", s.range->begin}};
    if (s.range->end) j["range"]["end"] = *s.range->end;
  }
}

void from_json(const json& j, SweepSpec& s) {
  s = SweepSpec{};
  s.dataset = j.value("dataset", std::string());
  if (j.contains("range")) {
    IndexRange r;
    r.begin = j.at("range").value("begin", std::size_t{0});
    if (j.at("range").contains("end")) r.end = j.at("range").at("end").get<std::size_t>();
    s.range = r;
  }
  for (const auto& e : j.at("policies")) {
    LabeledPolicy p;
    p.label = e.at("label").get<std::string>();
    p.policy = e.at("policy").get<PolicyConfig>();
    if (e.contains("budgets")) p.budgets = e.at("budgets").get<std::vector<std::int64_t>>();
    s.policies.push_back(std::move(p));
  }
  if (j.contains("budgets")) s.budgets = j.at("budgets").get<std::vector<std::int64_t>>();
  const json backend = j.value("backend", json::object());
  const std::string type = backend.value("type", std::string("sim"));
  if (type == "sim") {
    s.backend.type = BackendSpec::Type::kSim;
    if (backend.contains("preset")) {
      s.backend.sim = SimPopulation::single(presets::by_name(backend.at("preset").get<std::string>()),
                                            backend.value("population_seed", std::uint64_t{0}));
    } else if (backend.contains("config")) {
      s.backend.sim = backend.at("config").get<SimPopulation>();
    } else {
      s.backend.sim = SimPopulation::single(SimModelConfig{});
    }
    s.backend.answer_key_from_dataset = backend.value("answer_key", std::string("dataset")) != "synthetic";
  } else if (type == "remote") {
    s.backend.type = BackendSpec::Type::kRemote;
    s.backend.remote = backend.at("config").get<EndpointConfig>();
  } else {
    throw DataError("unknown backend type: " + type);
  }
  s.seed = j.value("seed", std::uint64_t{0});
  s.checkpoint = j.value("checkpoint", std::string());
  s.parallelism = j.value("parallelism", 1);
  if (j.contains("routing")) {
    const json& r = j.at("routing");
    s.routing.strict_stage0 = r.value("strict_stage0", s.routing.strict_stage0);
    s.routing.strict_threshold = r.value("strict_threshold", s.routing.strict_threshold);
    s.routing.strengthened_answer_budget =
        r.value("strengthened_answer_budget", s.routing.strengthened_answer_budget);
    s.routing.system_prompt = r.value("system_prompt", s.routing.system_prompt);
  }
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open sweep spec: " + path.string());
  SweepSpec spec;
  try {
    spec = json::parse(in).get<SweepSpec>();
  } catch (const json::exception& e) {
    throw DataError("sweep spec " + path.string() + ": " + e.what());
  }
  // Relative paths resolve against the spec's directory.
  const auto base = path.parent_path();
  if (!spec.dataset.empty() && spec.dataset.is_relative()) spec.dataset = base / spec.dataset;
  if (!spec.checkpoint.empty() && spec.checkpoint.is_relative()) {
    spec.checkpoint = base / spec.checkpoint;
  }
  spec.validate();
  return spec;
}

// ---- records -------------------------------------------------------------

bool score(const ExtractedAnswer& final_answer, const std::string& gold) {
  if (!final_answer.found()) return false;
  return answers_equivalent(normalize_answer(final_answer.raw_span), gold);
}

void to_json(json& j, const RunRecord& r) {
  j = json{{"item_id", r.item_id}, {"label", r.label},     {"budget", r.budget},
           {"outcome", r.outcome}, {"gold", r.gold},       {"correct", r.correct},
           {"wall_ms", r.wall_ms}, {"error_retryable", r.error_retryable}};
  j["error"] = r.error ? json(*r.error) : json(nullptr);
}

void from_json(const json& j, RunRecord& r) {
  r.item_id = j.at("item_id").get<std::string>();
  r.label = j.at("label").get<std::string>();
  r.budget = j.at("budget").get<std::int64_t>();
  r.outcome = j.at("outcome").get<PolicyOutcome>();
  r.gold = j.at("gold").get<std::string>();
  r.correct = j.at("correct").get<bool>();
  r.wall_ms = j.value("wall_ms", 0.0);
  r.error_retryable = j.value("error_retryable", false);
  r.error.reset();
  if (j.contains("error") && !j.at("error").is_null()) r.error = j.at("error").get<std::string>();
}

std::uint64_t question_seed(std::uint64_t global_seed, std::string_view item_id) {
  return prf::combine(global_seed, prf::hash_string(item_id));
}

// ---- sweep ---------------------------------------------------------------

std::unique_ptr<Backend> make_backend(const BackendSpec& spec,
                                      const std::vector<DatasetItem>& items) {
  if (spec.type == BackendSpec::Type::kRemote) return std::make_unique<RemoteBackend>(spec.remote);
  std::unordered_map<std::string, std::string> key;
  if (spec.answer_key_from_dataset) {
    for (const auto& item : items) key.emplace(item.id, item.gold);
  }
  return std::make_unique<SimBackend>(spec.sim, std::move(key));
}

RunSet run_sweep(const SweepSpec& spec, const std::vector<DatasetItem>& items, Backend& backend,
                 const SweepOptions& options) {
  spec.validate();

  struct Cell {
    std::size_t policy;
    std::int64_t budget;
    std::size_t item;
  };
  std::vector<Cell> cells;
  for (std::size_t p = 0; p < spec.policies.size(); ++p) {
    for (std::int64_t b : spec.budgets_for(spec.policies[p])) {
      for (std::size_t i = 0; i < items.size(); ++i) cells.push_back({p, b, i});
    }
  }

  std::vector<RunRecord> records;
  std::ofstream sink;
  const bool persist = !spec.checkpoint.empty();
  if (persist) {
    const auto manifest = manifest_path(spec.checkpoint);
    const std::string hash = spec.hash();
    if (std::filesystem::exists(manifest)) {
      std::ifstream min(manifest);
      json m;
      try {
        m = json::parse(min);
      } catch (const json::exception& e) {
        throw DataError("bad checkpoint manifest " + manifest.string() + ": " + e.what());
      }
      if (m.value("spec_hash", std::string()) != hash) {
        throw DataError("checkpoint " + spec.checkpoint.string() +
                        " was written by a different sweep spec");
      }
    } else if (std::filesystem::exists(spec.checkpoint) &&
               std::filesystem::file_size(spec.checkpoint) > 0) {
      throw DataError("checkpoint " + spec.checkpoint.string() + " has no manifest");
    } else {
      if (spec.checkpoint.has_parent_path()) {
        std::filesystem::create_directories(spec.checkpoint.parent_path());
      }
      std::ofstream mout(manifest);
      mout << json{{"spec_hash", hash}, {"format", "runrecord-jsonl-v1"}}.dump(2) << '\n';
      if (!mout) throw DataError("cannot write manifest " + manifest.string());
    }
    if (std::filesystem::exists(spec.checkpoint)) {
      CheckpointContents existing = read_checkpoint(spec.checkpoint);
      if (existing.torn) std::filesystem::resize_file(spec.checkpoint, existing.good_bytes);
      records = std::move(existing.records);
    }
    sink.open(spec.checkpoint, std::ios::app | std::ios::binary);
    if (!sink) throw DataError("cannot open checkpoint for append: " + spec.checkpoint.string());
  }

  std::set<CellKey> done;
  for (const auto& r : records) {
    if (r.error && r.error_retryable) {
      done.erase(key_of(r));
    } else {
      done.insert(key_of(r));
    }
  }
  std::vector<Cell> todo;
  for (const auto& c : cells) {
    if (!done.count({spec.policies[c.policy].label, c.budget, items[c.item].id})) todo.push_back(c);
  }

  std::mutex mu;
  std::size_t appended = 0;
  std::atomic<bool> stopped{false};
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;

  // The only writer to the checkpoint and to `records`.
  auto append = [&](RunRecord r) {
    std::lock_guard<std::mutex> lock(mu);
    if (options.stop_after && appended >= *options.stop_after) {
      stopped = true;
      return;
    }
    if (persist) {
      sink << json(r).dump() << '\n';
      sink.flush();
      if (!sink) throw DataError("checkpoint write failed: " + spec.checkpoint.string());
    }
    records.push_back(std::move(r));
    ++appended;
    if (options.stop_after && appended >= *options.stop_after) stopped = true;
  };

  auto worker = [&] {
    Orchestrator orch(backend, spec.routing);
    while (!stopped) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= todo.size()) break;
      const Cell& c = todo[idx];
      const DatasetItem& item = items[c.item];
      const LabeledPolicy& lp = spec.policies[c.policy];
      RunRecord r;
      r.item_id = item.id;
      r.label = lp.label;
      r.budget = c.budget;
      r.gold = item.gold;
      const Question q{item.id, item.question, question_seed(spec.seed, item.id),
                       item.convention, item.gold_is_numeric()};
      const auto t0 = std::chrono::steady_clock::now();
      try {
        r.outcome = orch.run(q, with_sweep_budget(lp.policy, c.budget));
        r.correct = score(r.outcome.final_answer, item.gold);
      } catch (const BackendError& e) {
        r.error = e.what();
        r.error_retryable = e.retryable();
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        stopped = true;
        break;
      }
      r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                      .count();
      try {
        append(std::move(r));
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        stopped = true;
      }
    }
  };

  const int threads = std::max(1, std::min(spec.parallelism, backend.max_in_flight()));
  if (threads == 1 || todo.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  RunSet out;
  out.records = canonical(std::move(records));
  out.complete = !stopped;
  return out;
}

RunSet run_sweep(const SweepSpec& spec, const SweepOptions& options) {
  const auto items = load_dataset(spec.dataset, spec.range);
  auto backend = make_backend(spec.backend, items);
  return run_sweep(spec, items, *backend, options);
}

RunSet load_runset(const std::filesystem::path& checkpoint) {
  RunSet out;
  out.records = canonical(read_checkpoint(checkpoint).records);
  return out;
}

// ---- summaries -----------------------------------------------------------

std::vector<CellSummary> summarize_cells(const RunSet& runs) {
  std::vector<CellSummary> out;
  for (const auto& cell : group_cells(runs)) {
    CellSummary s;
    s.label = cell.front()->label;
    s.budget = cell.front()->budget;
    s.n = static_cast<std::int64_t>(cell.size());
    std::map<std::string, std::int64_t> mix;
    std::vector<double> gen, eff, util;
    std::int64_t valid = 0, natural = 0, strict = 0, marker = 0;
    bool single_think = true;
    for (const RunRecord* r : cell) {
      if (r->error) {
        ++s.errors;
        continue;
      }
      ++valid;
      s.correct += r->correct;
      gen.push_back(static_cast<double>(r->outcome.tokens_generated_total));
      eff.push_back(static_cast<double>(r->outcome.tokens_effective_total));
      util.push_back(static_cast<double>(r->outcome.tokens_generated_total) / r->budget);
      ++mix[to_string(r->outcome.resolution)];
      if (r->outcome.stages.empty()) {
        single_think = false;
        continue;
      }
      const StageRecord& s0 = r->outcome.stages.front();
      natural += s0.stop.natural();
      strict += s0.stop.strict_natural;
      marker += s0.stop.has_final_marker;
      single_think = single_think && r->outcome.stages.size() == 1 && s0.name == "single" &&
                     s0.mode == Mode::kThink;
    }
    if (valid > 0) {
      const double v = static_cast<double>(valid);
      s.accuracy = s.correct / v;
      s.ci = wilson_ci(s.correct, valid);
      s.avg_tokens_generated = mean_of(gen);
      s.avg_tokens_effective = mean_of(eff);
      s.utilization = mean_of(util);
      s.natural_stop_rate = natural / v;
      s.strict_natural_rate = strict / v;
      s.final_marker_rate = marker / v;
    }
    s.natural_count = natural;
    s.resolution_mix.assign(mix.begin(), mix.end());
    const auto& stages = cell.front()->outcome.stages;
    if (!stages.empty()) {
      const std::string& n0 = stages.front().name;
      s.policy_kind = n0 == "single" ? "single" : n0.rfind("sc", 0) == 0 ? "sc" : "cascade";
    }
    if (valid > 0 && single_think) {
      const ThinkMeasure m = measure_think(cell);
      DecompositionParams d;
      d.f_l = km_fl(m, s.budget).value_or(0.0);
      d.alpha_c = m.natural > 0 ? static_cast<double>(m.natural_correct) / m.natural : 0.0;
      const std::int64_t trunc = m.n - m.natural;
      d.alpha_t = trunc > 0 ? static_cast<double>(m.truncated_correct) / trunc : 0.0;
      s.measured = d;
    }
    out.push_back(std::move(s));
  }
  return out;
}

json summarize(const RunSet& runs) {
  json cells = json::array();
  for (const auto& s : summarize_cells(runs)) {
    json c{{"label", s.label},
           {"policy_kind", s.policy_kind},
           {"budget", s.budget},
           {"n", s.n},
           {"errors", s.errors},
           {"correct", s.correct},
           {"accuracy", s.accuracy},
           {"ci_lo", s.ci.lo},
           {"ci_hi", s.ci.hi},
           {"avg_tokens_generated", s.avg_tokens_generated},
           {"avg_tokens_effective", s.avg_tokens_effective},
           {"natural_stop_rate", s.natural_stop_rate},
           {"strict_natural_rate", s.strict_natural_rate},
           {"utilization", s.utilization},
           {"final_marker_rate", s.final_marker_rate}};
    json mix = json::object();
    for (const auto& [k, v] : s.resolution_mix) mix[k] = v;
    c["resolution_mix"] = mix;
    c["measured"] = s.measured ? json(*s.measured) : json(nullptr);
    cells.push_back(std::move(c));
  }
  return json{{"cells", cells}};
}

std::string render_table(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-20s %7s %6s %4s %8s %17s %9s %9s %8s %6s\n", "label",
                "budget", "n", "err", "acc%", "95% CI", "avg_tok", "eff_tok", "natural%",
                "util");
  os << buf;
  for (const auto& s : cells) {
    std::snprintf(buf, sizeof buf, "%-20s %7lld %6lld %4lld %8.1f   [%5.1f, %5.1f] %9.1f %9.1f %8.1f %6.3f\n",
                  s.label.c_str(), static_cast<long long>(s.budget), static_cast<long long>(s.n),
                  static_cast<long long>(s.errors), 100 * s.accuracy, 100 * s.ci.lo,
                  100 * s.ci.hi, s.avg_tokens_generated, s.avg_tokens_effective,
                  100 * s.natural_stop_rate, s.utilization);
    os << buf;
  }
  return os.str();
}

std::string render_csv(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  os << "label,budget,n,errors,accuracy,ci_lo,ci_hi,avg_tokens_generated,avg_tokens_effective,"
        "natural_stop_rate,strict_natural_rate,utilization,final_marker_rate,f_l,alpha_c,alpha_t\n";
  os.precision(10);
  for (const auto& s : cells) {
    os << s.label << ',' << s.budget << ',' << s.n << ',' << s.errors << ',' << s.accuracy << ','
       << s.ci.lo << ',' << s.ci.hi << ',' << s.avg_tokens_generated << ','
       << s.avg_tokens_effective << ',' << s.natural_stop_rate << ',' << s.strict_natural_rate
       << ',' << s.utilization << ',' << s.final_marker_rate << ',';
    if (s.measured) {
      os << s.measured->f_l << ',' << s.measured->alpha_c << ',' << s.measured->alpha_t;
    } else {
      os << ",,";
    }
    os << '\n';
  }
  return os.str();
}

// ---- paired comparison ---------------------------------------------------

Comparison paired_compare(const RunSet& runs, const std::string& a, const std::string& b,
                          int bootstrap_iterations, std::uint64_t seed) {
  const auto ra = select(runs, a);
  const auto rb = select(runs, b);
  std::map<std::string, bool> ma, mb;
  for (const RunRecord* r : ra) ma[r->item_id] = r->correct;
  for (const RunRecord* r : rb) mb[r->item_id] = r->correct;
  std::vector<std::string> missing;
  for (const auto& [id, c] : ma) {
    if (!mb.count(id)) missing.push_back(id + " (missing from " + b + ")");
  }
  for (const auto& [id, c] : mb) {
    if (!ma.count(id)) missing.push_back(id + " (missing from " + a + ")");
  }
  if (!missing.empty()) {
    std::string msg = "id mismatch between " + a + " and " + b + ":";
    for (const auto& m : missing) msg += " " + m;
    throw DataError(msg);
  }

  Comparison c;
  c.label_a = a;
  c.label_b = b;
  PairedOutcomes pairs;
  for (const auto& [id, ca] : ma) {
    const bool cb = mb.at(id);
    pairs.add(id, ca, cb);
    c.wins += ca && !cb;
    c.losses += !ca && cb;
    c.ties += ca == cb;
    c.accuracy_a += ca;
    c.accuracy_b += cb;
  }
  c.n = static_cast<std::int64_t>(pairs.size());
  if (c.n > 0) {
    c.accuracy_a /= c.n;
    c.accuracy_b /= c.n;
    c.delta_pp = 100.0 * (c.accuracy_a - c.accuracy_b);
    c.delta_ci_pp = paired_bootstrap_diff(pairs, bootstrap_iterations, seed);
  }
  if (c.wins + c.losses > 0) {
    c.p_value = mcnemar_exact(c.wins, c.losses);
  } else {
    c.note = "no discordant pairs";
  }
  return c;
}

void to_json(json& j, const Comparison& c) {
  j = json{{"a", c.label_a},
           {"b", c.label_b},
           {"n", c.n},
           {"wins", c.wins},
           {"losses", c.losses},
           {"ties", c.ties},
           {"accuracy_a", c.accuracy_a},
           {"accuracy_b", c.accuracy_b},
           {"delta_pp", c.delta_pp},
           {"delta_ci_pp", {c.delta_ci_pp.lo, c.delta_ci_pp.hi}}};
  j["p_value"] = c.p_value ? json(*c.p_value) : json(c.note);
}

// ---- diagnostics ---------------------------------------------------------

Diagnostics diagnose(const RunSet& runs, const DiagnoseOptions& options) {
  Diagnostics d;
  std::map<std::int64_t, std::vector<const RunRecord*>> think, nothink;
  for (const auto& r : runs.records) {
    if (r.label == options.think_label) think[r.budget].push_back(&r);
    if (options.nothink_label && r.label == *options.nothink_label) {
      nothink[r.budget].push_back(&r);
    }
  }
  if (think.empty()) throw DataError("no records for label " + options.think_label);

  std::map<std::int64_t, double> nothink_acc;
  for (const auto& [b, recs] : nothink) {
    std::int64_t n = 0, k = 0;
    for (const RunRecord* r : recs) {
      if (r->error) continue;
      ++n;
      k += r->correct;
    }
    if (n > 0) nothink_acc[b] = static_cast<double>(k) / n;
  }

  std::vector<std::int64_t> budgets;
  std::vector<double> observed;
  for (const auto& [b, recs] : think) {
    const ThinkMeasure m = measure_think(recs);
    DiagnosticRow row;
    row.budget = b;
    row.n = m.n;
    if (m.n == 0) {
      row.flags.push_back("no successful records");
      d.rows.push_back(std::move(row));
      continue;
    }
    row.observed = static_cast<double>(m.correct) / m.n;
    row.mc_se_pp = 100.0 * std::sqrt(row.observed * (1.0 - row.observed) / m.n);
    const std::int64_t trunc = m.n - m.natural;
    if (const auto fl = km_fl(m, b)) {
      row.f_l = *fl;
    } else {
      row.flags.push_back("F_L unidentifiable: every chain censored");
    }
    if (m.natural > 0) {
      row.alpha_c = static_cast<double>(m.natural_correct) / m.natural;
    } else {
      row.flags.push_back("alpha_c unmeasurable: no natural stops");
    }
    if (trunc > 0) {
      row.alpha_t = static_cast<double>(m.truncated_correct) / trunc;
    } else {
      row.flags.push_back("alpha_t unmeasurable: no truncated chains");
    }
    if (row.alpha_c && row.alpha_t && *row.alpha_t > *row.alpha_c) {
      row.flags.push_back("measured alpha_t exceeds alpha_c");
    }
    // A missing component carries zero weight, so the mixture stays defined.
    row.predicted = mixture(row.f_l, row.alpha_c.value_or(0.0), row.alpha_t.value_or(0.0));
    row.delta_pp = 100.0 * (row.observed - *row.predicted);
    if (auto it = nothink_acc.find(b); it != nothink_acc.end()) {
      row.acc_nt = it->second;
      if (row.alpha_c && row.alpha_t && *row.alpha_t <= *row.alpha_c) {
        row.breakdown =
            two_source_decomposition({row.f_l, *row.alpha_c, *row.alpha_t, row.acc_nt});
      }
    }
    budgets.push_back(b);
    observed.push_back(row.observed);
    d.rows.push_back(std::move(row));
  }

  // Crossover from the least-censored think cell.
  const DiagnosticRow* top = nullptr;
  for (const auto& row : d.rows) {
    if (row.alpha_c && row.alpha_t) top = &row;
  }
  if (!nothink_acc.empty() && top != nullptr) {
    std::vector<std::int64_t> nb;
    std::vector<double> na;
    for (const auto& [b, acc] : nothink_acc) {
      nb.push_back(b);
      na.push_back(acc);
    }
    const std::int64_t b_sat = saturation_budget(nb, na);
    const double acc_nt = nothink_acc.at(b_sat);
    const std::vector<ChainObservation> obs = measure_think(think.at(top->budget)).observations;
    try {
      d.crossover = crossover_budget(km_estimate(obs), acc_nt, *top->alpha_c, *top->alpha_t, b_sat);
    } catch (const std::exception& e) {
      d.flags.push_back(std::string("crossover: ") + e.what());
    }
  } else if (options.nothink_label) {
    d.flags.push_back("crossover needs nothink records and a think cell with both alpha_c and alpha_t");
  }

  if (options.pilot_size && top != nullptr) {
    std::vector<const RunRecord*> pool;
    for (const RunRecord* r : think.at(top->budget)) {
      if (!r->error && !r->outcome.stages.empty()) pool.push_back(r);
    }
    const std::size_t n = std::min(*options.pilot_size, pool.size());
    std::vector<double> errs;
    for (int rep = 0; rep < options.pilot_repetitions && n > 0; ++rep) {
      std::mt19937_64 rng(prf::combine(options.pilot_seed, static_cast<std::uint64_t>(rep)));
      std::vector<const RunRecord*> pilot;
      std::sample(pool.begin(), pool.end(), std::back_inserter(pilot), n, rng);
      const ThinkMeasure m = measure_think(pilot);
      const std::int64_t trunc = m.n - m.natural;
      const double ac = m.natural > 0 ? static_cast<double>(m.natural_correct) / m.natural : 0.0;
      const double at = trunc > 0 ? static_cast<double>(m.truncated_correct) / trunc : 0.0;
      std::vector<double> pred;
      try {
        const SurvivalCurve curve = km_estimate(m.observations);
        for (std::int64_t b : budgets) pred.push_back(mixture(cdf_at(curve, b), ac, at));
      } catch (const EstimationError&) {
        for (std::size_t i = 0; i < budgets.size(); ++i) pred.push_back(at);
      }
      errs.push_back(100.0 * rmse(pred, observed));
    }
    if (!errs.empty()) {
      PilotRmse p;
      p.pilot_size = n;
      p.repetitions = static_cast<int>(errs.size());
      p.mean_pp = mean_of(errs);
      double ss = 0.0;
      for (double e : errs) ss += (e - p.mean_pp) * (e - p.mean_pp);
      p.std_pp = errs.size() > 1 ? std::sqrt(ss / (errs.size() - 1)) : 0.0;
      d.pilot = p;
    }
  }
  return d;
}

void to_json(json& j, const Diagnostics& d) {
  json rows = json::array();
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  for (const auto& r : d.rows) {
    json row{{"budget", r.budget},         {"n", r.n},
             {"f_l", r.f_l},               {"alpha_c", opt(r.alpha_c)},
             {"alpha_t", opt(r.alpha_t)},  {"predicted", opt(r.predicted)},
             {"observed", r.observed},     {"delta_pp", opt(r.delta_pp)},
             {"mc_se_pp", r.mc_se_pp},     {"acc_nt", opt(r.acc_nt)},
             {"flags", r.flags}};
    row["breakdown"] = r.breakdown ? json(*r.breakdown) : json(nullptr);
    rows.push_back(std::move(row));
  }
  j = json{{"rows", rows}, {"flags", d.flags}};
  j["crossover"] = d.crossover ? json(*d.crossover) : json(nullptr);
  if (d.pilot) {
    j["pilot"] = {{"pilot_size", d.pilot->pilot_size},
                  {"repetitions", d.pilot->repetitions},
                  {"mean_rmse_pp", d.pilot->mean_pp},
                  {"std_rmse_pp", d.pilot->std_pp}};
  } else {
    j["pilot"] = nullptr;
  }
}

std::string render_diagnostics(const Diagnostics& d) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%7s %6s %7s %7s %7s %9s %9s %8s %7s %8s %8s\n", "budget", "n",
                "F_L", "a_c", "a_t", "pred%", "obs%", "delta", "se", "TL", "RR");
  os << buf;
  auto fmt = [](const std::optional<double>& v, double scale) {
    char b[32];
    if (v) {
      std::snprintf(b, sizeof b, "%.3f", *v * scale);
    } else {
      std::snprintf(b, sizeof b, "-");
    }
    return std::string(b);
  };
  for (const auto& r : d.rows) {
    std::snprintf(buf, sizeof buf, "%7lld %6lld %7.3f %7s %7s %9s %9.2f %8s %7.2f %8s %8s\n",
                  static_cast<long long>(r.budget), static_cast<long long>(r.n), r.f_l,
                  fmt(r.alpha_c, 1).c_str(), fmt(r.alpha_t, 1).c_str(),
                  fmt(r.predicted, 100).c_str(), 100 * r.observed, fmt(r.delta_pp, 1).c_str(),
                  r.mc_se_pp,
                  r.breakdown ? fmt(r.breakdown->truncation_loss, 1).c_str() : "-",
                  r.breakdown ? fmt(r.breakdown->reasoning_regret, 1).c_str() : "-");
    os << buf;
    for (const auto& f : r.flags) os << "        flag: " << f << '\n';
  }
  if (d.crossover) {
    os << "crossover: f*=" << d.crossover->f_star;
    if (d.crossover->b_star) os << " b*=" << *d.crossover->b_star;
    if (d.crossover->b_sat) os << " b_sat=" << *d.crossover->b_sat;
    if (d.crossover->gamma) os << " gamma=" << *d.crossover->gamma;
    if (!d.crossover->flag.empty()) os << " (" << d.crossover->flag << ")";
    os << '\n';
  }
  if (d.pilot) {
    os << "pilot n=" << d.pilot->pilot_size << " x" << d.pilot->repetitions
       << ": mean RMSE " << d.pilot->mean_pp << " pp (std " << d.pilot->std_pp << " pp)\n";
  }
  for (const auto& f : d.flags) os << "flag: " << f << '\n';
  return os.str();
}

// ---- simulation helpers --------------------------------------------------

std::vector<IdentityRow> simulate_identity(const SimModelConfig& config, std::int64_t n,
                                           const std::vector<std::int64_t>& budgets,
                                           std::uint64_t seed) {
  if (n < 1) throw InvalidArgument("n must be >= 1");
  SimBackend backend(SimPopulation::single(config, seed));
  Orchestrator orch(backend);
  std::vector<IdentityRow> rows;
  for (std::int64_t b : budgets) {
    std::int64_t natural = 0, nat_ok = 0, trunc_ok = 0, ok = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      const std::string id = "q" + std::to_string(i);
      const Question q{id, "", question_seed(seed, id), AnswerConvention::kNumeric, true};
      const PolicyOutcome o = orch.run_single(q, Mode::kThink, b);
      const bool correct = score(o.final_answer, backend.gold_for(id));
      ok += correct;
      if (o.stages.front().stop.natural()) {
        ++natural;
        nat_ok += correct;
      } else {
        trunc_ok += correct;
      }
    }
    IdentityRow row;
    row.budget = b;
    row.f_l = static_cast<double>(natural) / n;
    row.alpha_c = natural > 0 ? static_cast<double>(nat_ok) / natural : 0.0;
    row.alpha_t = natural < n ? static_cast<double>(trunc_ok) / (n - natural) : 0.0;
    row.predicted = mixture(row.f_l, row.alpha_c, row.alpha_t);
    row.observed = static_cast<double>(ok) / n;
    row.se = std::sqrt(std::max(row.observed * (1.0 - row.observed), 1e-12) / n);
    rows.push_back(row);
  }
  return rows;
}

std::vector<DatasetItem> synthetic_dataset(const SimModelConfig& config, std::int64_t n,
                                           std::uint64_t key_seed) {
  std::vector<DatasetItem> items;
  for (std::int64_t i = 0; i < n; ++i) {
    DatasetItem item;
    item.id = "sim-" + std::to_string(i);
    item.question = "Synthetic question " + item.id;
    item.gold = sim_synthetic_gold(item.id, config, key_seed);
    items.push_back(std::move(item));
  }
  return items;
}

}  // namespace thinkbudget
