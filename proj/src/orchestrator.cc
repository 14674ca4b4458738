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

#include "thinkbudget/orchestrator.h"

#include <algorithm>
#include <array>
#include <stdexcept>

#include "thinkbudget/error.h"
#include "thinkbudget/prf.h"

namespace thinkbudget {
namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void check_budget(std::int64_t b, const char* name) {
  if (b < 1) throw InvalidArgument(std::string(name) + " must be >= 1");
}

void validate_iris(const IrisPolicy& p) {
  check_budget(p.b1, "b1");
  check_budget(p.b_r, "b_r");
  check_budget(p.b_a, "b_a");
}

void validate_sc(const SelfConsistencyPolicy& p) {
  if (p.k < 1) throw InvalidArgument("k must be >= 1");
  check_budget(p.budget, "budget");
}

int method_rank(ExtractionMethod m) { return static_cast<int>(m); }

bool same_class(const ExtractedAnswer& a, const ExtractedAnswer& b) {
  return a.value && b.value && answers_equivalent(*a.value, *b.value);
}

constexpr std::array<std::pair<Resolution, const char*>, 7> kResolutionNames{{
    {Resolution::kDirect, "direct"},
    {Resolution::kStage0Accept, "stage0_accept"},
    {Resolution::kThinkComplete, "think_complete"},
    {Resolution::kExtracted, "extracted"},
    {Resolution::kRefinedConverged, "refined_converged"},
    {Resolution::kMajorityFallback, "majority_fallback"},
    {Resolution::kVote, "vote"},
}};

}  // namespace

void validate(const PolicyConfig& policy) {
  std::visit(Overloaded{
                 [](const SinglePolicy& p) { check_budget(p.budget, "budget"); },
                 [](const TownPolicy& p) {
                   check_budget(p.b1, "b1");
                   check_budget(p.b2, "b2");
                 },
                 [](const IrisPolicy& p) { validate_iris(p); },
                 [](const MrsdPolicy& p) {
                   check_budget(p.b1, "b1");
                   check_budget(p.b_r, "b_r");
                   check_budget(p.b_a, "b_a");
                   if (p.max_rounds < 1) throw InvalidArgument("max_rounds must be >= 1");
                 },
                 [](const SelfConsistencyPolicy& p) { validate_sc(p); },
                 [](const GatePolicy& p) {
                   validate_sc(p.sc);
                   validate_iris(p.fallback);
                   if (p.min_votes < 1) throw InvalidArgument("min_votes must be >= 1");
                 },
             },
             policy);
}

const char* policy_kind(const PolicyConfig& policy) {
  static constexpr const char* kNames[] = {"single", "town", "iris", "mrsd", "sc", "gate"};
  return kNames[policy.index()];
}

std::int64_t sweep_budget(const PolicyConfig& policy) {
  return std::visit(Overloaded{
                        [](const SinglePolicy& p) { return p.budget; },
                        [](const TownPolicy& p) { return p.b2; },
                        [](const IrisPolicy& p) { return p.b_r; },
                        [](const MrsdPolicy& p) { return p.b_r; },
                        [](const SelfConsistencyPolicy& p) { return p.budget; },
                        [](const GatePolicy& p) { return p.fallback.b_r; },
                    },
                    policy);
}

PolicyConfig with_sweep_budget(PolicyConfig policy, std::int64_t budget) {
  std::visit(Overloaded{
                 [&](SinglePolicy& p) { p.budget = budget; },
                 [&](TownPolicy& p) { p.b2 = budget; },
                 [&](IrisPolicy& p) { p.b_r = budget; },
                 [&](MrsdPolicy& p) { p.b_r = budget; },
                 [&](SelfConsistencyPolicy& p) { p.budget = budget; },
                 [&](GatePolicy& p) { p.fallback.b_r = budget; },
             },
             policy);
  return policy;
}

const char* to_string(Resolution r) {
  for (const auto& [k, v] : kResolutionNames) {
    if (k == r) return v;
  }
  return "direct";
}

Resolution resolution_from_string(std::string_view s) {
  for (const auto& [k, v] : kResolutionNames) {
    if (s == v) return k;
  }
  throw DataError("unknown resolution: " + std::string(s));
}

std::uint64_t sc_sample_seed(std::uint64_t question_seed, std::uint64_t seed_base, int i) {
  return question_seed + (seed_base + static_cast<std::uint64_t>(i)) * prf::kGolden;
}

Orchestrator::Orchestrator(Backend& backend, RoutingOptions options)
    : backend_(backend), options_(std::move(options)) {}

PromptParts Orchestrator::base_prompt(const Question& q) const {
  PromptParts p;
  p.system = options_.system_prompt;
  p.question = q.text;
  return p;
}

StageRecord Orchestrator::call(const Question& q, std::string name, Mode mode,
                               std::int64_t budget, std::uint64_t seed, const PromptParts& prompt,
                               int attempt) {
  GenerationRequest req;
  req.question_id = q.id;
  req.prompt = prompt;
  req.mode = mode;
  req.max_new_tokens = budget;
  req.seed = seed;
  req.attempt = attempt;
  GenerationOutcome out;
  try {
    out = backend_.generate(req);
  } catch (const BackendError& e) {
    if (!e.question_id().empty()) throw;
    throw BackendError(e.kind(), e.what(), q.id);
  }
  if (out.tokens_generated > budget) {
    throw BackendError(BackendError::Kind::kFatal, "backend violated the token cap", q.id);
  }
  StageRecord s;
  s.name = std::move(name);
  s.mode = mode;
  s.budget = budget;
  s.tokens_generated = out.tokens_generated;
  s.prefill_tokens = out.prefill_tokens;
  s.stop = detect_natural_stop(out.tokens_generated, budget, options_.strict_threshold);
  // The backend's stop reason wins: a model may hit EOS exactly at the cap.
  s.stop.stop_reason = out.stop_reason;
  s.stop.has_final_marker = has_final_marker(out.text);
  s.answer = extract_answer(out.text, q.convention, q.gold_is_numeric);
  s.text = std::move(out.text);
  s.correct_latent = out.correct_latent;
  s.retries = out.retries;
  s.tokens_estimated = out.tokens_estimated;
  return s;
}

bool Orchestrator::accepts(const StageRecord& probe) const {
  return options_.strict_stage0 ? probe.stop.strict_natural : probe.stop.natural();
}

PolicyOutcome Orchestrator::finish(PolicyOutcome out) const {
  std::int64_t gen = 0;
  std::int64_t eff = 0;
  for (const auto& s : out.stages) {
    gen += s.tokens_generated;
    eff += s.tokens_generated + s.prefill_tokens;
  }
  out.tokens_generated_total = gen;
  out.tokens_effective_total = eff;
  if (out.tokens_effective_total < out.tokens_generated_total) {
    throw std::logic_error("token accounting violated");
  }
  return out;
}

PolicyOutcome Orchestrator::run(const Question& q, const PolicyConfig& policy) {
  validate(policy);
  return std::visit(
      Overloaded{
          [&](const SinglePolicy& p) { return run_single(q, p.mode, p.budget); },
          [&](const TownPolicy& p) { return run_town(q, p.b1, p.b2); },
          [&](const IrisPolicy& p) { return run_iris(q, p.b1, p.b_r, p.b_a, p.strengthened); },
          [&](const MrsdPolicy& p) { return run_mrsd(q, p.b1, p.b_r, p.b_a, p.max_rounds); },
          [&](const SelfConsistencyPolicy& p) {
            return run_self_consistency(q, p.k, p.mode, p.budget, p.seed_base);
          },
          [&](const GatePolicy& p) { return run_gate(q, p); },
      },
      policy);
}

PolicyOutcome Orchestrator::run_single(const Question& q, Mode mode, std::int64_t budget) {
  check_budget(budget, "budget");
  PolicyOutcome out;
  out.stages.push_back(call(q, "single", mode, budget, q.seed, base_prompt(q)));
  out.final_answer = out.stages.back().answer;
  out.resolution = Resolution::kDirect;
  return finish(std::move(out));
}

PolicyOutcome Orchestrator::run_town(const Question& q, std::int64_t b1, std::int64_t b2) {
  check_budget(b1, "b1");
  check_budget(b2, "b2");
  PolicyOutcome out;
  out.stages.push_back(call(q, "probe", Mode::kNothink, b1, q.seed, base_prompt(q)));
  if (accepts(out.stages.back())) {
    out.final_answer = out.stages.back().answer;
    out.resolution = Resolution::kStage0Accept;
    out.converged = true;
    return finish(std::move(out));
  }
  out.stages.push_back(call(q, "think", Mode::kThink, b2, q.seed, base_prompt(q)));
  out.final_answer = out.stages.back().answer;
  out.resolution = Resolution::kThinkComplete;
  out.rounds_used = 1;
  return finish(std::move(out));
}

Orchestrator::RoundResult Orchestrator::think_then_extract(
    const Question& q, std::int64_t b_r, std::int64_t b_a, bool strengthened,
    const std::optional<std::string>& hint, const std::string& prefix,
    std::vector<StageRecord>& stages) {
  PromptParts prompt = base_prompt(q);
  prompt.hint = hint;
  stages.push_back(call(q, prefix + "think", Mode::kThink, b_r, q.seed, prompt));
  const StageRecord& think = stages.back();
  if (think.stop.natural()) return {think.answer, Resolution::kThinkComplete};

  PromptParts ext = prompt;
  ext.trace_context = think.text;
  ext.trace_tokens = think.tokens_generated;
  const std::int64_t answer_budget =
      strengthened ? std::max(b_a, options_.strengthened_answer_budget) : b_a;
  stages.push_back(call(q, prefix + "extract", Mode::kNothink, answer_budget, q.seed, ext));
  ExtractedAnswer answer = stages.back().answer;
  if (strengthened && (answer.method == ExtractionMethod::kLastNumber ||
                       answer.method == ExtractionMethod::kNone)) {
    stages.push_back(
        call(q, prefix + "extract_retry", Mode::kNothink, answer_budget, q.seed, ext, 1));
    const ExtractedAnswer& retry = stages.back().answer;
    if (method_rank(retry.method) <= method_rank(answer.method)) answer = retry;
  }
  return {answer, Resolution::kExtracted};
}

PolicyOutcome Orchestrator::run_iris(const Question& q, std::int64_t b1, std::int64_t b_r,
                                     std::int64_t b_a, bool strengthened) {
  validate_iris({b1, b_r, b_a, strengthened});
  PolicyOutcome out;
  out.stages.push_back(call(q, "probe", Mode::kNothink, b1, q.seed, base_prompt(q)));
  if (accepts(out.stages.back())) {
    out.final_answer = out.stages.back().answer;
    out.resolution = Resolution::kStage0Accept;
    out.converged = true;
    return finish(std::move(out));
  }
  const auto r = think_then_extract(q, b_r, b_a, strengthened, std::nullopt, "", out.stages);
  out.final_answer = r.answer;
  out.resolution = r.resolution;
  out.rounds_used = 1;
  return finish(std::move(out));
}

PolicyOutcome Orchestrator::run_mrsd(const Question& q, std::int64_t b1, std::int64_t b_r,
                                     std::int64_t b_a, int max_rounds) {
  validate(MrsdPolicy{b1, b_r, b_a, max_rounds});
  PolicyOutcome out;
  out.stages.push_back(call(q, "probe", Mode::kNothink, b1, q.seed, base_prompt(q)));
  if (accepts(out.stages.back())) {
    out.final_answer = out.stages.back().answer;
    out.resolution = Resolution::kStage0Accept;
    out.converged = true;
    return finish(std::move(out));
  }

  std::vector<RoundResult> rounds;
  for (int r = 1; r <= max_rounds; ++r) {
    std::optional<std::string> hint;
    if (!rounds.empty() && rounds.back().answer.value) hint = rounds.back().answer.value;
    rounds.push_back(think_then_extract(q, b_r, b_a, false, hint,
                                        "round" + std::to_string(r) + "_", out.stages));
    out.rounds_used = r;
    if (r >= 2 && same_class(rounds[r - 2].answer, rounds[r - 1].answer)) {
      out.final_answer = rounds.back().answer;
      out.resolution = Resolution::kRefinedConverged;
      out.converged = true;
      return finish(std::move(out));
    }
  }
  if (rounds.size() == 1) {
    out.final_answer = rounds[0].answer;
    out.resolution = rounds[0].resolution;
    return finish(std::move(out));
  }

  // Majority over equivalence classes; ties go to the class holding the
  // most recent answer.
  int best_count = 0;
  std::size_t best_latest = 0;
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rounds.size(); ++i) {
    if (!rounds[i].answer.value) continue;
    int count = 0;
    std::size_t latest = 0;
    for (std::size_t j = 0; j < rounds.size(); ++j) {
      if (same_class(rounds[i].answer, rounds[j].answer)) {
        ++count;
        latest = j;
      }
    }
    if (!best || count > best_count || (count == best_count && latest > best_latest)) {
      best = latest;
      best_count = count;
      best_latest = latest;
    }
  }
  out.final_answer = best ? rounds[*best].answer : rounds.back().answer;
  out.resolution = Resolution::kMajorityFallback;
  return finish(std::move(out));
}

PolicyOutcome Orchestrator::run_self_consistency(const Question& q, int k, Mode mode,
                                                 std::int64_t budget, std::uint64_t seed_base) {
  validate_sc({k, mode, budget, seed_base});
  PolicyOutcome out;
  struct Class {
    std::size_t first;
    int count;
  };
  std::vector<Class> classes;
  for (int i = 0; i < k; ++i) {
    out.stages.push_back(call(q, "sc" + std::to_string(i), mode, budget,
                              sc_sample_seed(q.seed, seed_base, i), base_prompt(q)));
    const ExtractedAnswer& a = out.stages.back().answer;
    if (!a.value) continue;
    auto it = std::find_if(classes.begin(), classes.end(), [&](const Class& c) {
      return same_class(out.stages[c.first].answer, a);
    });
    if (it == classes.end()) {
      classes.push_back({out.stages.size() - 1, 1});
    } else {
      ++it->count;
    }
  }
  out.resolution = Resolution::kVote;
  out.top_class_size = 0;
  const Class* top = nullptr;
  for (const auto& c : classes) {
    if (top == nullptr || c.count > top->count) top = &c;
  }
  if (top != nullptr) {
    out.final_answer = out.stages[top->first].answer;
    out.top_class_size = top->count;
  }
  return finish(std::move(out));
}

PolicyOutcome Orchestrator::run_gate(const Question& q, const GatePolicy& gate) {
  validate(PolicyConfig{gate});
  PolicyOutcome sc = run_self_consistency(q, gate.sc.k, gate.sc.mode, gate.sc.budget,
                                          gate.sc.seed_base);
  if (sc.top_class_size.value_or(0) >= gate.min_votes) return sc;
  PolicyOutcome fb = run_iris(q, gate.fallback.b1, gate.fallback.b_r, gate.fallback.b_a,
                              gate.fallback.strengthened);
  PolicyOutcome out = fb;
  out.stages = sc.stages;
  out.stages.insert(out.stages.end(), fb.stages.begin(), fb.stages.end());
  out.top_class_size = sc.top_class_size;
  return finish(std::move(out));
}

// ---- JSON ----------------------------------------------------------------

namespace {

nlohmann::json sc_json(const SelfConsistencyPolicy& p) {
  return {{"type", "sc"}, {"k", p.k}, {"mode", to_string(p.mode)}, {"budget", p.budget},
          {"seed_base", p.seed_base}};
}

nlohmann::json iris_json(const IrisPolicy& p) {
  return {{"type", "iris"}, {"b1", p.b1}, {"b_r", p.b_r}, {"b_a", p.b_a},
          {"strengthened", p.strengthened}};
}

SelfConsistencyPolicy sc_from(const nlohmann::json& j) {
  SelfConsistencyPolicy p;
  p.k = j.value("k", p.k);
  p.mode = mode_from_string(j.value("mode", std::string(to_string(p.mode))));
  p.budget = j.value("budget", p.budget);
  p.seed_base = j.value("seed_base", p.seed_base);
  return p;
}

IrisPolicy iris_from(const nlohmann::json& j) {
  IrisPolicy p;
  p.b1 = j.value("b1", p.b1);
  p.b_r = j.value("b_r", p.b_r);
  p.b_a = j.value("b_a", p.b_a);
  p.strengthened = j.value("strengthened", p.strengthened);
  return p;
}

}  // namespace

void to_json(nlohmann::json& j, const PolicyConfig& p) {
  j = std::visit(
      Overloaded{
          [](const SinglePolicy& s) -> nlohmann::json {
            return {{"type", "single"}, {"mode", to_string(s.mode)}, {"budget", s.budget}};
          },
          [](const TownPolicy& s) -> nlohmann::json {
            return {{"type", "town"}, {"b1", s.b1}, {"b2", s.b2}};
          },
          [](const IrisPolicy& s) -> nlohmann::json { return iris_json(s); },
          [](const MrsdPolicy& s) -> nlohmann::json {
            return {{"type", "mrsd"}, {"b1", s.b1}, {"b_r", s.b_r}, {"b_a", s.b_a},
                    {"max_rounds", s.max_rounds}};
          },
          [](const SelfConsistencyPolicy& s) -> nlohmann::json { return sc_json(s); },
          [](const GatePolicy& s) -> nlohmann::json {
            return {{"type", "gate"}, {"sc", sc_json(s.sc)}, {"fallback", iris_json(s.fallback)},
                    {"min_votes", s.min_votes}};
          },
      },
      p);
}

void from_json(const nlohmann::json& j, PolicyConfig& p) {
  const auto type = j.at("type").get<std::string>();
  if (type == "single") {
    SinglePolicy s;
    s.mode = mode_from_string(j.at("mode").get<std::string>());
    s.budget = j.value("budget", s.budget);
    p = s;
  } else if (type == "town") {
    TownPolicy s;
    s.b1 = j.value("b1", s.b1);
    s.b2 = j.value("b2", s.b2);
    p = s;
  } else if (type == "iris") {
    p = iris_from(j);
  } else if (type == "mrsd") {
    MrsdPolicy s;
    s.b1 = j.value("b1", s.b1);
    s.b_r = j.value("b_r", s.b_r);
    s.b_a = j.value("b_a", s.b_a);
    s.max_rounds = j.value("max_rounds", s.max_rounds);
    p = s;
  } else if (type == "sc" || type == "self_consistency") {
    p = sc_from(j);
  } else if (type == "gate") {
    GatePolicy g;
    if (j.contains("sc")) g.sc = sc_from(j.at("sc"));
    if (j.contains("fallback")) g.fallback = iris_from(j.at("fallback"));
    g.min_votes = j.value("min_votes", g.min_votes);
    p = g;
  } else {
    throw DataError("unknown policy type: " + type);
  }
  validate(p);
}

void to_json(nlohmann::json& j, const StageRecord& s) {
  j = nlohmann::json{{"name", s.name},
                     {"mode", to_string(s.mode)},
                     {"budget", s.budget},
                     {"tokens_generated", s.tokens_generated},
                     {"prefill_tokens", s.prefill_tokens},
                     {"stop", s.stop},
                     {"answer", s.answer},
                     {"text", s.text},
                     {"retries", s.retries},
                     {"tokens_estimated", s.tokens_estimated}};
  if (s.correct_latent) j["correct_latent"] = *s.correct_latent;
}

void from_json(const nlohmann::json& j, StageRecord& s) {
  s.name = j.at("name").get<std::string>();
  s.mode = mode_from_string(j.at("mode").get<std::string>());
  s.budget = j.at("budget").get<std::int64_t>();
  s.tokens_generated = j.at("tokens_generated").get<std::int64_t>();
  s.prefill_tokens = j.at("prefill_tokens").get<std::int64_t>();
  s.stop = j.at("stop").get<StopSignal>();
  s.answer = j.at("answer").get<ExtractedAnswer>();
  s.text = j.at("text").get<std::string>();
  s.retries = j.value("retries", 0);
  s.tokens_estimated = j.value("tokens_estimated", false);
  if (j.contains("correct_latent")) s.correct_latent = j.at("correct_latent").get<bool>();
}

void to_json(nlohmann::json& j, const PolicyOutcome& o) {
  j = nlohmann::json{{"final_answer", o.final_answer},
                     {"stages", o.stages},
                     {"tokens_generated_total", o.tokens_generated_total},
                     {"tokens_effective_total", o.tokens_effective_total},
                     {"rounds_used", o.rounds_used},
                     {"converged", o.converged},
                     {"resolution", to_string(o.resolution)}};
  if (o.top_class_size) j["top_class_size"] = *o.top_class_size;
}

void from_json(const nlohmann::json& j, PolicyOutcome& o) {
  o.final_answer = j.at("final_answer").get<ExtractedAnswer>();
  o.stages = j.at("stages").get<std::vector<StageRecord>>();
  o.tokens_generated_total = j.at("tokens_generated_total").get<std::int64_t>();
  o.tokens_effective_total = j.at("tokens_effective_total").get<std::int64_t>();
  o.rounds_used = j.at("rounds_used").get<int>();
  o.converged = j.at("converged").get<bool>();
  o.resolution = resolution_from_string(j.at("resolution").get<std::string>());
  if (j.contains("top_class_size")) o.top_class_size = j.at("top_class_size").get<int>();
}

}  // namespace thinkbudget
