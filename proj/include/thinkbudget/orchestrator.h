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

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "thinkbudget/backend.h"
#include "thinkbudget/extraction.h"

namespace thinkbudget {

struct Question {
  std::string id;
  std::string text;
  std::uint64_t seed = 0;
  AnswerConvention convention = AnswerConvention::kNumeric;
  bool gold_is_numeric = true;
};

struct SinglePolicy {
  Mode mode = Mode::kThink;
  std::int64_t budget = 512;
};

// Nothink probe at b1, escalate to coupled thinking at b2.
struct TownPolicy {
  std::int64_t b1 = 256;
  std::int64_t b2 = 512;
};

// Probe, think at b_r, extract from a truncated trace at b_a.
struct IrisPolicy {
  std::int64_t b1 = 256;
  std::int64_t b_r = 512;
  std::int64_t b_a = 128;
  bool strengthened = false;
};

struct MrsdPolicy {
  std::int64_t b1 = 256;
  std::int64_t b_r = 512;
  std::int64_t b_a = 128;
  int max_rounds = 3;
};

struct SelfConsistencyPolicy {
  int k = 5;
  Mode mode = Mode::kNothink;
  std::int64_t budget = 1024;
  std::uint64_t seed_base = 0;
};

struct GatePolicy {
  SelfConsistencyPolicy sc;
  IrisPolicy fallback{256, 2048, 512, true};
  int min_votes = 3;
};

using PolicyConfig = std::variant<SinglePolicy, TownPolicy, IrisPolicy, MrsdPolicy,
                                  SelfConsistencyPolicy, GatePolicy>;

// Throws InvalidArgument on budgets < 1, K < 1, k < 1 or min_votes < 1.
void validate(const PolicyConfig& policy);
const char* policy_kind(const PolicyConfig& policy);
// The budget a sweep grid varies: single/SC budget, TOWN b2, IRIS/MRSD b_r,
// gate fallback b_r.
std::int64_t sweep_budget(const PolicyConfig& policy);
PolicyConfig with_sweep_budget(PolicyConfig policy, std::int64_t budget);

enum class Resolution {
  kDirect,  // single-mode run
  kStage0Accept,
  kThinkComplete,
  kExtracted,
  kRefinedConverged,
  kMajorityFallback,
  kVote,  // self-consistency majority
};

const char* to_string(Resolution r);
Resolution resolution_from_string(std::string_view s);

struct StageRecord {
  std::string name;
  Mode mode = Mode::kThink;
  std::int64_t budget = 0;
  std::int64_t tokens_generated = 0;
  std::int64_t prefill_tokens = 0;
  StopSignal stop;
  ExtractedAnswer answer;
  std::string text;
  std::optional<bool> correct_latent;
  int retries = 0;
  bool tokens_estimated = false;
};

struct PolicyOutcome {
  ExtractedAnswer final_answer;
  std::vector<StageRecord> stages;
  std::int64_t tokens_generated_total = 0;
  std::int64_t tokens_effective_total = 0;
  int rounds_used = 0;
  bool converged = false;
  Resolution resolution = Resolution::kDirect;
  std::optional<int> top_class_size;
};

struct RoutingOptions {
  // Stage-0 acceptance uses tokens < b by default; strict uses
  // tokens < strict_threshold * b.
  bool strict_stage0 = false;
  double strict_threshold = kDefaultStrictThreshold;
  // Strengthened extraction answer budget floor.
  std::int64_t strengthened_answer_budget = 512;
  std::string system_prompt;
};

// Seed of the i-th self-consistency sample. Sample 0 with seed_base 0 keeps
// the question seed, so SC@1 reproduces a single run.
std::uint64_t sc_sample_seed(std::uint64_t question_seed, std::uint64_t seed_base, int i);

class Orchestrator {
 public:
  explicit Orchestrator(Backend& backend, RoutingOptions options = {});

  PolicyOutcome run(const Question& q, const PolicyConfig& policy);

  PolicyOutcome run_single(const Question& q, Mode mode, std::int64_t budget);
  PolicyOutcome run_town(const Question& q, std::int64_t b1, std::int64_t b2);
  PolicyOutcome run_iris(const Question& q, std::int64_t b1, std::int64_t b_r, std::int64_t b_a,
                         bool strengthened);
  PolicyOutcome run_mrsd(const Question& q, std::int64_t b1, std::int64_t b_r, std::int64_t b_a,
                         int max_rounds);
  PolicyOutcome run_self_consistency(const Question& q, int k, Mode mode, std::int64_t budget,
                                     std::uint64_t seed_base);
  PolicyOutcome run_gate(const Question& q, const GatePolicy& gate);

 private:
  struct RoundResult {
    ExtractedAnswer answer;
    Resolution resolution = Resolution::kThinkComplete;
  };

  StageRecord call(const Question& q, std::string name, Mode mode, std::int64_t budget,
                   std::uint64_t seed, const PromptParts& prompt, int attempt = 0);
  PromptParts base_prompt(const Question& q) const;
  bool accepts(const StageRecord& probe) const;
  RoundResult think_then_extract(const Question& q, std::int64_t b_r, std::int64_t b_a,
                                 bool strengthened, const std::optional<std::string>& hint,
                                 const std::string& prefix, std::vector<StageRecord>& stages);
  PolicyOutcome finish(PolicyOutcome out) const;

  Backend& backend_;
  RoutingOptions options_;
};

void to_json(nlohmann::json& j, const PolicyConfig& p);
void from_json(const nlohmann::json& j, PolicyConfig& p);
void to_json(nlohmann::json& j, const StageRecord& s);
void from_json(const nlohmann::json& j, StageRecord& s);
void to_json(nlohmann::json& j, const PolicyOutcome& o);
void from_json(const nlohmann::json& j, PolicyOutcome& o);

}  // namespace thinkbudget
