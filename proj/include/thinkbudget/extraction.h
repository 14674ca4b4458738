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
#include <string_view>

#include "json.hpp"

namespace thinkbudget {

enum class AnswerConvention { kNumeric, kLatexMath };

// Ordered from most to least trusted.
enum class ExtractionMethod {
  kBoxed,
  kGsm8kMarker,
  kFinalAnswerPhrase,
  kLastNumber,
  kNone,
};

struct ExtractedAnswer {
  std::optional<std::string> value;  // normalize_answer(raw_span)
  std::string raw_span;
  ExtractionMethod method = ExtractionMethod::kNone;

  bool found() const { return method != ExtractionMethod::kNone; }
  bool operator==(const ExtractedAnswer&) const = default;
};

// Multi-level extraction. Levels, first hit wins:
//   1. last \boxed{...}; braces are balanced by scanning from the directive,
//      one brace left open at end of text is accepted (truncated output);
//   2. last "####" followed by a value;
//   3. last "final answer" phrase (any case, optional colon, optional "is");
//   4. last number lexeme.
// Level 4 is skipped only for latex_math items whose gold is non-numeric.
ExtractedAnswer extract_answer(std::string_view text,
                               AnswerConvention convention = AnswerConvention::kNumeric,
                               bool gold_is_numeric = true);

// True when any of levels 1-3 would fire.
bool has_final_marker(std::string_view text);

// Canonical form used for scoring and vote classes. Idempotent.
std::string normalize_answer(std::string_view raw);

// Expects normalized inputs. Integers and fractions compare exactly, anything
// involving a decimal compares with 1e-9 relative tolerance.
bool answers_equivalent(std::string_view a, std::string_view b);

// Parses a normalized answer as a number if it is an integer, decimal, a/b or
// \frac{a}{b}.
std::optional<double> parse_numeric(std::string_view s);

enum class StopReason { kNatural, kBudgetHit };

struct StopSignal {
  std::int64_t tokens_generated = 0;
  std::int64_t budget = 0;
  StopReason stop_reason = StopReason::kBudgetHit;
  bool strict_natural = false;
  bool has_final_marker = false;
  double strict_threshold = 0.95;

  bool natural() const { return stop_reason == StopReason::kNatural; }
  bool operator==(const StopSignal&) const = default;
};

inline constexpr double kDefaultStrictThreshold = 0.95;

// natural iff tokens < budget; strict iff tokens < threshold * budget.
// Throws InvalidArgument when tokens > budget or the threshold is outside
// (0, 1].
StopSignal detect_natural_stop(std::int64_t tokens_generated, std::int64_t budget,
                               double strict_threshold = kDefaultStrictThreshold);

const char* to_string(ExtractionMethod m);
ExtractionMethod extraction_method_from_string(std::string_view s);
const char* to_string(StopReason r);
StopReason stop_reason_from_string(std::string_view s);
const char* to_string(AnswerConvention c);
AnswerConvention answer_convention_from_string(std::string_view s);

void to_json(nlohmann::json& j, const ExtractedAnswer& a);
void from_json(const nlohmann::json& j, ExtractedAnswer& a);
void to_json(nlohmann::json& j, const StopSignal& s);
void from_json(const nlohmann::json& j, StopSignal& s);

}  // namespace thinkbudget
