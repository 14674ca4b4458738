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
#include <stdexcept>
#include <string>
#include <string_view>

#include "json.hpp"
#include "thinkbudget/extraction.h"

namespace thinkbudget {

enum class Mode { kThink, kNothink };

const char* to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct PromptParts {
  std::string system;
  std::string question;
  // Reasoning trace handed to an extraction pass, and its length in tokens
  // as generated (charged as prefill).
  std::optional<std::string> trace_context;
  std::int64_t trace_tokens = 0;
  // Previous round's normalized answer.
  std::optional<std::string> hint;
};

struct GenerationRequest {
  std::string question_id;
  PromptParts prompt;
  Mode mode = Mode::kThink;
  std::int64_t max_new_tokens = 1;
  std::uint64_t seed = 0;
  // Nonzero on a re-issued extraction pass; lets backends vary the output.
  int attempt = 0;

  // max_new_tokens >= 1; trace context only in nothink mode.
  void validate() const;
};

struct GenerationOutcome {
  std::string text;
  std::int64_t tokens_generated = 0;
  std::int64_t prefill_tokens = 0;
  StopReason stop_reason = StopReason::kNatural;
  std::optional<bool> correct_latent;  // simulator ground truth, never shown to policies
  bool tokens_estimated = false;       // whitespace-count fallback was used
  int retries = 0;
};

class BackendError : public std::runtime_error {
 public:
  enum class Kind { kRetryable, kFatal };

  BackendError(Kind kind, const std::string& message, std::string question_id = {})
      : std::runtime_error(message), kind_(kind), question_id_(std::move(question_id)) {}

  Kind kind() const { return kind_; }
  bool retryable() const { return kind_ == Kind::kRetryable; }
  const std::string& question_id() const { return question_id_; }

 private:
  Kind kind_;
  std::string question_id_;
};

// generate() may be called concurrently; implementations synchronize
// internally and must return the same outcome for the same request.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual GenerationOutcome generate(const GenerationRequest& request) = 0;
  // Advisory bound on concurrent generate() calls.
  virtual int max_in_flight() const { return 1; }
};

void to_json(nlohmann::json& j, const GenerationOutcome& o);

}  // namespace thinkbudget
