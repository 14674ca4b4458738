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

#include "thinkbudget/backend.h"

#include "thinkbudget/error.h"

namespace thinkbudget {

const char* to_string(Mode m) { return m == Mode::kThink ? "think" : "nothink"; }

Mode mode_from_string(std::string_view s) {
  if (s == "think") return Mode::kThink;
  if (s == "nothink") return Mode::kNothink;
  throw DataError("unknown mode: " + std::string(s));
}

void GenerationRequest::validate() const {
  if (max_new_tokens < 1) throw InvalidArgument("max_new_tokens must be >= 1");
  if (prompt.trace_context && mode != Mode::kNothink) {
    throw InvalidArgument("trace context is only allowed on nothink requests");
  }
  if (prompt.trace_tokens < 0) throw InvalidArgument("trace_tokens must be >= 0");
}

void to_json(nlohmann::json& j, const GenerationOutcome& o) {
  j = nlohmann::json{{"text", o.text},
                     {"tokens_generated", o.tokens_generated},
                     {"prefill_tokens", o.prefill_tokens},
                     {"stop_reason", to_string(o.stop_reason)},
                     {"tokens_estimated", o.tokens_estimated},
                     {"retries", o.retries}};
  if (o.correct_latent) j["correct_latent"] = *o.correct_latent;
}

}  // namespace thinkbudget
