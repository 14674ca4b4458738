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

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>

#include "json.hpp"
#include "thinkbudget/backend.h"

namespace thinkbudget {

struct EndpointConfig {
  enum class Toggle { kExtensionField, kSystemDirective };
  enum class TraceTemplate { kAssistantTurn, kUserSegment };

  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string auth_env_var;  // empty: no Authorization header
  std::string model;
  Toggle toggle = Toggle::kExtensionField;
  // Dotted path of the boolean set to true for think and false for nothink.
  std::string extension_field = "chat_template_kwargs.enable_thinking";
  std::string think_directive = "/think";
  std::string nothink_directive = "/no_think";
  TraceTemplate trace_template = TraceTemplate::kAssistantTurn;
  double timeout_seconds = 600.0;
  int max_retries = 4;
  int backoff_initial_ms = 500;
  double backoff_multiplier = 2.0;
  int in_flight_bound = 8;
  double temperature = 0.0;

  void validate() const;
};

// Chat-completions request body for `req` (exposed for tests).
nlohmann::json build_chat_request(const GenerationRequest& req, const EndpointConfig& cfg);

// Maps a successful response body to an outcome. Throws BackendError(kFatal)
// on protocol violations.
GenerationOutcome parse_chat_response(const nlohmann::json& body, const GenerationRequest& req);

// whitespace token count * 1.3, rounded up.
std::int64_t estimate_tokens(std::string_view text);

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(EndpointConfig config);

  GenerationOutcome generate(const GenerationRequest& request) override;
  int max_in_flight() const override { return config_.in_flight_bound; }

  int peak_in_flight() const { return peak_.load(); }

 private:
  EndpointConfig config_;
  std::string scheme_host_port_;
  std::string path_prefix_;
  std::string auth_header_;

  std::mutex mu_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  std::atomic<int> peak_{0};
};

GenerationOutcome remote_generate(const GenerationRequest& request, const EndpointConfig& config);

void to_json(nlohmann::json& j, const EndpointConfig& c);
void from_json(const nlohmann::json& j, EndpointConfig& c);

}  // namespace thinkbudget
