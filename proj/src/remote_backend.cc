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

#include "thinkbudget/remote_backend.h"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "thinkbudget/error.h"

namespace thinkbudget {
namespace {

constexpr const char* kExtractInstruction =
    "Based on the reasoning above, state the final answer only, in the form \\boxed{answer}.";
constexpr const char* kRetryInstruction =
    "Respond with nothing except the final answer wrapped in \\boxed{}.";

void set_dotted(nlohmann::json& body, const std::string& path, bool value) {
  nlohmann::json* node = &body;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw InvalidArgument("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl s;
  s.scheme_host_port = url.substr(0, path_start);
  s.path_prefix = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!s.path_prefix.empty() && s.path_prefix.back() == '/') s.path_prefix.pop_back();
  return s;
}

const char* toggle_name(EndpointConfig::Toggle t) {
  return t == EndpointConfig::Toggle::kExtensionField ? "extension_field" : "system_directive";
}

const char* template_name(EndpointConfig::TraceTemplate t) {
  return t == EndpointConfig::TraceTemplate::kAssistantTurn ? "assistant_turn" : "user_segment";
}

}  // namespace

void EndpointConfig::validate() const {
  split_url(base_url);
  if (model.empty()) throw InvalidArgument("endpoint model name is required");
  if (max_retries < 0) throw InvalidArgument("max_retries must be >= 0");
  if (in_flight_bound < 1) throw InvalidArgument("in_flight_bound must be >= 1");
  if (!(timeout_seconds > 0)) throw InvalidArgument("timeout_seconds must be > 0");
  if (backoff_initial_ms < 0 || !(backoff_multiplier >= 1.0)) {
    throw InvalidArgument("invalid backoff settings");
  }
}

nlohmann::json build_chat_request(const GenerationRequest& req, const EndpointConfig& cfg) {
  const bool think = req.mode == Mode::kThink;
  std::string system = req.prompt.system;
  if (cfg.toggle == EndpointConfig::Toggle::kSystemDirective) {
    const std::string& d = think ? cfg.think_directive : cfg.nothink_directive;
    system = system.empty() ? d : system + "\n" + d;
  }
  if (req.attempt > 0) system = system.empty() ? kRetryInstruction : system + "\n" + kRetryInstruction;

  std::string question = req.prompt.question;
  if (req.prompt.hint) {
    question = "A previous attempt concluded the answer is " + *req.prompt.hint +
               ". Verify or correct it.\n\n" + question;
  }

  nlohmann::json messages = nlohmann::json::array();
  if (!system.empty()) messages.push_back({{"role", "system"}, {"content", system}});
  if (req.prompt.trace_context) {
    if (cfg.trace_template == EndpointConfig::TraceTemplate::kAssistantTurn) {
      messages.push_back({{"role", "user"}, {"content", question}});
      messages.push_back({{"role", "assistant"}, {"content", *req.prompt.trace_context}});
      messages.push_back({{"role", "user"}, {"content", kExtractInstruction}});
    } else {
      messages.push_back({{"role", "user"},
                          {"content", question + "\n\nReasoning so far:\n" +
                                          *req.prompt.trace_context + "\n\n" + kExtractInstruction}});
    }
  } else {
    messages.push_back({{"role", "user"}, {"content", question}});
  }

  nlohmann::json body{{"model", cfg.model},
                      {"messages", messages},
                      {"max_tokens", req.max_new_tokens},
                      {"temperature", cfg.temperature},
                      {"seed", req.seed}};
  if (cfg.toggle == EndpointConfig::Toggle::kExtensionField) set_dotted(body, cfg.extension_field, think);
  return body;
}

std::int64_t estimate_tokens(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::int64_t words = 0;
  for (std::string w; in >> w;) ++words;
  return static_cast<std::int64_t>(std::ceil(static_cast<double>(words) * 1.3));
}

GenerationOutcome parse_chat_response(const nlohmann::json& body, const GenerationRequest& req) {
  if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
      body["choices"].empty()) {
    throw BackendError(BackendError::Kind::kFatal, "response has no choices", req.question_id);
  }
  const auto& choice = body["choices"][0];
  GenerationOutcome out;
  if (choice.contains("message") && choice["message"].is_object()) {
    const auto& msg = choice["message"];
    std::string reasoning;
    for (const char* key : {"reasoning_content", "reasoning"}) {
      if (msg.contains(key) && msg[key].is_string()) {
        reasoning = msg[key].get<std::string>();
        break;
      }
    }
    const std::string content =
        msg.contains("content") && msg["content"].is_string() ? msg["content"].get<std::string>() : "";
    out.text = reasoning.empty() ? content : "<think>\n" + reasoning + "\n</think>\n" + content;
  } else if (choice.contains("text") && choice["text"].is_string()) {
    out.text = choice["text"].get<std::string>();
  } else {
    throw BackendError(BackendError::Kind::kFatal, "choice has no message", req.question_id);
  }

  const std::string finish = choice.value("finish_reason", std::string("stop"));
  out.stop_reason = finish == "length" ? StopReason::kBudgetHit : StopReason::kNatural;

  if (body.contains("usage") && body["usage"].is_object() &&
      body["usage"].contains("completion_tokens") && body["usage"]["completion_tokens"].is_number()) {
    out.tokens_generated = body["usage"]["completion_tokens"].get<std::int64_t>();
  } else {
    out.tokens_generated = estimate_tokens(out.text);
    out.tokens_estimated = true;
  }
  // Keep the outcome invariants even when the server's count disagrees.
  if (out.stop_reason == StopReason::kBudgetHit || out.tokens_generated > req.max_new_tokens) {
    out.tokens_generated = req.max_new_tokens;
    out.stop_reason = StopReason::kBudgetHit;
  }
  out.prefill_tokens = req.prompt.trace_context ? req.prompt.trace_tokens : 0;
  return out;
}

RemoteBackend::RemoteBackend(EndpointConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto split = split_url(config_.base_url);
  scheme_host_port_ = split.scheme_host_port;
  path_prefix_ = split.path_prefix;
  if (!config_.auth_env_var.empty()) {
    const char* token = std::getenv(config_.auth_env_var.c_str());
    if (token == nullptr) {
      throw InvalidArgument("auth environment variable " + config_.auth_env_var + " is not set");
    }
    auth_header_ = std::string("Bearer ") + token;
  }
}

GenerationOutcome RemoteBackend::generate(const GenerationRequest& req) {
  req.validate();
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return in_flight_ < config_.in_flight_bound; });
    ++in_flight_;
    int peak = peak_.load();
    while (in_flight_ > peak && !peak_.compare_exchange_weak(peak, in_flight_)) {
    }
  }
  struct Release {
    RemoteBackend* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  const std::string body = build_chat_request(req, config_).dump();
  httplib::Headers headers;
  if (!auth_header_.empty()) headers.emplace("Authorization", auth_header_);

  const auto timeout_s = static_cast<time_t>(config_.timeout_seconds);
  const auto timeout_us = static_cast<time_t>(
      (config_.timeout_seconds - static_cast<double>(timeout_s)) * 1e6);
  double backoff_ms = config_.backoff_initial_ms;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long>(backoff_ms)));
      backoff_ms *= config_.backoff_multiplier;
    }
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout_s, timeout_us);
    client.set_read_timeout(timeout_s, timeout_us);
    client.set_write_timeout(timeout_s, timeout_us);
    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status >= 400) {
      throw BackendError(BackendError::Kind::kFatal,
                         "HTTP " + std::to_string(res->status) + ": " + res->body, req.question_id);
    }
    nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
      throw BackendError(BackendError::Kind::kFatal, "response is not JSON", req.question_id);
    }
    GenerationOutcome out = parse_chat_response(parsed, req);
    out.retries = attempt;
    return out;
  }
  throw BackendError(BackendError::Kind::kRetryable,
                     "giving up after " + std::to_string(config_.max_retries) +
                         " retries: " + last_error,
                     req.question_id);
}

GenerationOutcome remote_generate(const GenerationRequest& request, const EndpointConfig& config) {
  RemoteBackend backend(config);
  return backend.generate(request);
}

void to_json(nlohmann::json& j, const EndpointConfig& c) {
  j = nlohmann::json{{"base_url", c.base_url},
                     {"auth_env_var", c.auth_env_var},
                     {"model", c.model},
                     {"toggle", toggle_name(c.toggle)},
                     {"extension_field", c.extension_field},
                     {"think_directive", c.think_directive},
                     {"nothink_directive", c.nothink_directive},
                     {"trace_template", template_name(c.trace_template)},
                     {"timeout_seconds", c.timeout_seconds},
                     {"max_retries", c.max_retries},
                     {"backoff_initial_ms", c.backoff_initial_ms},
                     {"backoff_multiplier", c.backoff_multiplier},
                     {"in_flight_bound", c.in_flight_bound},
                     {"temperature", c.temperature}};
}

void from_json(const nlohmann::json& j, EndpointConfig& c) {
  c = EndpointConfig{};
  c.base_url = j.value("base_url", c.base_url);
  c.auth_env_var = j.value("auth_env_var", c.auth_env_var);
  c.model = j.value("model", c.model);
  const auto toggle = j.value("toggle", std::string(toggle_name(c.toggle)));
  if (toggle == "extension_field") {
    c.toggle = EndpointConfig::Toggle::kExtensionField;
  } else if (toggle == "system_directive") {
    c.toggle = EndpointConfig::Toggle::kSystemDirective;
  } else {
    throw DataError("unknown mode toggle: " + toggle);
  }
  c.extension_field = j.value("extension_field", c.extension_field);
  c.think_directive = j.value("think_directive", c.think_directive);
  c.nothink_directive = j.value("nothink_directive", c.nothink_directive);
  const auto tmpl = j.value("trace_template", std::string(template_name(c.trace_template)));
  if (tmpl == "assistant_turn") {
    c.trace_template = EndpointConfig::TraceTemplate::kAssistantTurn;
  } else if (tmpl == "user_segment") {
    c.trace_template = EndpointConfig::TraceTemplate::kUserSegment;
  } else {
    throw DataError("unknown trace template: " + tmpl);
  }
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_retries = j.value("max_retries", c.max_retries);
  c.backoff_initial_ms = j.value("backoff_initial_ms", c.backoff_initial_ms);
  c.backoff_multiplier = j.value("backoff_multiplier", c.backoff_multiplier);
  c.in_flight_bound = j.value("in_flight_bound", c.in_flight_bound);
  c.temperature = j.value("temperature", c.temperature);
}

}  // namespace thinkbudget
