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

// Deterministic simulated model. Every latent quantity of a generation is a
// pure function of (population seed, question id, request seed), drawn from
// a counter-based PRF, so a question's chain length is the same at every
// budget and results do not depend on call order or threading.
//
// Generation semantics for a request with budget b:
//   think:   chain length L; natural iff L < b (L tokens), else truncated at b.
//            Completed chains end in a final marker and are right with prob
//            alpha_c. Truncated chains carry intermediate numbers and no
//            marker; the last number is the gold with prob alpha_t(b).
//   nothink: answer length A; natural iff A < b, right with prob
//            nothink_accuracy; truncated answers end in the gold with prob
//            nothink_truncated_accuracy.
//   nothink + trace context (extraction pass): extract_length tokens;
//            right with prob pi_eta; with prob extract_format_miss the output
//            omits the marker and ends on a distractor.
// A hint makes the request a new generation (latents re-keyed on the hint);
// with prob hint_adherence its answer repeats the hint.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "thinkbudget/backend.h"
#include "thinkbudget/chainstats.h"

namespace thinkbudget {

struct LengthLaw {
  enum class Family { kLognormal, kWeibull, kPareto, kEmpirical };

  Family family = Family::kLognormal;
  double p1 = 6.0;  // lognormal mu | weibull shape k | pareto alpha
  double p2 = 1.0;  // lognormal sigma | weibull scale lambda | pareto x_m
  // Empirical law: piecewise-linear CDF through (0, 0) and these knots;
  // mass left above the last knot sits at max_tokens.
  std::vector<CurveStep> knots;
  std::int64_t max_tokens = std::int64_t{1} << 24;

  static LengthLaw lognormal(double mu, double sigma);
  static LengthLaw weibull(double shape, double scale);
  static LengthLaw pareto(double alpha, double x_m);
  static LengthLaw empirical(std::vector<CurveStep> knots);

  void validate() const;
  // Continuous CDF. The sampled integer length ceil(X) has P(L <= t) equal
  // to cdf(t) at every integer t >= 1.
  double cdf(double t) const;
  double inverse_cdf(double u) const;
  // max(1, ceil(inverse_cdf(u))), capped at max_tokens.
  std::int64_t sample(double u) const;
};

enum class AnswerFormat { kGsm8k, kBoxed };

struct SimModelConfig {
  LengthLaw chain_length_law = LengthLaw::lognormal(6.3, 0.8);
  double alpha_c = 0.99;
  double alpha_t_base = 0.3;
  // Optional (budget, alpha_t) knots, linearly interpolated and clamped at
  // the ends; overrides alpha_t_base when present.
  std::vector<CurveStep> alpha_t_by_budget;
  double nothink_accuracy = 0.9;
  double nothink_truncated_accuracy = 0.3;
  LengthLaw nothink_length_law = LengthLaw::lognormal(4.8, 0.5);
  // Extraction-pass accuracy on a truncated trace.
  double pi_eta = 0.7;
  // Declared modal ground truth. The continuation residual the simulator
  // realizes is alpha_t(b).
  double epsilon = 0.3;
  double alpha_c_plus = 0.95;
  // Correlation of the think and nothink correctness coins through a shared
  // per-question difficulty latent (Gaussian copula).
  double difficulty_correlation = 0.5;
  int distractor_count = 3;
  std::int64_t gold_min = 1;
  std::int64_t gold_max = 1000;
  // Number of distinct wrong answers a question can produce.
  int wrong_pool = 3;
  double hint_adherence = 0.6;
  std::int64_t extract_length = 24;
  double extract_format_miss = 0.0;
  AnswerFormat answer_format = AnswerFormat::kGsm8k;

  void validate() const;
  double alpha_t_at(std::int64_t budget) const;
};

struct SimPopulation {
  struct Component {
    std::string name;
    double weight = 1.0;
    SimModelConfig config;
  };
  std::vector<Component> components;
  std::uint64_t seed = 0;

  static SimPopulation single(SimModelConfig config, std::uint64_t seed = 0);
  void validate() const;
  // Question-level choice, independent of the request seed.
  std::size_t component_of(std::string_view question_id) const;
};

struct SimLatents {
  std::int64_t chain_length = 0;
  bool think_correct = false;
  double residual_u = 1.0;  // truncated chain ends in gold iff < alpha_t(b)
  bool nothink_correct = false;
  std::int64_t nothink_length = 0;
  bool nothink_residual_correct = false;
  bool derivable = false;  // extraction coin
  double difficulty = 0.0;
};

// `key_seed` is mixed in ahead of the question id (the population seed).
SimLatents sim_question_latents(std::string_view question_id, std::uint64_t seed,
                                const SimModelConfig& config, std::uint64_t key_seed = 0);

// Synthetic gold for a question under a population without an answer key.
std::string sim_synthetic_gold(std::string_view question_id, const SimModelConfig& config,
                               std::uint64_t key_seed = 0);

class SimBackend final : public Backend {
 public:
  explicit SimBackend(SimPopulation population,
                      std::unordered_map<std::string, std::string> answer_key = {},
                      int max_in_flight = 64);

  GenerationOutcome generate(const GenerationRequest& request) override;
  int max_in_flight() const override { return max_in_flight_; }

  const SimPopulation& population() const { return population_; }
  std::string gold_for(std::string_view question_id) const;

 private:
  SimPopulation population_;
  std::unordered_map<std::string, std::string> answer_key_;
  int max_in_flight_;
};

void to_json(nlohmann::json& j, const LengthLaw& l);
void from_json(const nlohmann::json& j, LengthLaw& l);
void to_json(nlohmann::json& j, const SimModelConfig& c);
void from_json(const nlohmann::json& j, SimModelConfig& c);
// Accepts a bare SimModelConfig object or {"seed": s, "mixture": [...]}.
void to_json(nlohmann::json& j, const SimPopulation& p);
void from_json(const nlohmann::json& j, SimPopulation& p);

}  // namespace thinkbudget
