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

#include "thinkbudget/sim_backend.h"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "thinkbudget/error.h"
#include "thinkbudget/prf.h"
#include "thinkbudget/stats.h"

namespace thinkbudget {
namespace {

// Per-sample stream counters.
enum Counter : std::uint64_t {
  kChainLength = 0,
  kThinkNoise = 1,
  kNothinkNoise = 2,
  kResidual = 3,
  kNothinkLength = 4,
  kNothinkResidual = 5,
  kDerivable = 6,
  kFormatMiss = 7,
  kAdherence = 8,
  kWrongThink = 20,
  kWrongNothink = 21,
  kWrongExtract = 22,
  kWrongResidual = 23,
  kDistractorBase = 100,
};

// Question-level stream counters.
enum QuestionCounter : std::uint64_t {
  kDifficulty = 0,
  kGold = 1,
};

constexpr std::uint64_t kHintSalt = 0x68696e74ULL;
constexpr std::uint64_t kAttemptSalt = 0x61747470ULL;

void check_probability(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument(std::string(name) + " must be in [0, 1]");
}

std::uint64_t question_key(std::uint64_t key_seed, std::string_view question_id) {
  return prf::combine(key_seed, prf::hash_string(question_id));
}

std::uint64_t sample_key(std::uint64_t key_seed, std::string_view question_id,
                         std::uint64_t seed) {
  return prf::combine(question_key(key_seed, question_id), seed);
}

std::string format_number(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    return std::to_string(static_cast<long long>(v));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// j-th wrong answer: gold +1, -1, +2, -2, ... for numeric golds.
std::string wrong_answer(const std::string& gold, int j) {
  const int mag = j / 2 + 1;
  const int off = (j % 2 == 0) ? mag : -mag;
  if (auto v = parse_numeric(gold)) return format_number(*v + off);
  return gold + "+" + std::to_string(j + 1);
}

std::string pick_wrong(const std::string& gold, const SimModelConfig& c, const prf::Stream& s,
                       std::uint64_t counter) {
  const int j = std::min(c.wrong_pool - 1,
                         static_cast<int>(s.uniform(counter) * static_cast<double>(c.wrong_pool)));
  return wrong_answer(gold, j);
}

// Numbers in [2, 999] that cannot be mistaken for the gold.
std::string distractor(const std::string& gold, const prf::Stream& s, std::uint64_t counter) {
  for (std::uint64_t k = 0;; ++k) {
    const auto v = 2 + static_cast<long long>(s.bits(counter * 16 + k) % 998);
    std::string d = std::to_string(v);
    if (!answers_equivalent(d, gold)) return d;
  }
}

std::string final_marker(const std::string& answer, AnswerFormat f) {
  return f == AnswerFormat::kBoxed ? "\\boxed{" + answer + "}" : "#### " + answer;
}

std::string scratch_work(const std::string& gold, const SimModelConfig& c, const prf::Stream& s,
                         std::uint64_t base) {
  std::string t;
  for (int i = 0; i < c.distractor_count; ++i) {
    t += "Step " + std::to_string(i + 1) + " gives " +
         distractor(gold, s, kDistractorBase + base + static_cast<std::uint64_t>(i)) + ". ";
  }
  return t;
}

nlohmann::json knots_json(const std::vector<CurveStep>& knots) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& k : knots) a.push_back({{"t", k.t}, {"F", k.F}});
  return a;
}

std::vector<CurveStep> knots_from_json(const nlohmann::json& j) {
  std::vector<CurveStep> knots;
  for (const auto& k : j) knots.push_back({k.at("t").get<std::int64_t>(), k.at("F").get<double>()});
  return knots;
}

double law_param(const nlohmann::json& j, const char* key) { return j.at(key).get<double>(); }

}  // namespace

LengthLaw LengthLaw::lognormal(double mu, double sigma) {
  LengthLaw l;
  l.family = Family::kLognormal;
  l.p1 = mu;
  l.p2 = sigma;
  return l;
}

LengthLaw LengthLaw::weibull(double shape, double scale) {
  LengthLaw l;
  l.family = Family::kWeibull;
  l.p1 = shape;
  l.p2 = scale;
  return l;
}

LengthLaw LengthLaw::pareto(double alpha, double x_m) {
  LengthLaw l;
  l.family = Family::kPareto;
  l.p1 = alpha;
  l.p2 = x_m;
  return l;
}

LengthLaw LengthLaw::empirical(std::vector<CurveStep> knots) {
  LengthLaw l;
  l.family = Family::kEmpirical;
  l.knots = std::move(knots);
  return l;
}

void LengthLaw::validate() const {
  if (max_tokens < 1) throw InvalidArgument("max_tokens must be >= 1");
  switch (family) {
    case Family::kLognormal:
      if (!(p2 > 0.0)) throw InvalidArgument("lognormal sigma must be > 0");
      break;
    case Family::kWeibull:
    case Family::kPareto:
      if (!(p1 > 0.0 && p2 > 0.0)) throw InvalidArgument("law parameters must be > 0");
      break;
    case Family::kEmpirical:
      if (knots.empty()) throw InvalidArgument("empirical law needs knots");
      for (std::size_t i = 0; i < knots.size(); ++i) {
        check_probability(knots[i].F, "knot F");
        if (knots[i].t < 1) throw InvalidArgument("knot t must be >= 1");
        if (i > 0 && (knots[i].t <= knots[i - 1].t || knots[i].F < knots[i - 1].F)) {
          throw InvalidArgument("knots must increase in t and not decrease in F");
        }
      }
      if (knots.back().t > max_tokens) throw InvalidArgument("knot beyond max_tokens");
      break;
  }
}

double LengthLaw::cdf(double t) const {
  if (t >= static_cast<double>(max_tokens)) return 1.0;
  if (t <= 0.0) return 0.0;
  switch (family) {
    case Family::kLognormal:
      return normal_cdf((std::log(t) - p1) / p2);
    case Family::kWeibull:
      return 1.0 - std::exp(-std::pow(t / p2, p1));
    case Family::kPareto:
      return t < p2 ? 0.0 : 1.0 - std::pow(p2 / t, p1);
    case Family::kEmpirical: {
      double t0 = 0.0;
      double f0 = 0.0;
      for (const auto& k : knots) {
        const auto kt = static_cast<double>(k.t);
        if (t <= kt) return f0 + (k.F - f0) * (t - t0) / (kt - t0);
        t0 = kt;
        f0 = k.F;
      }
      return f0;
    }
  }
  return 0.0;
}

double LengthLaw::inverse_cdf(double u) const {
  switch (family) {
    case Family::kLognormal:
      return std::exp(p1 + p2 * normal_quantile(u));
    case Family::kWeibull:
      return p2 * std::pow(-std::log1p(-u), 1.0 / p1);
    case Family::kPareto:
      return p2 * std::pow(1.0 - u, -1.0 / p1);
    case Family::kEmpirical: {
      double t0 = 0.0;
      double f0 = 0.0;
      for (const auto& k : knots) {
        if (u <= k.F && k.F > f0) {
          return t0 + (static_cast<double>(k.t) - t0) * (u - f0) / (k.F - f0);
        }
        t0 = static_cast<double>(k.t);
        f0 = k.F;
      }
      return static_cast<double>(max_tokens);
    }
  }
  return 1.0;
}

std::int64_t LengthLaw::sample(double u) const {
  const double x = inverse_cdf(u);
  if (!(x < static_cast<double>(max_tokens))) return max_tokens;
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(x)));
}

void SimModelConfig::validate() const {
  chain_length_law.validate();
  nothink_length_law.validate();
  check_probability(alpha_c, "alpha_c");
  check_probability(alpha_t_base, "alpha_t_base");
  check_probability(nothink_accuracy, "nothink_accuracy");
  check_probability(nothink_truncated_accuracy, "nothink_truncated_accuracy");
  check_probability(pi_eta, "pi_eta");
  check_probability(epsilon, "epsilon");
  check_probability(alpha_c_plus, "alpha_c_plus");
  check_probability(difficulty_correlation, "difficulty_correlation");
  check_probability(hint_adherence, "hint_adherence");
  check_probability(extract_format_miss, "extract_format_miss");
  if (distractor_count < 0) throw InvalidArgument("distractor_count must be >= 0");
  if (wrong_pool < 1) throw InvalidArgument("wrong_pool must be >= 1");
  if (gold_max < gold_min) throw InvalidArgument("empty gold answer space");
  if (extract_length < 1) throw InvalidArgument("extract_length must be >= 1");
  for (std::size_t i = 0; i < alpha_t_by_budget.size(); ++i) {
    check_probability(alpha_t_by_budget[i].F, "alpha_t_by_budget value");
    if (i > 0 && alpha_t_by_budget[i].t <= alpha_t_by_budget[i - 1].t) {
      throw InvalidArgument("alpha_t_by_budget budgets must increase");
    }
  }
}

double SimModelConfig::alpha_t_at(std::int64_t budget) const {
  const auto& k = alpha_t_by_budget;
  if (k.empty()) return alpha_t_base;
  if (budget <= k.front().t) return k.front().F;
  for (std::size_t i = 1; i < k.size(); ++i) {
    if (budget <= k[i].t) {
      const double w = static_cast<double>(budget - k[i - 1].t) / static_cast<double>(k[i].t - k[i - 1].t);
      return k[i - 1].F + w * (k[i].F - k[i - 1].F);
    }
  }
  return k.back().F;
}

SimPopulation SimPopulation::single(SimModelConfig config, std::uint64_t seed) {
  SimPopulation p;
  p.components.push_back({"default", 1.0, std::move(config)});
  p.seed = seed;
  return p;
}

void SimPopulation::validate() const {
  if (components.empty()) throw InvalidArgument("population needs at least one component");
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0)) throw InvalidArgument("component weights must be > 0");
    c.config.validate();
    total += c.weight;
  }
  if (!(total > 0.0)) throw InvalidArgument("component weights must sum to > 0");
}

std::size_t SimPopulation::component_of(std::string_view question_id) const {
  if (components.size() == 1) return 0;
  double total = 0.0;
  for (const auto& c : components) total += c.weight;
  const double u =
      prf::to_unit(prf::combine(seed, prf::hash_string(question_id), 0x636f6d70ULL)) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < components.size(); ++i) {
    acc += components[i].weight;
    if (u < acc) return i;
  }
  return components.size() - 1;
}

SimLatents sim_question_latents(std::string_view question_id, std::uint64_t seed,
                                const SimModelConfig& c, std::uint64_t key_seed) {
  const prf::Stream q(question_key(key_seed, question_id));
  const prf::Stream s(sample_key(key_seed, question_id, seed));
  SimLatents lat;
  lat.difficulty = normal_quantile(q.uniform(kDifficulty));
  const double rho = c.difficulty_correlation;
  auto coin = [&](std::uint64_t counter, double p) {
    const double x = std::sqrt(rho) * lat.difficulty +
                     std::sqrt(1.0 - rho) * normal_quantile(s.uniform(counter));
    return normal_cdf(x) < p;
  };
  lat.chain_length = c.chain_length_law.sample(s.uniform(kChainLength));
  lat.think_correct = coin(kThinkNoise, c.alpha_c);
  lat.nothink_correct = coin(kNothinkNoise, c.nothink_accuracy);
  lat.residual_u = s.uniform(kResidual);
  lat.nothink_length = c.nothink_length_law.sample(s.uniform(kNothinkLength));
  lat.nothink_residual_correct = s.uniform(kNothinkResidual) < c.nothink_truncated_accuracy;
  lat.derivable = s.uniform(kDerivable) < c.pi_eta;
  return lat;
}

std::string sim_synthetic_gold(std::string_view question_id, const SimModelConfig& c,
                               std::uint64_t key_seed) {
  const prf::Stream q(question_key(key_seed, question_id));
  const auto span = static_cast<std::uint64_t>(c.gold_max - c.gold_min) + 1;
  return std::to_string(c.gold_min + static_cast<std::int64_t>(q.bits(kGold) % span));
}

SimBackend::SimBackend(SimPopulation population,
                       std::unordered_map<std::string, std::string> answer_key,
                       int max_in_flight)
    : population_(std::move(population)),
      answer_key_(std::move(answer_key)),
      max_in_flight_(std::max(1, max_in_flight)) {
  population_.validate();
}

std::string SimBackend::gold_for(std::string_view question_id) const {
  if (auto it = answer_key_.find(std::string(question_id)); it != answer_key_.end()) {
    return it->second;
  }
  const auto& comp = population_.components[population_.component_of(question_id)];
  return sim_synthetic_gold(question_id, comp.config, population_.seed);
}

GenerationOutcome SimBackend::generate(const GenerationRequest& req) {
  req.validate();
  const auto& c = population_.components[population_.component_of(req.question_id)].config;
  const std::string gold = gold_for(req.question_id);
  const std::int64_t b = req.max_new_tokens;

  std::uint64_t seed = req.seed;
  if (req.prompt.hint) seed = prf::combine(seed, kHintSalt, prf::hash_string(*req.prompt.hint));
  const SimLatents lat = sim_question_latents(req.question_id, seed, c, population_.seed);
  const prf::Stream s(sample_key(population_.seed, req.question_id, seed));
  const bool adheres = req.prompt.hint && s.uniform(kAdherence) < c.hint_adherence;

  GenerationOutcome out;
  auto finish = [&](std::string text, std::int64_t tokens, const std::string& answer) {
    out.text = std::move(text);
    out.tokens_generated = tokens;
    out.stop_reason = tokens < b ? StopReason::kNatural : StopReason::kBudgetHit;
    out.correct_latent = !answer.empty() && answers_equivalent(answer, gold);
  };

  if (req.mode == Mode::kNothink && req.prompt.trace_context) {
    out.prefill_tokens = req.prompt.trace_tokens;
    if (c.extract_length >= b) {
      finish("Reading the reasoning trace to", b, "");
      return out;
    }
    std::string answer = adheres         ? *req.prompt.hint
                         : lat.derivable ? gold
                                         : pick_wrong(gold, c, s, kWrongExtract);
    const std::uint64_t miss_counter =
        req.attempt == 0 ? std::uint64_t{kFormatMiss}
                         : prf::combine(kFormatMiss, kAttemptSalt,
                                        static_cast<std::uint64_t>(req.attempt));
    if (s.uniform(miss_counter) < c.extract_format_miss) {
      const std::string d = distractor(gold, s, kDistractorBase + 50);
      finish("The trace points to " + answer + ", rechecking step " + d, c.extract_length, d);
      return out;
    }
    finish(final_marker(answer, c.answer_format), c.extract_length, answer);
    return out;
  }

  if (req.mode == Mode::kNothink) {
    if (lat.nothink_length < b) {
      const std::string answer = lat.nothink_correct ? gold : pick_wrong(gold, c, s, kWrongNothink);
      finish("The answer is " + answer + ".\n" + final_marker(answer, c.answer_format),
             lat.nothink_length, answer);
    } else {
      const std::string last =
          lat.nothink_residual_correct ? gold : distractor(gold, s, kDistractorBase + 60);
      finish(scratch_work(gold, c, s, 30) + "So far " + last, b, last);
    }
    return out;
  }

  // Think mode.
  if (lat.chain_length < b) {
    const std::string answer = adheres            ? *req.prompt.hint
                               : lat.think_correct ? gold
                                                   : pick_wrong(gold, c, s, kWrongThink);
    finish("<think>\n" + scratch_work(gold, c, s, 0) + "\n</think>\nThe answer is " + answer +
               ".\n" + final_marker(answer, c.answer_format),
           lat.chain_length, answer);
  } else {
    const std::string last =
        lat.residual_u < c.alpha_t_at(b) ? gold : distractor(gold, s, kWrongResidual + kDistractorBase);
    finish("<think>\n" + scratch_work(gold, c, s, 0) + "Next we get " + last, b, last);
  }
  return out;
}

// ---- JSON ----------------------------------------------------------------

void to_json(nlohmann::json& j, const LengthLaw& l) {
  switch (l.family) {
    case LengthLaw::Family::kLognormal:
      j = {{"family", "lognormal"}, {"mu", l.p1}, {"sigma", l.p2}};
      break;
    case LengthLaw::Family::kWeibull:
      j = {{"family", "weibull"}, {"shape", l.p1}, {"scale", l.p2}};
      break;
    case LengthLaw::Family::kPareto:
      j = {{"family", "pareto"}, {"alpha", l.p1}, {"x_m", l.p2}};
      break;
    case LengthLaw::Family::kEmpirical:
      j = {{"family", "empirical"}, {"knots", knots_json(l.knots)}};
      break;
  }
  j["max_tokens"] = l.max_tokens;
}

void from_json(const nlohmann::json& j, LengthLaw& l) {
  const auto family = j.at("family").get<std::string>();
  if (family == "lognormal") {
    l = LengthLaw::lognormal(law_param(j, "mu"), law_param(j, "sigma"));
  } else if (family == "weibull") {
    l = LengthLaw::weibull(law_param(j, "shape"), law_param(j, "scale"));
  } else if (family == "pareto") {
    l = LengthLaw::pareto(law_param(j, "alpha"), law_param(j, "x_m"));
  } else if (family == "empirical") {
    l = LengthLaw::empirical(knots_from_json(j.at("knots")));
  } else {
    throw DataError("unknown length law family: " + family);
  }
  if (j.contains("max_tokens")) l.max_tokens = j.at("max_tokens").get<std::int64_t>();
}

void to_json(nlohmann::json& j, const SimModelConfig& c) {
  j = nlohmann::json{
      {"chain_length_law", c.chain_length_law},
      {"alpha_c", c.alpha_c},
      {"alpha_t_base", c.alpha_t_base},
      {"alpha_t_by_budget", knots_json(c.alpha_t_by_budget)},
      {"nothink_accuracy", c.nothink_accuracy},
      {"nothink_truncated_accuracy", c.nothink_truncated_accuracy},
      {"nothink_length_law", c.nothink_length_law},
      {"pi_eta", c.pi_eta},
      {"epsilon", c.epsilon},
      {"alpha_c_plus", c.alpha_c_plus},
      {"difficulty_correlation", c.difficulty_correlation},
      {"distractor_count", c.distractor_count},
      {"gold_answer_space", {{"min", c.gold_min}, {"max", c.gold_max}}},
      {"wrong_pool", c.wrong_pool},
      {"hint_adherence", c.hint_adherence},
      {"extract_length", c.extract_length},
      {"extract_format_miss", c.extract_format_miss},
      {"answer_format", c.answer_format == AnswerFormat::kBoxed ? "boxed" : "gsm8k"},
  };
}

void from_json(const nlohmann::json& j, SimModelConfig& c) {
  c = SimModelConfig{};
  if (j.contains("chain_length_law")) c.chain_length_law = j.at("chain_length_law").get<LengthLaw>();
  if (j.contains("nothink_length_law")) {
    c.nothink_length_law = j.at("nothink_length_law").get<LengthLaw>();
  }
  c.alpha_c = j.value("alpha_c", c.alpha_c);
  c.alpha_t_base = j.value("alpha_t_base", c.alpha_t_base);
  if (j.contains("alpha_t_by_budget")) c.alpha_t_by_budget = knots_from_json(j.at("alpha_t_by_budget"));
  c.nothink_accuracy = j.value("nothink_accuracy", c.nothink_accuracy);
  c.nothink_truncated_accuracy = j.value("nothink_truncated_accuracy", c.nothink_truncated_accuracy);
  c.pi_eta = j.value("pi_eta", c.pi_eta);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.alpha_c_plus = j.value("alpha_c_plus", c.alpha_c_plus);
  c.difficulty_correlation = j.value("difficulty_correlation", c.difficulty_correlation);
  c.distractor_count = j.value("distractor_count", c.distractor_count);
  if (j.contains("gold_answer_space")) {
    c.gold_min = j.at("gold_answer_space").value("min", c.gold_min);
    c.gold_max = j.at("gold_answer_space").value("max", c.gold_max);
  }
  c.wrong_pool = j.value("wrong_pool", c.wrong_pool);
  c.hint_adherence = j.value("hint_adherence", c.hint_adherence);
  c.extract_length = j.value("extract_length", c.extract_length);
  c.extract_format_miss = j.value("extract_format_miss", c.extract_format_miss);
  if (j.contains("answer_format")) {
    const auto f = j.at("answer_format").get<std::string>();
    if (f == "boxed") {
      c.answer_format = AnswerFormat::kBoxed;
    } else if (f == "gsm8k") {
      c.answer_format = AnswerFormat::kGsm8k;
    } else {
      throw DataError("unknown answer_format: " + f);
    }
  }
  c.validate();
}

void to_json(nlohmann::json& j, const SimPopulation& p) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : p.components) {
    comps.push_back({{"name", c.name}, {"weight", c.weight}, {"config", c.config}});
  }
  j = nlohmann::json{{"seed", p.seed}, {"mixture", comps}};
}

void from_json(const nlohmann::json& j, SimPopulation& p) {
  p = SimPopulation{};
  p.seed = j.value("seed", std::uint64_t{0});
  if (!j.contains("mixture")) {
    p.components.push_back({"default", 1.0, j.get<SimModelConfig>()});
  } else {
    for (const auto& c : j.at("mixture")) {
      p.components.push_back({c.value("name", std::string("component")), c.value("weight", 1.0),
                              c.at("config").get<SimModelConfig>()});
    }
  }
  p.validate();
}

}  // namespace thinkbudget
