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
#include <string>
#include <vector>

#include "doctest.h"
#include "thinkbudget/chainstats.h"
#include "thinkbudget/error.h"
#include "thinkbudget/extraction.h"
#include "thinkbudget/presets.h"

using namespace thinkbudget;

namespace {

std::string qid(int i) { return "q" + std::to_string(i); }

GenerationRequest think(const std::string& id, std::int64_t budget, std::uint64_t seed = 42) {
  GenerationRequest r;
  r.question_id = id;
  r.prompt.question = "question " + id;
  r.mode = Mode::kThink;
  r.max_new_tokens = budget;
  r.seed = seed;
  return r;
}

GenerationRequest nothink(const std::string& id, std::int64_t budget, std::uint64_t seed = 42) {
  auto r = think(id, budget, seed);
  r.mode = Mode::kNothink;
  return r;
}

GenerationRequest extract(const GenerationRequest& from, const GenerationOutcome& trace,
                          std::int64_t budget) {
  auto r = nothink(from.question_id, budget, from.seed);
  r.prompt.trace_context = trace.text;
  r.prompt.trace_tokens = trace.tokens_generated;
  return r;
}

// Binomial frequency within k standard errors of p.
bool near(double hits, double n, double p, double k = 4.0) {
  return std::fabs(hits / n - p) <= k * std::sqrt(p * (1 - p) / n) + 1e-12;
}

SimModelConfig plain() {
  SimModelConfig c;
  c.chain_length_law = LengthLaw::lognormal(6.0, 0.6);
  c.alpha_c = 0.8;
  c.alpha_t_base = 0.25;
  c.nothink_accuracy = 0.7;
  c.nothink_length_law = LengthLaw::lognormal(4.5, 0.3);
  c.pi_eta = 0.6;
  return c;
}

}  // namespace

TEST_CASE("length laws") {
  SUBCASE("sampled integer length has cdf(t) at integers") {
    for (const auto& law : {LengthLaw::lognormal(6.0, 0.8), LengthLaw::weibull(0.8, 500),
                            LengthLaw::pareto(1.5, 100)}) {
      for (double u = 0.001; u < 1.0; u += 0.0173) {
        const auto l = law.sample(u);
        // ceil(X) <= t iff X <= t iff u <= cdf(t).
        CHECK(law.cdf(static_cast<double>(l)) >= u - 1e-12);
        if (l > 1) CHECK(law.cdf(static_cast<double>(l - 1)) < u + 1e-12);
      }
    }
  }
  SUBCASE("lognormal latents match the analytic cdf") {
    SimModelConfig c = plain();
    std::vector<std::int64_t> lengths;
    for (int i = 0; i < 100000; ++i) lengths.push_back(sim_question_latents(qid(i), 7, c).chain_length);
    std::sort(lengths.begin(), lengths.end());
    double worst = 0.0;
    for (std::int64_t t = 50; t < 3000; t += 10) {
      const auto k = std::upper_bound(lengths.begin(), lengths.end(), t) - lengths.begin();
      const double analytic = 0.5 * std::erfc(-(std::log(static_cast<double>(t)) - 6.0) / (0.6 * std::sqrt(2.0)));
      worst = std::max(worst, std::fabs(static_cast<double>(k) / lengths.size() - analytic));
    }
    CHECK(worst < 0.01);
  }
  SUBCASE("empirical law echoes its knots") {
    SimModelConfig c = plain();
    c.chain_length_law = LengthLaw::empirical({{100, 0.1}, {300, 0.6}, {1000, 0.9}});
    const int n = 100000;
    std::vector<int> counts(3, 0);
    for (int i = 0; i < n; ++i) {
      const auto l = sim_question_latents(qid(i), 3, c).chain_length;
      counts[0] += l <= 100;
      counts[1] += l <= 300;
      counts[2] += l <= 1000;
    }
    CHECK(near(counts[0], n, 0.1));
    CHECK(near(counts[1], n, 0.6));
    CHECK(near(counts[2], n, 0.9));
    // Leftover mass sits at max_tokens.
    CHECK(c.chain_length_law.sample(0.95) == c.chain_length_law.max_tokens);
  }
  CHECK_THROWS_AS(LengthLaw::lognormal(1.0, -1.0).validate(), InvalidArgument);
  CHECK_THROWS_AS(LengthLaw::empirical({{100, 0.5}, {50, 0.6}}).validate(), InvalidArgument);
}

TEST_CASE("latents are per question and fixed across budgets") {
  SimBackend sim(SimPopulation::single(plain(), 1));
  for (int i = 0; i < 200; ++i) {
    const auto l = sim_question_latents(qid(i), 42, plain(), 1).chain_length;
    const auto big = sim.generate(think(qid(i), l + 1));
    CHECK(big.tokens_generated == l);
    CHECK(big.stop_reason == StopReason::kNatural);
    const auto bigger = sim.generate(think(qid(i), l + 1000));
    CHECK(bigger.text == big.text);
    CHECK(bigger.correct_latent == big.correct_latent);
    if (l > 1) {
      const auto cut = sim.generate(think(qid(i), l));
      CHECK(cut.stop_reason == StopReason::kBudgetHit);
      CHECK(cut.tokens_generated == l);
    }
  }
}

TEST_CASE("generate is deterministic and order independent") {
  SimBackend a(SimPopulation::single(plain(), 9));
  SimBackend b(SimPopulation::single(plain(), 9));
  std::vector<GenerationOutcome> forward, backward(100);
  for (int i = 0; i < 100; ++i) forward.push_back(a.generate(think(qid(i), 400)));
  for (int i = 99; i >= 0; --i) backward[i] = b.generate(think(qid(i), 400));
  for (int i = 0; i < 100; ++i) {
    CHECK(forward[i].text == backward[i].text);
    CHECK(forward[i].tokens_generated == backward[i].tokens_generated);
  }
  // A different seed redraws the sample.
  int differ = 0;
  for (int i = 0; i < 100; ++i) differ += a.generate(think(qid(i), 400, 43)).text != forward[i].text;
  CHECK(differ > 50);
}

TEST_CASE("outcome invariants") {
  SimBackend sim(SimPopulation::single(plain(), 2));
  for (int i = 0; i < 2000; ++i) {
    for (std::int64_t b : {1, 16, 128, 400, 1500}) {
      for (auto req : {think(qid(i), b), nothink(qid(i), b)}) {
        const auto o = sim.generate(req);
        CHECK(o.tokens_generated <= b);
        if (o.stop_reason == StopReason::kBudgetHit) CHECK(o.tokens_generated == b);
        if (o.stop_reason == StopReason::kNatural) CHECK(o.tokens_generated < b);
      }
    }
  }
}

TEST_CASE("monte carlo frequencies") {
  SimBackend sim(SimPopulation::single(plain(), 4));
  const auto c = plain();
  const int n = 10000;
  const std::int64_t budget = 400;
  int natural = 0, natural_correct = 0, truncated = 0, extracted = 0, nt = 0, nt_correct = 0;
  for (int i = 0; i < n; ++i) {
    const auto req = think(qid(i), budget);
    const auto o = sim.generate(req);
    if (o.stop_reason == StopReason::kNatural) {
      ++natural;
      CHECK(has_final_marker(o.text));
      const auto ans = extract_answer(o.text);
      CHECK(ans.method == ExtractionMethod::kGsm8kMarker);
      CHECK(answers_equivalent(*ans.value, sim.gold_for(req.question_id)) == *o.correct_latent);
      natural_correct += *o.correct_latent;
    } else {
      ++truncated;
      CHECK_FALSE(has_final_marker(o.text));
      extracted += *sim.generate(extract(req, o, 128)).correct_latent;
    }
    const auto q = sim.generate(nothink(qid(i), 4096));
    if (q.stop_reason == StopReason::kNatural) {
      ++nt;
      nt_correct += *q.correct_latent;
    }
  }
  CHECK(natural > 1000);
  CHECK(truncated > 1000);
  CHECK(near(natural_correct, natural, c.alpha_c));
  CHECK(near(extracted, truncated, c.pi_eta));
  CHECK(nt == n);
  CHECK(near(nt_correct, nt, c.nothink_accuracy));
}

TEST_CASE("extraction pass accounting") {
  SimBackend sim(SimPopulation::single(plain(), 5));
  const auto req = think("q1", 16);
  const auto o = sim.generate(req);
  REQUIRE(o.stop_reason == StopReason::kBudgetHit);
  const auto e = sim.generate(extract(req, o, 128));
  CHECK(e.prefill_tokens == 16);
  CHECK(e.tokens_generated == plain().extract_length);
  CHECK(has_final_marker(e.text));
  // A window smaller than the extraction length produces nothing usable.
  const auto tiny = sim.generate(extract(req, o, 8));
  CHECK(tiny.stop_reason == StopReason::kBudgetHit);
  CHECK(extract_answer(tiny.text).method == ExtractionMethod::kNone);
}

TEST_CASE("gsm8k 8b preset") {
  SimBackend sim(SimPopulation::single(presets::gsm8k_8b(), 0));
  std::vector<ChainObservation> obs;
  const int n = 10000;
  int at512 = 0;
  for (int i = 0; i < n; ++i) {
    const auto o = sim.generate(think(qid(i), 2048));
    obs.push_back({o.tokens_generated, o.stop_reason == StopReason::kBudgetHit});
    at512 += o.tokens_generated < 512;
  }
  const auto km = km_estimate(obs);
  CHECK(std::llabs(quantile(km, 0.5) - 540) <= 15);
  CHECK(near(at512, n, 0.374));
  CHECK(near(cdf_at(km, 2047) * n, n, 0.93));
}

TEST_CASE("mixture populations") {
  SimPopulation pop;
  pop.seed = 3;
  auto easy = plain();
  easy.alpha_c = 1.0;
  auto hard = plain();
  hard.alpha_c = 0.0;
  pop.components = {{"easy", 3.0, easy}, {"hard", 1.0, hard}};
  int easy_count = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) easy_count += pop.component_of(qid(i)) == 0;
  CHECK(near(easy_count, n, 0.75));

  pop.components[0].weight = 0.0;
  CHECK_THROWS_AS(pop.validate(), InvalidArgument);
}

TEST_CASE("request validation") {
  SimBackend sim(SimPopulation::single(plain()));
  auto bad = think("q", 0);
  CHECK_THROWS_AS(sim.generate(bad), InvalidArgument);
  auto ctx = think("q", 100);
  ctx.prompt.trace_context = "trace";
  CHECK_THROWS_AS(sim.generate(ctx), InvalidArgument);
}

TEST_CASE("json") {
  auto c = presets::gsm8k_8b();
  const nlohmann::json j = c;
  const auto back = j.get<SimModelConfig>();
  CHECK(nlohmann::json(back) == j);

  const auto pop = nlohmann::json::parse(R"({
    "seed": 5,
    "mixture": [
      {"name": "a", "weight": 1, "config": {"alpha_c": 0.9}},
      {"name": "b", "weight": 2, "config": {"chain_length_law": {"family": "weibull", "shape": 1.2, "scale": 300}}}
    ]})").get<SimPopulation>();
  CHECK(pop.components.size() == 2);
  CHECK(pop.components[1].config.chain_length_law.family == LengthLaw::Family::kWeibull);
  CHECK(nlohmann::json(pop).get<SimPopulation>().components[0].config.alpha_c == 0.9);

  CHECK_THROWS_AS(nlohmann::json::parse(R"({"chain_length_law": {"family": "cauchy"}})").get<SimModelConfig>(),
                  DataError);
  CHECK_THROWS_AS(nlohmann::json::parse(R"({"alpha_c": 1.5})").get<SimModelConfig>(), InvalidArgument);
}
