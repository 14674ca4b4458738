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

#include "thinkbudget/diagnostics.h"

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "thinkbudget/error.h"
#include "thinkbudget/presets.h"

using namespace thinkbudget;

namespace {

double round1(double x) { return std::round(x * 10.0) / 10.0; }

// Eight-billion-parameter GSM8K operating point at b = 512.
DecompositionParams gsm8k_512() { return {0.374, 0.990, 0.318, 0.931}; }

// Twenty-seven-billion operating point at b = 4096 from raw counts.
DecompositionParams gsm8k_27b_4096() { return {147.0 / 200, 144.0 / 147, 31.0 / 53, 0.980}; }

// Analytic CDF tabulated at every integer up to t_max.
template <class Cdf>
SurvivalCurve tabulate(Cdf cdf, std::int64_t t_max) {
  std::vector<CurveStep> steps;
  double prev = 0.0;
  for (std::int64_t t = 1; t <= t_max; ++t) {
    const double f = std::max(prev, cdf(static_cast<double>(t)));
    steps.push_back({t, f});
    prev = f;
  }
  return SurvivalCurve::from_steps(std::move(steps));
}

double lognormal_cdf(double t, double mu, double sigma) {
  return 0.5 * std::erfc(-(std::log(t) - mu) / (sigma * std::sqrt(2.0)));
}

}  // namespace

TEST_CASE("predict_coupled_accuracy") {
  CHECK(round1(100 * predict_coupled_accuracy({0.374, 0.990, 0.318, {}})) == 56.9);
  CHECK(round1(100 * predict_coupled_accuracy({0.014, 1.0, 0.168, {}})) == 18.0);
  CHECK(round1(100 * predict_coupled_accuracy({0.178, 0.787, 0.365, {}})) == 44.0);
  CHECK_THROWS_AS(predict_coupled_accuracy({0.5, 0.3, 0.4, {}}), InvalidArgument);
  CHECK_THROWS_AS(predict_coupled_accuracy({1.2, 0.9, 0.4, {}}), InvalidArgument);

  // Affine in f_l with endpoints alpha_t and alpha_c.
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double at = u(rng), ac = at + (1.0 - at) * u(rng);
    CHECK(predict_coupled_accuracy({0.0, ac, at, {}}) == doctest::Approx(at).epsilon(1e-15));
    CHECK(predict_coupled_accuracy({1.0, ac, at, {}}) == doctest::Approx(ac).epsilon(1e-15));
    const double f1 = u(rng), f2 = u(rng), lam = u(rng);
    const double mid = predict_coupled_accuracy({lam * f1 + (1 - lam) * f2, ac, at, {}});
    const double chord = lam * predict_coupled_accuracy({f1, ac, at, {}}) +
                         (1 - lam) * predict_coupled_accuracy({f2, ac, at, {}});
    CHECK(mid == doctest::Approx(chord).epsilon(1e-12));
  }
}

TEST_CASE("thinking_tax") {
  CHECK(round1(thinking_tax(gsm8k_512())) == 36.2);
  CHECK(round1(thinking_tax({0.014, 1.0, 0.168, 0.875})) == 69.5);
  CHECK_THROWS_AS(thinking_tax({0.5, 0.9, 0.2, {}}), InvalidArgument);
}

TEST_CASE("crossover_fraction") {
  CHECK(crossover_fraction(0.955, 0.99, 0.0).value == doctest::Approx(0.9646).epsilon(1e-3));
  CHECK(crossover_fraction(0.931, 0.99, 0.318).value == doctest::Approx(0.9122).epsilon(1e-3));
  CHECK(crossover_fraction(0.9, 0.9, 0.0).value == 1.0);
  const auto over = crossover_fraction(0.995, 0.99, 0.2);
  CHECK(over.value == 1.0);
  CHECK_FALSE(over.in_range);
  CHECK(over.flag == "no finite crossover under these params");
  CHECK_THROWS_AS(crossover_fraction(0.5, 0.4, 0.4), InvalidArgument);

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double at = 0.9 * u(rng), ac = at + 0.05 + (0.95 - at) * u(rng);
    const double acc = at + (ac - at) * u(rng);
    const auto f = crossover_fraction(acc, ac, at);
    REQUIRE(f.in_range);
    CHECK(std::fabs(predict_coupled_accuracy({f.value, ac, at, {}}) - acc) < 1e-12);
  }
}

TEST_CASE("crossover_budget") {
  const auto sweep = presets::gsm8k_8b_nothink_sweep();
  const auto b_sat = saturation_budget(sweep.budgets, sweep.accuracy);
  CHECK(b_sat == 512);
  const auto r = crossover_budget(presets::gsm8k_8b_think_grid_curve(), 0.931, 0.99, 0.318, b_sat);
  REQUIRE(r.b_star);
  CHECK(*r.b_star == 2048);
  REQUIRE(r.gamma);
  CHECK(*r.gamma == 4.0);

  const auto point = SurvivalCurve::from_steps({{100, 1.0}});
  CHECK(*crossover_budget(point, 0.5, 1.0, 0.0).b_star == 100);

  const auto capped = SurvivalCurve::from_steps({{100, 0.3}, {200, 0.6}});
  CHECK_THROWS_WITH_AS(crossover_budget(capped, 0.9, 1.0, 0.0),
                       "crossover beyond observed chain lengths", EstimationError);

  // Lognormal chain lengths; analytic quantile exp(mu + sigma z).
  const double mu = 6.5, sigma = 0.7;
  std::mt19937_64 rng(3);
  std::lognormal_distribution<double> ln(mu, sigma);
  std::vector<ChainObservation> obs;
  for (int i = 0; i < 200000; ++i) {
    obs.push_back({static_cast<std::int64_t>(std::ceil(ln(rng))), false});
  }
  const auto km = km_estimate(obs);
  const double acc_nt = 0.8, ac = 0.95, at = 0.2;
  const double f = (acc_nt - at) / (ac - at);
  const double z = std::sqrt(2.0) * [&] {
    // erfinv by bisection on erf, oracle independent of the library quantile.
    double lo = -5, hi = 5;
    for (int k = 0; k < 200; ++k) {
      const double m = 0.5 * (lo + hi);
      (std::erf(m) < 2 * f - 1 ? lo : hi) = m;
    }
    return 0.5 * (lo + hi);
  }();
  const double analytic = std::exp(mu + sigma * z);
  const auto lr = crossover_budget(km, acc_nt, ac, at);
  CHECK(std::fabs(static_cast<double>(*lr.b_star) - analytic) <= 0.01 * analytic);
}

TEST_CASE("saturation_budget") {
  const std::vector<std::int64_t> b{128, 256, 512};
  CHECK(saturation_budget(b, std::vector<double>{0.5, 0.9, 0.905}) == 256);
  CHECK(saturation_budget(b, std::vector<double>{0.5, 0.8, 0.9}) == 512);
  CHECK_THROWS_AS(saturation_budget(b, std::vector<double>{0.5}), InvalidArgument);
}

TEST_CASE("recoverable_tax") {
  CHECK(round1(recoverable_tax(0.32, 0.688, 0.375).pp) == 10.0);
  CHECK(recoverable_tax(0.0, 0.7, 0.2).pp == 0.0);
  CHECK(round1(recoverable_tax(0.71, 0.789, 0.429).pp) == 25.6);
  const auto neg = recoverable_tax(0.5, 0.2, 0.4);
  CHECK(neg.negative);
  CHECK(neg.pp < 0);
}

TEST_CASE("recoverable_tax_matched") {
  CHECK(recoverable_tax_matched(0.3, 0.3, 0.7, 0.2, 0.9, 0.9) ==
        doctest::Approx(recoverable_tax(0.7, 0.7, 0.2).pp));
  CHECK(recoverable_tax_matched(1.0, 1.0, 0.4, 0.1, 0.95, 0.9) == doctest::Approx(5.0));

  // Oracle: difference of the two accuracies written out separately.
  // Split: F(b_r) alpha_c(b_r) + (1 - F(b_r)) alpha_e.
  // Coupled: F(b) alpha_c(b) + (1 - F(b)) alpha_t(b).
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double fb = u(rng), fbr = fb * u(rng);
    const double ae = u(rng), at = u(rng), acbr = u(rng), acb = u(rng);
    const double split = fbr * acbr + (1 - fbr) * ae;
    const double coupled = fb * acb + (1 - fb) * at;
    CHECK(std::fabs(recoverable_tax_matched(fbr, fb, ae, at, acbr, acb) - 100 * (split - coupled)) <
          1e-12);
  }
}

TEST_CASE("two_source_decomposition") {
  const auto t = two_source_decomposition(gsm8k_512());
  CHECK(round1(t.truncation_loss) == 42.1);
  CHECK(round1(t.reasoning_regret) == -5.9);
  CHECK(round1(t.tax) == 36.2);

  const auto big = two_source_decomposition(gsm8k_27b_4096());
  CHECK(round1(big.truncation_loss) == 10.5);
  CHECK(std::fabs(big.reasoning_regret - 0.04) < 0.05);

  const auto done = two_source_decomposition({1.0, 0.9, 0.3, 0.95});
  CHECK(done.truncation_loss == 0.0);
  CHECK(done.tax == doctest::Approx(done.reasoning_regret));

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double at = u(rng), ac = at + (1 - at) * u(rng);
    const DecompositionParams p{u(rng), ac, at, u(rng)};
    // The recoverable bound needs extraction no better than completed chains.
    const auto b = tax_breakdown(p, ac * u(rng));
    CHECK(std::fabs(b.truncation_loss + b.reasoning_regret - b.tax) < 1e-9);
    CHECK(std::fabs(b.tax - thinking_tax(p)) < 1e-9);
    CHECK(*b.recoverable <= b.tax + std::fabs(b.reasoning_regret) + 1e-9);
  }
}

TEST_CASE("same_subset_decomposition") {
  const auto z = same_subset_decomposition(0.4, 0.9, 0.3, 0.9, 0.3);
  CHECK(z.term_completed == 0.0);
  CHECK(z.term_truncated == 0.0);
  CHECK(same_subset_decomposition(0.0, 0.9, 0.8, 0.5, 0.2).term_completed == 0.0);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double f = u(rng), nc = u(rng), nt = u(rng), ac = u(rng), at = u(rng);
    const auto s = same_subset_decomposition(f, nc, nt, ac, at);
    // Nothink accuracy over the same split minus the coupled think accuracy.
    const double oracle = 100 * ((f * nc + (1 - f) * nt) - (f * ac + (1 - f) * at));
    CHECK(std::fabs(s.term_completed + s.term_truncated - oracle) < 1e-9);
  }
}

TEST_CASE("modal_advantage_check") {
  const auto m = modal_advantage_check({0.0, 0.375, 0.688, 0.95, 128});
  CHECK(m.holds);
  CHECK(round1(m.margin) == 31.3);

  const auto edge = modal_advantage_check({0.5, 0.25, 0.5, 0.75, 64});
  CHECK_FALSE(edge.holds);
  CHECK(edge.margin == 0.0);

  const auto sure = modal_advantage_check({1.0, 0.0, 0.99, 1.0, 64});
  CHECK_FALSE(sure.holds);
  CHECK(sure.margin == doctest::Approx(-1.0));
}

TEST_CASE("dfr_lower_bound") {
  const ModalParams m8{0.0, 0.375, 0.688, 0.95, 128};
  CHECK(round1(dfr_lower_bound(0.0, m8)) == 31.3);
  const double h0 = (0.688 - 0.375) / (128 * (0.95 - 0.375));
  CHECK(std::fabs(dfr_lower_bound(h0, m8)) < 1e-12);
  CHECK(round1(dfr_lower_bound(0.0, {0.0, 0.429, 0.789, 0.95, 128})) == 36.0);
  CHECK_THROWS_AS(dfr_lower_bound(-0.1, m8), InvalidArgument);

  // Nonincreasing in h, nondecreasing in pi_eta.
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const double eps = 0.5 * u(rng);
    ModalParams m{u(rng), eps, eps + (1 - eps) * u(rng), eps + (1 - eps) * u(rng),
                  1 + static_cast<std::int64_t>(rng() % 512)};
    const double h1 = 0.01 * u(rng), h2 = h1 + 0.01 * u(rng);
    CHECK(dfr_lower_bound(h2, m) <= dfr_lower_bound(h1, m));
    const double before = dfr_lower_bound(h1, m);
    m.pi_eta += (1 - m.pi_eta) * u(rng);
    CHECK(dfr_lower_bound(h1, m) >= before);
  }
}

TEST_CASE("dfr_threshold") {
  const ModalParams m{0.0, 0.375, 0.688, 0.95, 128};
  const double cutoff = (0.688 - 0.375) / (128 * (0.95 - 0.375));

  HazardCurve steps;
  steps.bandwidth = 100;
  steps.points = {{0, 3 * cutoff}, {100, 2 * cutoff}, {200, 0.5 * cutoff}, {300, 0.1 * cutoff}};
  CHECK(dfr_threshold(steps, m) == 200);

  HazardCurve flat;
  flat.bandwidth = 100;
  for (std::int64_t t = 0; t < 5000; t += 100) flat.points.push_back({t, 2 * cutoff});
  CHECK_FALSE(dfr_threshold(flat, m).has_value());

  CHECK_THROWS_AS(dfr_threshold(steps, {0.0, 0.7, 0.6, 0.95, 128}), InvalidArgument);
  CHECK_THROWS_AS(dfr_threshold(steps, {0.0, 0.3, 0.6, 0.2, 128}), InvalidArgument);

  // Pareto: continuous hazard alpha / t, so tau_0 = alpha / cutoff.
  const double alpha = 1.2, xm = 50;
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ChainObservation> obs;
  for (int i = 0; i < 400000; ++i) {
    obs.push_back({static_cast<std::int64_t>(std::ceil(xm / std::pow(1.0 - u(rng), 1.0 / alpha))),
                   false});
  }
  const std::int64_t bw = 20;
  const auto tau = dfr_threshold(hazard_estimate(obs, bw), m);
  REQUIRE(tau);
  CHECK(std::fabs(static_cast<double>(*tau) - alpha / cutoff) <= static_cast<double>(bw));
}

TEST_CASE("optimal_split_search") {
  SUBCASE("saturating extraction puts the rest into reasoning") {
    const std::int64_t total = 2048, sat = 256;
    SplitModel model;
    model.alpha_c = 0.95;
    model.f_l_curve = tabulate([](double t) { return 1.0 - std::exp(-t / 2000.0); }, 4096);
    model.alpha_e = [&](double, double ba) {
      return 0.7 * std::pow(std::min(1.0, ba / static_cast<double>(sat)), 4.0);
    };
    const auto r = optimal_split_search(model, total, 32);
    CHECK(r.b_r_star == total - sat);
  }
  SUBCASE("point mass completion") {
    SplitModel model;
    model.alpha_c = 0.9;
    model.f_l_curve = SurvivalCurve::from_steps({{70, 1.0}});
    model.alpha_e = [](double, double ba) { return 0.5 * ba / 1000.0; };
    const auto r = optimal_split_search(model, 1000, 50);
    CHECK(r.b_r_star == 100);
  }
  SUBCASE("matches a fine-grid search") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
      const double mu = 5.5 + u(rng), sigma = 0.4 + 0.6 * u(rng);
      const double amp = 0.4 + 0.5 * u(rng), scale = 50 + 400 * u(rng);
      const double lift = 0.3 * u(rng);
      const std::int64_t total = 2048, step = 64;
      SplitModel model;
      model.alpha_c = 0.97;
      model.f_l_curve = tabulate([&](double t) { return lognormal_cdf(t, mu, sigma); }, 4096);
      model.alpha_e = [=](double br, double ba) {
        return amp * (1 - std::exp(-std::max(0.0, ba) / scale)) *
               (1 - lift + lift * std::tanh(std::max(0.0, br) / 500.0));
      };
      const auto r = optimal_split_search(model, total, step);

      std::int64_t best_br = 0;
      double best = -1;
      for (std::int64_t br = 0; br <= total; ++br) {
        const double f = br == 0 ? 0.0 : lognormal_cdf(static_cast<double>(br), mu, sigma);
        const double acc = f * model.alpha_c + (1 - f) * model.alpha_e(br, total - br);
        if (acc > best) {
          best = acc;
          best_br = br;
        }
      }
      CHECK_MESSAGE(std::llabs(r.b_r_star - best_br) <= step, "rep " << rep);

      // Interior maximizer: the residual changes sign around it.
      const auto idx = static_cast<std::size_t>(r.b_r_star / step);
      if (idx > 1 && idx + 2 < r.curve.size()) {
        CHECK(*r.curve[idx - 1].residual > 0);
        CHECK(*r.curve[idx + 1].residual < 0);
      }
    }
  }
  SplitModel bad;
  bad.alpha_c = 0.9;
  bad.f_l_curve = SurvivalCurve::from_steps({{10, 1.0}});
  bad.alpha_e = [](double, double) { return 0.5; };
  CHECK_THROWS_AS(optimal_split_search(bad, 10, 10), InvalidArgument);
  CHECK_THROWS_AS(optimal_split_search(bad, 100, 0), InvalidArgument);
}

TEST_CASE("cross_scale_gain") {
  CHECK(round1(cross_scale_gain(0.71, 31.3)) == 22.2);
  CHECK(cross_scale_gain(0.0, 31.3) == 0.0);
  CHECK(round1(cross_scale_gain(0.32, 31.3)) == 10.0);
  CHECK(round1(cross_scale_gain(0.32, 31.3)) == round1(recoverable_tax(0.32, 0.688, 0.375).pp));
}

TEST_CASE("pilot_predict_sweep") {
  std::mt19937_64 rng(10);
  std::lognormal_distribution<double> ln(6.3, 0.5);
  std::vector<ChainObservation> obs;
  for (int i = 0; i < 300; ++i) {
    const auto l = static_cast<std::int64_t>(std::ceil(ln(rng)));
    obs.push_back({std::min<std::int64_t>(l, 2048), l >= 2048});
  }
  const std::vector<std::int64_t> budgets{256, 512, 1024};
  const auto p = pilot_predict_sweep(obs, 0.99, 0.3, budgets, 512);
  const auto km = km_estimate(obs);
  REQUIRE(p.points.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double f = cdf_at(km, budgets[i]);
    CHECK(p.points[i].f_l == f);
    CHECK(p.points[i].predicted == doctest::Approx(f * 0.99 + (1 - f) * 0.3));
  }
  CHECK(p.warnings.empty());
  const std::vector<std::int64_t> far{2048};
  CHECK(pilot_predict_sweep(obs, 0.99, 0.3, far, 512).warnings.size() == 1);
}

TEST_CASE("mrsd_cost_bound") {
  const double c = mrsd_cost_bound(0.888, 132.7, 256, 2.42, 512, 128);
  CHECK(c >= 319.0);
  CHECK(c <= 321.0);
  CHECK(mrsd_cost_bound(1.0, 132.7, 256, 3, 512, 128) == doctest::Approx(132.7));
  CHECK(mrsd_cost_bound(0.0, 132.7, 256, 3, 512, 128) == doctest::Approx(256 + 3 * 640));
  CHECK_THROWS_AS(mrsd_cost_bound(0.5, -1, 256, 3, 512, 128), InvalidArgument);
}

TEST_CASE("stochastic dominance orders tax and crossover") {
  std::mt19937_64 rng(11);
  std::lognormal_distribution<double> ln(6.0, 0.6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    // Longer chains: every length scaled up, so the CDF is pointwise lower.
    const double stretch = 1.0 + 2.0 * u(rng);
    std::vector<ChainObservation> a, b;
    for (int i = 0; i < 500; ++i) {
      const double l = std::ceil(ln(rng));
      a.push_back({static_cast<std::int64_t>(l), false});
      b.push_back({static_cast<std::int64_t>(std::ceil(l * stretch)), false});
    }
    const auto ka = km_estimate(a), kb = km_estimate(b);
    const double ac = 0.9 + 0.1 * u(rng), acc_nt = 0.5 + 0.4 * u(rng) * ac;
    for (std::int64_t budget = 64; budget <= 8192; budget += 64) {
      const double fa = cdf_at(ka, budget), fb = cdf_at(kb, budget);
      REQUIRE(fb <= fa);
      CHECK(thinking_tax({fb, ac, 0.0, acc_nt}) >= thinking_tax({fa, ac, 0.0, acc_nt}));
    }
    CHECK(*crossover_budget(kb, acc_nt, ac, 0.0).b_star >=
          *crossover_budget(ka, acc_nt, ac, 0.0).b_star);
  }
}

TEST_CASE("json") {
  const auto p = gsm8k_512();
  const auto q = nlohmann::json(p).get<DecompositionParams>();
  CHECK(q.f_l == p.f_l);
  CHECK(q.acc_nt == p.acc_nt);
  const ModalParams m{0.1, 0.375, 0.688, 0.95, 128};
  const auto n = nlohmann::json(m).get<ModalParams>();
  CHECK(n.b_a == 128);
  CHECK(n.pi_eta == m.pi_eta);
  const auto j = nlohmann::json(tax_breakdown(p, 0.6));
  CHECK(j.contains("truncation_loss"));
}
