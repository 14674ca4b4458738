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

#include "thinkbudget/stats.h"

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "thinkbudget/error.h"

using namespace thinkbudget;

namespace {

// Exact two-sided binomial tail at p = 1/2 by direct summation of C(n, i).
double binomial_two_sided(int a, int b) {
  const int n = a + b;
  const int k = std::min(a, b);
  double tail = 0.0;
  for (int i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                     n * std::log(2.0));
  }
  return std::min(1.0, 2.0 * tail);
}

PairedOutcomes make_pairs(int n, double pa, double pb, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::bernoulli_distribution a(pa), b(pb);
  PairedOutcomes p;
  for (int i = 0; i < n; ++i) p.add("q" + std::to_string(i), a(rng), b(rng));
  return p;
}

}  // namespace

TEST_CASE("normal quantile") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_quantile(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(normal_quantile(1e-10) == doctest::Approx(-6.361340902404056).epsilon(1e-9));
  for (double p = 0.001; p < 1.0; p += 0.0137) {
    CHECK(normal_cdf(normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  }
}

TEST_CASE("wilson_ci") {
  auto ci = wilson_ci(370, 500, 0.95);
  CHECK(std::round(ci.lo * 1000) / 1000 == doctest::Approx(0.700));
  CHECK(std::round(ci.hi * 1000) / 1000 == doctest::Approx(0.777));
  ci = wilson_ci(336, 500, 0.95);
  CHECK(std::round(ci.lo * 1000) / 1000 == doctest::Approx(0.630));
  CHECK(std::round(ci.hi * 1000) / 1000 == doctest::Approx(0.712));
  CHECK(wilson_ci(0, 40).lo == 0.0);
  CHECK(wilson_ci(40, 40).hi == 1.0);
  CHECK_THROWS_AS(wilson_ci(0, 0), InvalidArgument);
  CHECK_THROWS_AS(wilson_ci(5, 4), InvalidArgument);

  for (int n : {1, 7, 50, 333}) {
    for (int k = 0; k <= n; ++k) {
      const auto a = wilson_ci(k, n, 0.95);
      const double p = static_cast<double>(k) / n;
      CHECK(a.lo <= p);
      CHECK(a.hi >= p);
      const auto wide = wilson_ci(k, n, 0.99);
      CHECK(wide.lo <= a.lo);
      CHECK(wide.hi >= a.hi);
      const auto mirror = wilson_ci(n - k, n, 0.95);
      CHECK(mirror.lo == doctest::Approx(1.0 - a.hi).epsilon(1e-12));
    }
  }
}

TEST_CASE("mcnemar_exact") {
  CHECK(mcnemar_exact(6, 0) == 0.03125);
  CHECK(mcnemar_exact(5, 5) == 1.0);
  const double p = mcnemar_exact(54, 9);
  CHECK(p == doctest::Approx(binomial_two_sided(54, 9)).epsilon(1e-9));
  CHECK(p / 6.1e-9 < 1.5);
  CHECK(6.1e-9 / p < 1.5);
  CHECK(mcnemar_exact(10, 0) == doctest::Approx(2 * std::pow(0.5, 10)));
  CHECK_THROWS_AS(mcnemar_exact(0, 0), InvalidArgument);
  for (int a = 0; a < 30; ++a) {
    for (int b = 0; b < 30; ++b) {
      if (a + b == 0) continue;
      CHECK(mcnemar_exact(a, b) == mcnemar_exact(b, a));
      CHECK(mcnemar_exact(a, b) <= 1.0);
      CHECK(mcnemar_exact(a, b) == doctest::Approx(binomial_two_sided(a, b)).epsilon(1e-9));
    }
  }
}

TEST_CASE("hoeffding_lower") {
  CHECK(std::round(hoeffding_lower(0.963, 475, 0.05) * 1000) / 1000 == doctest::Approx(0.907));
  CHECK(hoeffding_lower(0.5, 200, 0.05) ==
        doctest::Approx(0.5 - std::sqrt(std::log(20.0) / 400)));
  CHECK(hoeffding_lower(1.0, 100000000, 0.05) > 0.999);
  CHECK(hoeffding_lower(0.01, 10, 0.05) == 0.0);
  double prev = 0.0;
  for (int n = 1; n < 5000; n += 37) {
    const double lb = hoeffding_lower(0.8, n, 0.05);
    CHECK(lb <= 0.8);
    CHECK(lb >= prev);
    prev = lb;
  }
}

TEST_CASE("paired_bootstrap_diff") {
  SUBCASE("identical columns") {
    PairedOutcomes p;
    for (int i = 0; i < 100; ++i) p.add(std::to_string(i), i % 3 == 0, i % 3 == 0);
    const auto ci = paired_bootstrap_diff(p, 2000, 1);
    CHECK(ci.lo == 0.0);
    CHECK(ci.hi == 0.0);
  }
  SUBCASE("reproducible") {
    const auto p = make_pairs(300, 0.7, 0.6, 2);
    const auto a = paired_bootstrap_diff(p, 3000, 9);
    const auto b = paired_bootstrap_diff(p, 3000, 9);
    CHECK(a.lo == b.lo);
    CHECK(a.hi == b.hi);
  }
  SUBCASE("known gap and 1/sqrt(n) width") {
    // Independent columns with pa - pb = g; analytic SE of the mean
    // difference is sqrt((pa(1-pa) + pb(1-pb)) / n).
    const double pa = 0.75, pb = 0.55;
    const auto small = make_pairs(2500, pa, pb, 3);
    const auto large = make_pairs(10000, pa, pb, 4);
    const auto cs = paired_bootstrap_diff(small, 4000, 5);
    const auto cl = paired_bootstrap_diff(large, 4000, 6);
    CHECK(cl.lo < 20.0);
    CHECK(cl.hi > 20.0);
    const double se = 100 * std::sqrt((pa * (1 - pa) + pb * (1 - pb)) / 10000);
    CHECK((cl.hi - cl.lo) == doctest::Approx(2 * 1.96 * se).epsilon(0.15));
    CHECK((cs.hi - cs.lo) / (cl.hi - cl.lo) == doctest::Approx(2.0).epsilon(0.15));
  }
  SUBCASE("math-500-like gap") {
    // 41.8 pp gap at n = 500: expected CI roughly [36, 47].
    PairedOutcomes p;
    std::mt19937_64 rng(7);
    for (int i = 0; i < 500; ++i) {
      const bool a = i < 393;  // 78.6%
      const bool b = i < 184;  // 36.8%
      p.add(std::to_string(i), a, b);
    }
    const auto ci = paired_bootstrap_diff(p, 10000, 0);
    CHECK(ci.lo == doctest::Approx(36.4).epsilon(0.05));
    CHECK(ci.hi == doctest::Approx(47.0).epsilon(0.05));
  }
  CHECK_THROWS_AS(paired_bootstrap_diff(PairedOutcomes{}, 100, 0), InvalidArgument);
}

TEST_CASE("rmse") {
  const std::vector<double> a{1, 2, 3};
  CHECK(rmse(a, a) == 0.0);
  const std::vector<double> z{0, 0}, o{3, 4};
  CHECK(rmse(z, o) == doctest::Approx(std::sqrt(12.5)));
  const std::vector<double> one{1}, four{4};
  CHECK(rmse(one, four) == 3.0);
  CHECK_THROWS_AS(rmse(one, o), InvalidArgument);
}
