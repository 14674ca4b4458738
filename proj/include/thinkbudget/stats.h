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
#include <span>
#include <string>
#include <vector>

namespace thinkbudget {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Inverse standard normal CDF. Acklam's rational approximation (relative
// error < 1.15e-9) followed by one Halley step against erfc, which brings
// the error to ~1e-15 on (1e-300, 1 - 1e-16).
double normal_quantile(double p);

double normal_cdf(double x);

// Wilson score interval. Throws InvalidArgument for n == 0 or successes > n.
Interval wilson_ci(std::int64_t successes, std::int64_t n, double confidence = 0.95);

// Two-sided exact McNemar: twice the smaller binomial(n, 1/2) tail, capped
// at 1. Throws InvalidArgument when there are no discordant pairs.
double mcnemar_exact(std::int64_t wins_a, std::int64_t wins_b);

// max(0, p_hat - sqrt(ln(1/delta) / (2n))).
double hoeffding_lower(double p_hat, std::int64_t n, double delta);

struct PairedOutcomes {
  std::vector<std::string> ids;
  std::vector<bool> a_correct;
  std::vector<bool> b_correct;

  std::size_t size() const { return ids.size(); }
  void add(std::string id, bool a, bool b);
};

inline constexpr int kDefaultBootstrapIterations = 10000;

// Percentile CI, in percentage points, for mean(A) - mean(B) under
// resampling of question indices. Bit-reproducible for fixed seed.
Interval paired_bootstrap_diff(const PairedOutcomes& pairs,
                               int iterations = kDefaultBootstrapIterations,
                               std::uint64_t seed = 0);

double rmse(std::span<const double> predicted, std::span<const double> observed);

}  // namespace thinkbudget
