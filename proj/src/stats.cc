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

#include <algorithm>
#include <cmath>
#include <random>

#include "thinkbudget/error.h"

namespace thinkbudget {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("normal_quantile needs p in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

Interval wilson_ci(std::int64_t successes, std::int64_t n, double confidence) {
  if (n <= 0) throw InvalidArgument("wilson_ci needs n >= 1");
  if (successes < 0 || successes > n) throw InvalidArgument("wilson_ci needs 0 <= successes <= n");
  if (!(confidence > 0.0 && confidence < 1.0)) throw InvalidArgument("confidence must be in (0, 1)");
  const double z = normal_quantile(0.5 + confidence / 2.0);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  Interval ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  if (successes == 0) ci.lo = 0.0;
  if (successes == n) ci.hi = 1.0;
  return ci;
}

double mcnemar_exact(std::int64_t wins_a, std::int64_t wins_b) {
  if (wins_a < 0 || wins_b < 0) throw InvalidArgument("mcnemar_exact needs nonnegative counts");
  const std::int64_t n = wins_a + wins_b;
  if (n == 0) throw InvalidArgument("mcnemar_exact undefined without discordant pairs");
  const std::int64_t k = std::min(wins_a, wins_b);
  if (n <= 52) {
    // Exact integer tail; the sum stays below 2^53, so the double is exact.
    std::uint64_t c = 1, tail = 0;
    for (std::int64_t i = 0; i <= k; ++i) {
      tail += c;
      c = c * static_cast<std::uint64_t>(n - i) / static_cast<std::uint64_t>(i + 1);
    }
    return std::min(1.0, std::ldexp(static_cast<double>(tail), static_cast<int>(1 - n)));
  }
  // log C(n, i) - n log 2, summed with log-sum-exp.
  const double log_half_n = static_cast<double>(n) * std::log(0.5);
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(k) + 1);
  for (std::int64_t i = 0; i <= k; ++i) {
    terms.push_back(std::lgamma(static_cast<double>(n) + 1.0) -
                    std::lgamma(static_cast<double>(i) + 1.0) -
                    std::lgamma(static_cast<double>(n - i) + 1.0) + log_half_n);
  }
  const double m = *std::max_element(terms.begin(), terms.end());
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  const double tail = std::exp(m + std::log(s));
  return std::min(1.0, 2.0 * tail);
}

double hoeffding_lower(double p_hat, std::int64_t n, double delta) {
  if (n < 1) throw InvalidArgument("hoeffding_lower needs n >= 1");
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must be in (0, 1)");
  return std::max(0.0, p_hat - std::sqrt(std::log(1.0 / delta) / (2.0 * static_cast<double>(n))));
}

void PairedOutcomes::add(std::string id, bool a, bool b) {
  ids.push_back(std::move(id));
  a_correct.push_back(a);
  b_correct.push_back(b);
}

Interval paired_bootstrap_diff(const PairedOutcomes& pairs, int iterations, std::uint64_t seed) {
  const std::size_t n = pairs.size();
  if (n == 0) throw InvalidArgument("paired_bootstrap_diff needs pairs");
  if (pairs.a_correct.size() != n || pairs.b_correct.size() != n) {
    throw InvalidArgument("paired outcome columns differ in length");
  }
  if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
  std::vector<int> delta(n);
  for (std::size_t i = 0; i < n; ++i) {
    delta[i] = static_cast<int>(pairs.a_correct[i]) - static_cast<int>(pairs.b_correct[i]);
  }
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> stats(static_cast<std::size_t>(iterations));
  for (auto& s : stats) {
    long long sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += delta[pick(rng)];
    s = 100.0 * static_cast<double>(sum) / static_cast<double>(n);
  }
  std::sort(stats.begin(), stats.end());
  // Percentile ranks by linear interpolation between order statistics.
  auto pct = [&](double q) {
    const double pos = q * static_cast<double>(stats.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, stats.size() - 1);
    const double w = pos - static_cast<double>(lo);
    return stats[lo] * (1.0 - w) + stats[hi] * w;
  };
  return {pct(0.025), pct(0.975)};
}

double rmse(std::span<const double> predicted, std::span<const double> observed) {
  if (predicted.size() != observed.size()) throw InvalidArgument("rmse length mismatch");
  if (predicted.empty()) throw InvalidArgument("rmse needs nonempty sequences");
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - observed[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

}  // namespace thinkbudget
