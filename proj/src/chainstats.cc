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

#include "thinkbudget/chainstats.h"

#include <algorithm>

#include "thinkbudget/error.h"

namespace thinkbudget {
namespace {

constexpr double kQuantileSlack = 1e-12;

std::vector<ChainObservation> sorted_copy(std::span<const ChainObservation> obs) {
  std::vector<ChainObservation> v(obs.begin(), obs.end());
  for (const auto& o : v) {
    if (o.length < 1) throw InvalidArgument("chain length must be >= 1");
  }
  // Deaths before censorings at equal times.
  std::sort(v.begin(), v.end(), [](const ChainObservation& a, const ChainObservation& b) {
    if (a.length != b.length) return a.length < b.length;
    return !a.censored && b.censored;
  });
  return v;
}

}  // namespace

SurvivalCurve SurvivalCurve::from_steps(std::vector<CurveStep> steps, std::int64_t n_total,
                                        std::int64_t n_censored) {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i].F >= 0.0 && steps[i].F <= 1.0)) {
      throw InvalidArgument("curve F outside [0, 1]");
    }
    if (i > 0 && (steps[i].t <= steps[i - 1].t || steps[i].F < steps[i - 1].F)) {
      throw InvalidArgument("curve steps must be strictly increasing in t and nondecreasing in F");
    }
  }
  SurvivalCurve c;
  c.steps_ = std::move(steps);
  c.n_total_ = n_total;
  c.n_censored_ = n_censored;
  return c;
}

SurvivalCurve km_estimate(std::span<const ChainObservation> observations) {
  if (observations.empty()) throw InvalidArgument("km_estimate needs observations");
  const auto obs = sorted_copy(observations);
  const auto n = static_cast<std::int64_t>(obs.size());
  std::int64_t censored_total = 0;
  for (const auto& o : obs) censored_total += o.censored ? 1 : 0;
  if (censored_total == n) throw EstimationError("CDF unidentifiable");

  std::vector<CurveStep> steps;
  std::int64_t at_risk = n;
  std::int64_t deaths_so_far = 0;
  bool seen_censoring = false;
  double survival = 1.0;
  std::size_t i = 0;
  while (i < obs.size()) {
    const std::int64_t t = obs[i].length;
    std::int64_t deaths = 0;
    std::int64_t censored = 0;
    for (; i < obs.size() && obs[i].length == t; ++i) {
      (obs[i].censored ? censored : deaths) += 1;
    }
    if (deaths > 0) {
      deaths_so_far += deaths;
      survival *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
      double F;
      if (!seen_censoring) {
        F = static_cast<double>(deaths_so_far) / static_cast<double>(n);
      } else if (deaths == at_risk) {
        F = 1.0;
      } else {
        F = 1.0 - survival;
      }
      if (!steps.empty()) F = std::max(F, steps.back().F);
      steps.push_back({t, F});
    }
    if (censored > 0) seen_censoring = true;
    at_risk -= deaths + censored;
  }
  return SurvivalCurve::from_steps(std::move(steps), n, censored_total);
}

double cdf_at(const SurvivalCurve& curve, std::int64_t b) {
  const auto& s = curve.steps();
  auto it = std::upper_bound(s.begin(), s.end(), b,
                             [](std::int64_t v, const CurveStep& st) { return v < st.t; });
  if (it == s.begin()) return 0.0;
  return std::prev(it)->F;
}

std::int64_t quantile(const SurvivalCurve& curve, double q) {
  if (!(q > 0.0)) throw InvalidArgument("quantile level must be > 0");
  const auto& s = curve.steps();
  auto it = std::find_if(s.begin(), s.end(),
                         [q](const CurveStep& st) { return st.F >= q - kQuantileSlack; });
  if (it == s.end()) throw EstimationError("quantile beyond identifiable range");
  return it->t;
}

HazardCurve hazard_estimate(std::span<const ChainObservation> observations,
                            std::int64_t bandwidth) {
  if (bandwidth < 1) throw InvalidArgument("bandwidth must be >= 1");
  const auto obs = sorted_copy(observations);
  HazardCurve out;
  out.bandwidth = bandwidth;
  std::size_t i = 0;
  while (i < obs.size()) {
    const std::int64_t start = (obs[i].length / bandwidth) * bandwidth;
    const std::int64_t end = start + bandwidth;
    const auto at_risk = static_cast<double>(obs.size() - i);
    std::int64_t events = 0;
    for (; i < obs.size() && obs[i].length < end; ++i) events += obs[i].censored ? 0 : 1;
    out.points.push_back(
        {start, static_cast<double>(events) / (at_risk * static_cast<double>(bandwidth))});
  }
  return out;
}

void to_json(nlohmann::json& j, const SurvivalCurve& c) {
  nlohmann::json steps = nlohmann::json::array();
  for (const auto& s : c.steps()) steps.push_back({{"t", s.t}, {"F", s.F}});
  j = nlohmann::json{{"steps", steps}, {"n_total", c.n_total()}, {"n_censored", c.n_censored()}};
}

void from_json(const nlohmann::json& j, SurvivalCurve& c) {
  const nlohmann::json& arr = j.is_array() ? j : j.at("steps");
  std::vector<CurveStep> steps;
  for (const auto& e : arr) steps.push_back({e.at("t").get<std::int64_t>(), e.at("F").get<double>()});
  const std::int64_t n = j.is_object() ? j.value("n_total", std::int64_t{0}) : 0;
  const std::int64_t nc = j.is_object() ? j.value("n_censored", std::int64_t{0}) : 0;
  c = SurvivalCurve::from_steps(std::move(steps), n, nc);
}

void to_json(nlohmann::json& j, const HazardCurve& h) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : h.points) pts.push_back({{"t", p.t}, {"h", p.h}});
  j = nlohmann::json{{"bandwidth", h.bandwidth}, {"points", pts}};
}

}  // namespace thinkbudget
