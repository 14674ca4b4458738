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
#include <vector>

#include "json.hpp"

namespace thinkbudget {

// A chain length; censored means the generation hit its cap and the true
// length is at least `length`.
struct ChainObservation {
  std::int64_t length = 1;
  bool censored = false;
};

struct CurveStep {
  std::int64_t t = 0;
  double F = 0.0;
  bool operator==(const CurveStep&) const = default;
};

// Right-continuous step CDF. Immutable once built.
class SurvivalCurve {
 public:
  SurvivalCurve() = default;

  // Validates ordering and range; throws InvalidArgument.
  static SurvivalCurve from_steps(std::vector<CurveStep> steps, std::int64_t n_total = 0,
                                  std::int64_t n_censored = 0);

  const std::vector<CurveStep>& steps() const { return steps_; }
  std::int64_t n_total() const { return n_total_; }
  std::int64_t n_censored() const { return n_censored_; }
  double max_cdf() const { return steps_.empty() ? 0.0 : steps_.back().F; }

  bool operator==(const SurvivalCurve&) const = default;

 private:
  std::vector<CurveStep> steps_;
  std::int64_t n_total_ = 0;
  std::int64_t n_censored_ = 0;
};

// Product-limit estimator. Deaths at the same time are pooled; a censoring
// tied with a death is still at risk for that death. Until the first
// censoring, F is computed as deaths/n so the uncensored case is the ECDF
// exactly. Throws EstimationError("CDF unidentifiable") when every
// observation is censored.
SurvivalCurve km_estimate(std::span<const ChainObservation> observations);

// F(b); 0 below the first step.
double cdf_at(const SurvivalCurve& curve, std::int64_t b);

// Smallest t with F(t) >= q, for 0 < q <= max F. A 1e-12 slack absorbs
// rounding in F. Throws EstimationError("quantile beyond identifiable range").
std::int64_t quantile(const SurvivalCurve& curve, double q);

struct HazardPoint {
  std::int64_t t = 0;
  double h = 0.0;
};

struct HazardCurve {
  std::vector<HazardPoint> points;
  std::int64_t bandwidth = 1;
};

// Windowed hazard over [k*bw, (k+1)*bw): events / (at_risk(k*bw) * bw).
// Windows nobody is at risk in are omitted.
HazardCurve hazard_estimate(std::span<const ChainObservation> observations,
                            std::int64_t bandwidth);

void to_json(nlohmann::json& j, const SurvivalCurve& c);
void from_json(const nlohmann::json& j, SurvivalCurve& c);
void to_json(nlohmann::json& j, const HazardCurve& h);

}  // namespace thinkbudget
