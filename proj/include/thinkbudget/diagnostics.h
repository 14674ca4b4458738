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

// Closed-form accuracy identities and bounds for budget-coupled reasoning.
//
// Conventions: probabilities are plain doubles in [0, 1]; every function
// whose name promises a tax, gap, margin or gain returns percentage points
// (probability difference times 100). Token counts are int64.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "thinkbudget/chainstats.h"

namespace thinkbudget {

// Measured triple (F_L(b), alpha_c, alpha_t) plus the nothink accuracy at
// the same budget when available.
struct DecompositionParams {
  double f_l = 0.0;
  double alpha_c = 0.0;
  double alpha_t = 0.0;
  std::optional<double> acc_nt;

  // Throws InvalidArgument unless all values lie in [0, 1] and
  // alpha_t <= alpha_c.
  void validate() const;
};

struct ModalParams {
  double delta = 0.0;         // P(chain completes within b_a more tokens)
  double epsilon = 0.0;       // accuracy of continuing to think for b_a tokens
  double pi_eta = 0.0;        // extraction success (derivable x extracted)
  double alpha_c_plus = 0.0;  // accuracy of chains that complete in the window
  std::int64_t b_a = 0;

  void validate() const;
};

// Acc = f_l * alpha_c + (1 - f_l) * alpha_t.
double predict_coupled_accuracy(const DecompositionParams& p);

// acc_nt - Acc in pp. Throws InvalidArgument when acc_nt is absent.
double thinking_tax(const DecompositionParams& p);

struct CrossoverFraction {
  double value = 0.0;  // clamped to [0, 1]
  double raw = 0.0;
  bool in_range = true;
  std::string flag;  // "no finite crossover under these params" when clamped
};

// (acc_nt - alpha_t) / (alpha_c - alpha_t). Throws InvalidArgument when
// alpha_c == alpha_t.
CrossoverFraction crossover_fraction(double acc_nt, double alpha_c, double alpha_t);

struct CrossoverReport {
  double f_star = 0.0;
  std::optional<std::int64_t> b_star;
  std::optional<std::int64_t> b_sat;
  std::optional<double> gamma;
  std::string flag;
};

// b_star = quantile(curve, f_star). A fraction at or below zero yields
// b_star = 0 with a flag; above the curve's ceiling throws
// EstimationError("crossover beyond observed chain lengths").
CrossoverReport crossover_budget(const SurvivalCurve& curve, double acc_nt, double alpha_c,
                                 double alpha_t, std::optional<std::int64_t> b_sat = std::nullopt);

// Smallest swept budget whose nothink accuracy is within `tolerance_pp` of
// the sweep maximum. Budgets must be strictly increasing.
std::int64_t saturation_budget(std::span<const std::int64_t> budgets,
                               std::span<const double> nothink_accuracy,
                               double tolerance_pp = 1.0);

struct RecoverableTax {
  double pp = 0.0;
  bool negative = false;  // extraction does worse than the truncated residual
};

// rho * (alpha_extract - alpha_t), in pp.
RecoverableTax recoverable_tax(double rho, double alpha_extract, double alpha_t);

// Matched-total-budget variant: split budget b_r + b_a against a coupled
// budget b.
//   (1 - F(b_r)) (a_e - a_t(b))
// - (F(b) - F(b_r)) (a_c(b) - a_t(b))
// + F(b_r) (a_c(b_r) - a_c(b))
double recoverable_tax_matched(double f_l_br, double f_l_b, double alpha_extract,
                               double alpha_t_b, double alpha_c_br, double alpha_c_b);

struct TaxBreakdown {
  double tax = 0.0;
  double truncation_loss = 0.0;
  double reasoning_regret = 0.0;
  std::optional<double> recoverable;
  std::optional<double> residual;
};

// TL = (1 - f_l)(alpha_c - alpha_t), RR = acc_nt - alpha_c, tax = TL + RR.
TaxBreakdown two_source_decomposition(const DecompositionParams& p);

// Two-source breakdown plus R = (1 - f_l)(alpha_e - alpha_t) and I = tax - R.
TaxBreakdown tax_breakdown(const DecompositionParams& p, double alpha_extract);

struct SameSubsetTerms {
  double term_completed = 0.0;
  double term_truncated = 0.0;
};

// f_l (alpha_nt_c - alpha_c) and (1 - f_l)(alpha_nt_t - alpha_t), in pp.
SameSubsetTerms same_subset_decomposition(double f_l, double alpha_nt_c, double alpha_nt_t,
                                          double alpha_c, double alpha_t);

struct ModalCheck {
  bool holds = false;
  double margin = 0.0;  // pp
};

// pi_eta > delta * alpha_c_plus + (1 - delta) * epsilon.
ModalCheck modal_advantage_check(const ModalParams& m);

// pi_eta - epsilon - h * b_a * (alpha_c_plus - epsilon), in pp.
double dfr_lower_bound(double h_tau, const ModalParams& m);

// First curve point whose hazard is at or below
// (pi_eta - epsilon) / (b_a (alpha_c_plus - epsilon)); nullopt when none.
// Throws InvalidArgument unless pi_eta > epsilon and alpha_c_plus > epsilon.
std::optional<std::int64_t> dfr_threshold(const HazardCurve& hazard, const ModalParams& m);

struct SplitModel {
  std::function<double(double b_r, double b_a)> alpha_e;
  SurvivalCurve f_l_curve;
  double alpha_c = 0.0;
};

struct SplitPoint {
  std::int64_t b_r = 0;
  double accuracy = 0.0;
  std::optional<double> residual;  // interior points only
};

struct SplitSearchResult {
  std::int64_t b_r_star = 0;
  double accuracy_star = 0.0;
  std::vector<SplitPoint> curve;
};

// Grid search over b_r in {0, step, 2 step, ...} up to b_total. The
// residual f_L (alpha_c - alpha_e) - (1 - F)(d_ba alpha_e - d_br alpha_e)
// uses central differences with h = grid_step; f_L is the KM increment over
// one grid cell divided by its width. Throws InvalidArgument on fewer than
// three grid points.
SplitSearchResult optimal_split_search(const SplitModel& model, std::int64_t b_total,
                                       std::int64_t grid_step);

// rho * advantage.
double cross_scale_gain(double rho, double advantage_pp);

struct SweepPrediction {
  std::int64_t budget = 0;
  double f_l = 0.0;
  double predicted = 0.0;
};

struct PilotPrediction {
  std::vector<SweepPrediction> points;
  std::vector<std::string> warnings;
};

// KM on the pilot, then predict_coupled_accuracy at each budget with a fixed
// (alpha_c, alpha_t). When alpha_t_budget is given, budgets more than 2x away
// from it get an extrapolation warning.
PilotPrediction pilot_predict_sweep(std::span<const ChainObservation> pilot, double alpha_c,
                                    double alpha_t, std::span<const std::int64_t> budgets,
                                    std::optional<std::int64_t> alpha_t_budget = std::nullopt);

// p t1 + (1 - p)(b1 + k_bar (b_r + b_a)).
double mrsd_cost_bound(double p_stage0, double t1_bar, double b1, double k_bar, double b_r,
                       double b_a);

void to_json(nlohmann::json& j, const DecompositionParams& p);
void from_json(const nlohmann::json& j, DecompositionParams& p);
void to_json(nlohmann::json& j, const ModalParams& m);
void from_json(const nlohmann::json& j, ModalParams& m);
void to_json(nlohmann::json& j, const CrossoverReport& r);
void to_json(nlohmann::json& j, const TaxBreakdown& t);

}  // namespace thinkbudget
