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

#include <algorithm>
#include <cmath>

#include "thinkbudget/error.h"

namespace thinkbudget {
namespace {

constexpr double kPp = 100.0;

void check_probability(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) {
    throw InvalidArgument(std::string(name) + " must be in [0, 1], got " + std::to_string(v));
  }
}

}  // namespace

void DecompositionParams::validate() const {
  check_probability(f_l, "f_l");
  check_probability(alpha_c, "alpha_c");
  check_probability(alpha_t, "alpha_t");
  if (acc_nt) check_probability(*acc_nt, "acc_nt");
  if (alpha_t > alpha_c) throw InvalidArgument("alpha_t must not exceed alpha_c");
}

void ModalParams::validate() const {
  check_probability(delta, "delta");
  check_probability(epsilon, "epsilon");
  check_probability(pi_eta, "pi_eta");
  check_probability(alpha_c_plus, "alpha_c_plus");
  if (b_a < 0) throw InvalidArgument("b_a must be >= 0");
}

double predict_coupled_accuracy(const DecompositionParams& p) {
  p.validate();
  return p.f_l * p.alpha_c + (1.0 - p.f_l) * p.alpha_t;
}

double thinking_tax(const DecompositionParams& p) {
  if (!p.acc_nt) throw InvalidArgument("thinking_tax needs acc_nt");
  return kPp * (*p.acc_nt - predict_coupled_accuracy(p));
}

CrossoverFraction crossover_fraction(double acc_nt, double alpha_c, double alpha_t) {
  if (alpha_c == alpha_t) throw InvalidArgument("crossover_fraction: alpha_c equals alpha_t");
  CrossoverFraction f;
  f.raw = (acc_nt - alpha_t) / (alpha_c - alpha_t);
  f.value = std::clamp(f.raw, 0.0, 1.0);
  f.in_range = f.raw >= 0.0 && f.raw <= 1.0;
  if (!f.in_range) f.flag = "no finite crossover under these params";
  return f;
}

CrossoverReport crossover_budget(const SurvivalCurve& curve, double acc_nt, double alpha_c,
                                 double alpha_t, std::optional<std::int64_t> b_sat) {
  const auto frac = crossover_fraction(acc_nt, alpha_c, alpha_t);
  CrossoverReport r;
  r.f_star = frac.value;
  r.flag = frac.flag;
  r.b_sat = b_sat;
  if (frac.value <= 0.0) {
    r.b_star = 0;
  } else {
    try {
      r.b_star = quantile(curve, frac.value);
    } catch (const EstimationError&) {
      throw EstimationError("crossover beyond observed chain lengths");
    }
  }
  if (r.b_star && b_sat && *b_sat > 0) {
    r.gamma = static_cast<double>(*r.b_star) / static_cast<double>(*b_sat);
  }
  return r;
}

std::int64_t saturation_budget(std::span<const std::int64_t> budgets,
                               std::span<const double> nothink_accuracy, double tolerance_pp) {
  if (budgets.empty() || budgets.size() != nothink_accuracy.size()) {
    throw InvalidArgument("saturation_budget needs equal nonempty sequences");
  }
  for (std::size_t i = 1; i < budgets.size(); ++i) {
    if (budgets[i] <= budgets[i - 1]) throw InvalidArgument("budgets must be strictly increasing");
  }
  const double best = *std::max_element(nothink_accuracy.begin(), nothink_accuracy.end());
  for (std::size_t i = 0; i < budgets.size(); ++i) {
    // Small slack so that e.g. 0.921 vs 0.931 counts as exactly 1 pp.
    if (kPp * (best - nothink_accuracy[i]) <= tolerance_pp + 1e-9) return budgets[i];
  }
  return budgets.back();
}

RecoverableTax recoverable_tax(double rho, double alpha_extract, double alpha_t) {
  check_probability(rho, "rho");
  check_probability(alpha_extract, "alpha_extract");
  check_probability(alpha_t, "alpha_t");
  RecoverableTax r;
  r.pp = kPp * rho * (alpha_extract - alpha_t);
  r.negative = alpha_extract < alpha_t;
  return r;
}

double recoverable_tax_matched(double f_l_br, double f_l_b, double alpha_extract,
                               double alpha_t_b, double alpha_c_br, double alpha_c_b) {
  if (f_l_br > f_l_b) throw InvalidArgument("recoverable_tax_matched needs F(b_r) <= F(b)");
  const double gain = (1.0 - f_l_br) * (alpha_extract - alpha_t_b);
  const double lost_completions = (f_l_b - f_l_br) * (alpha_c_b - alpha_t_b);
  const double completed_shift = f_l_br * (alpha_c_br - alpha_c_b);
  return kPp * (gain - lost_completions + completed_shift);
}

TaxBreakdown two_source_decomposition(const DecompositionParams& p) {
  if (!p.acc_nt) throw InvalidArgument("two_source_decomposition needs acc_nt");
  p.validate();
  TaxBreakdown t;
  t.truncation_loss = kPp * (1.0 - p.f_l) * (p.alpha_c - p.alpha_t);
  t.reasoning_regret = kPp * (*p.acc_nt - p.alpha_c);
  t.tax = t.truncation_loss + t.reasoning_regret;
  return t;
}

TaxBreakdown tax_breakdown(const DecompositionParams& p, double alpha_extract) {
  TaxBreakdown t = two_source_decomposition(p);
  t.recoverable = recoverable_tax(1.0 - p.f_l, alpha_extract, p.alpha_t).pp;
  t.residual = t.tax - *t.recoverable;
  return t;
}

SameSubsetTerms same_subset_decomposition(double f_l, double alpha_nt_c, double alpha_nt_t,
                                          double alpha_c, double alpha_t) {
  check_probability(f_l, "f_l");
  check_probability(alpha_nt_c, "alpha_nt_c");
  check_probability(alpha_nt_t, "alpha_nt_t");
  check_probability(alpha_c, "alpha_c");
  check_probability(alpha_t, "alpha_t");
  return {kPp * f_l * (alpha_nt_c - alpha_c), kPp * (1.0 - f_l) * (alpha_nt_t - alpha_t)};
}

ModalCheck modal_advantage_check(const ModalParams& m) {
  m.validate();
  const double rhs = m.delta * m.alpha_c_plus + (1.0 - m.delta) * m.epsilon;
  return {m.pi_eta > rhs, kPp * (m.pi_eta - rhs)};
}

double dfr_lower_bound(double h_tau, const ModalParams& m) {
  if (!(h_tau >= 0.0)) throw InvalidArgument("hazard must be >= 0");
  m.validate();
  return kPp * (m.pi_eta - m.epsilon -
                h_tau * static_cast<double>(m.b_a) * (m.alpha_c_plus - m.epsilon));
}

std::optional<std::int64_t> dfr_threshold(const HazardCurve& hazard, const ModalParams& m) {
  m.validate();
  if (!(m.pi_eta > m.epsilon)) throw InvalidArgument("dfr_threshold needs pi_eta > epsilon");
  if (!(m.alpha_c_plus > m.epsilon)) {
    throw InvalidArgument("dfr_threshold needs alpha_c_plus > epsilon");
  }
  if (m.b_a < 1) throw InvalidArgument("dfr_threshold needs b_a >= 1");
  const double cutoff =
      (m.pi_eta - m.epsilon) / (static_cast<double>(m.b_a) * (m.alpha_c_plus - m.epsilon));
  for (const auto& p : hazard.points) {
    if (p.h <= cutoff) return p.t;
  }
  return std::nullopt;
}

SplitSearchResult optimal_split_search(const SplitModel& model, std::int64_t b_total,
                                       std::int64_t grid_step) {
  if (grid_step < 1) throw InvalidArgument("grid_step must be >= 1");
  if (!model.alpha_e) throw InvalidArgument("split model needs an alpha_e surface");
  check_probability(model.alpha_c, "alpha_c");
  const std::int64_t n_points = b_total / grid_step + 1;
  if (b_total < 0 || n_points < 3) throw InvalidArgument("degenerate split grid");

  const double h = static_cast<double>(grid_step);
  auto F = [&](std::int64_t b) { return cdf_at(model.f_l_curve, b); };
  auto ae = [&](double br, double ba) {
    const double v = model.alpha_e(br, ba);
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("alpha_e outside [0, 1]");
    return v;
  };

  SplitSearchResult out;
  for (std::int64_t i = 0; i < n_points; ++i) {
    const std::int64_t br = i * grid_step;
    const double ba = static_cast<double>(b_total - br);
    const double f = F(br);
    SplitPoint pt;
    pt.b_r = br;
    pt.accuracy = f * model.alpha_c + (1.0 - f) * ae(static_cast<double>(br), ba);
    if (i > 0 && i < n_points - 1) {
      const double brd = static_cast<double>(br);
      const double density = (F(br + grid_step) - F(br - grid_step)) / (2.0 * h);
      const double d_ba = (ae(brd, ba + h) - ae(brd, ba - h)) / (2.0 * h);
      const double d_br = (ae(brd + h, ba) - ae(brd - h, ba)) / (2.0 * h);
      pt.residual = density * (model.alpha_c - ae(brd, ba)) - (1.0 - f) * (d_ba - d_br);
    }
    if (out.curve.empty() || pt.accuracy > out.accuracy_star) {
      out.b_r_star = br;
      out.accuracy_star = pt.accuracy;
    }
    out.curve.push_back(pt);
  }
  return out;
}

double cross_scale_gain(double rho, double advantage_pp) {
  check_probability(rho, "rho");
  return rho * advantage_pp;
}

PilotPrediction pilot_predict_sweep(std::span<const ChainObservation> pilot, double alpha_c,
                                    double alpha_t, std::span<const std::int64_t> budgets,
                                    std::optional<std::int64_t> alpha_t_budget) {
  const SurvivalCurve curve = km_estimate(pilot);
  PilotPrediction out;
  for (std::int64_t b : budgets) {
    DecompositionParams p{cdf_at(curve, b), alpha_c, alpha_t, std::nullopt};
    out.points.push_back({b, p.f_l, predict_coupled_accuracy(p)});
    if (alpha_t_budget && *alpha_t_budget > 0 &&
        (b > 2 * *alpha_t_budget || 2 * b < *alpha_t_budget)) {
      out.warnings.push_back("alpha_t measured at b=" + std::to_string(*alpha_t_budget) +
                             " reused at b=" + std::to_string(b) + " (more than 2x apart)");
    }
  }
  return out;
}

double mrsd_cost_bound(double p_stage0, double t1_bar, double b1, double k_bar, double b_r,
                       double b_a) {
  check_probability(p_stage0, "p_stage0");
  if (t1_bar < 0 || b1 < 0 || k_bar < 0 || b_r < 0 || b_a < 0) {
    throw InvalidArgument("mrsd_cost_bound needs nonnegative inputs");
  }
  return p_stage0 * t1_bar + (1.0 - p_stage0) * (b1 + k_bar * (b_r + b_a));
}

void to_json(nlohmann::json& j, const DecompositionParams& p) {
  j = nlohmann::json{{"f_l", p.f_l}, {"alpha_c", p.alpha_c}, {"alpha_t", p.alpha_t}};
  j["acc_nt"] = p.acc_nt ? nlohmann::json(*p.acc_nt) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, DecompositionParams& p) {
  p.f_l = j.at("f_l").get<double>();
  p.alpha_c = j.at("alpha_c").get<double>();
  p.alpha_t = j.at("alpha_t").get<double>();
  if (j.contains("acc_nt") && !j.at("acc_nt").is_null()) p.acc_nt = j.at("acc_nt").get<double>();
}

void to_json(nlohmann::json& j, const ModalParams& m) {
  j = nlohmann::json{{"delta", m.delta},   {"epsilon", m.epsilon},
                     {"pi_eta", m.pi_eta}, {"alpha_c_plus", m.alpha_c_plus},
                     {"b_a", m.b_a}};
}

void from_json(const nlohmann::json& j, ModalParams& m) {
  m.delta = j.value("delta", 0.0);
  m.epsilon = j.at("epsilon").get<double>();
  m.pi_eta = j.at("pi_eta").get<double>();
  m.alpha_c_plus = j.value("alpha_c_plus", 1.0);
  m.b_a = j.value("b_a", std::int64_t{0});
}

void to_json(nlohmann::json& j, const CrossoverReport& r) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"f_star", r.f_star},
                     {"b_star", opt(r.b_star)},
                     {"b_sat", opt(r.b_sat)},
                     {"gamma", opt(r.gamma)},
                     {"flag", r.flag}};
}

void to_json(nlohmann::json& j, const TaxBreakdown& t) {
  auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  j = nlohmann::json{{"tax", t.tax},
                     {"truncation_loss", t.truncation_loss},
                     {"reasoning_regret", t.reasoning_regret},
                     {"recoverable", opt(t.recoverable)},
                     {"residual", opt(t.residual)}};
}

}  // namespace thinkbudget
