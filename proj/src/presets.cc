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

#include "thinkbudget/presets.h"

#include "thinkbudget/error.h"

namespace thinkbudget::presets {

SimModelConfig gsm8k_8b() {
  SimModelConfig c;
  c.chain_length_law = LengthLaw::empirical({{127, 0.0},
                                             {255, 0.014},
                                             {511, 0.374},
                                             {540, 0.5},
                                             {1023, 0.80},
                                             {2047, 0.93},
                                             {4095, 0.97},
                                             {8191, 1.0}});
  c.alpha_c = 0.990;
  c.alpha_t_base = 0.318;
  c.alpha_t_by_budget = {{256, 0.168}, {512, 0.318}};
  c.nothink_length_law =
      LengthLaw::empirical({{30, 0.0}, {127, 0.45}, {255, 0.888}, {511, 0.997}, {1023, 1.0}});
  c.nothink_accuracy = 0.933;
  c.nothink_truncated_accuracy = 0.415;
  c.pi_eta = 0.688;
  c.epsilon = 0.375;
  c.alpha_c_plus = 0.95;
  c.hint_adherence = 0.55;
  c.extract_length = 24;
  return c;
}

SimModelConfig gsm8k_27b() {
  SimModelConfig c;
  c.chain_length_law = LengthLaw::empirical({{255, 0.0},
                                             {511, 0.007},
                                             {1023, 0.12},
                                             {2047, 0.45},
                                             {4095, 0.735},
                                             {8191, 0.95},
                                             {16383, 1.0}});
  c.alpha_c = 0.9796;
  c.alpha_t_base = 0.5849;
  c.alpha_t_by_budget = {{512, 0.178}, {4096, 0.5849}};
  c.nothink_length_law =
      LengthLaw::empirical({{30, 0.0}, {127, 0.5}, {255, 0.92}, {511, 0.998}, {1023, 1.0}});
  c.nothink_accuracy = 0.98;
  c.nothink_truncated_accuracy = 0.45;
  c.pi_eta = 0.789;
  c.epsilon = 0.429;
  c.alpha_c_plus = 0.96;
  return c;
}

SimModelConfig math500_8b() {
  SimModelConfig c;
  c.chain_length_law = LengthLaw::empirical({{255, 0.0},
                                             {511, 0.01},
                                             {1023, 0.05},
                                             {2047, 0.178},
                                             {4095, 0.45},
                                             {8191, 0.75},
                                             {16383, 1.0}});
  c.alpha_c = 0.787;
  c.alpha_t_base = 0.365;
  c.nothink_length_law =
      LengthLaw::empirical({{60, 0.0}, {255, 0.35}, {511, 0.70}, {1023, 0.93}, {2047, 1.0}});
  c.nothink_accuracy = 0.70;
  c.nothink_truncated_accuracy = 0.15;
  c.pi_eta = 0.688;
  c.epsilon = 0.375;
  c.alpha_c_plus = 0.95;
  c.answer_format = AnswerFormat::kBoxed;
  return c;
}

SurvivalCurve gsm8k_8b_think_grid_curve() {
  return SurvivalCurve::from_steps({{256, 0.014}, {512, 0.374}, {1024, 0.80}, {2048, 0.93}});
}

NothinkSweep gsm8k_8b_nothink_sweep() {
  return {{128, 256, 512, 1024, 2048}, {0.508, 0.875, 0.931, 0.933, 0.931}};
}

std::vector<std::string> names() { return {"gsm8k-8b", "gsm8k-27b", "math500-8b"}; }

SimModelConfig by_name(const std::string& name) {
  if (name == "gsm8k-8b") return gsm8k_8b();
  if (name == "gsm8k-27b") return gsm8k_27b();
  if (name == "math500-8b") return math500_8b();
  throw InvalidArgument("unknown preset: " + name);
}

}  // namespace thinkbudget::presets
