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

// Simulator configurations shaped after published measurements of 8B/27B
// reasoning models on GSM8K- and MATH-500-style sets. Knots sit at b - 1 so
// that the natural-stop rate at budget b (L < b) equals the quoted F_L(b).

#include <cstdint>
#include <string>
#include <vector>

#include "thinkbudget/chainstats.h"
#include "thinkbudget/sim_backend.h"

namespace thinkbudget::presets {

// Think F_L: 0.014 @256, 0.374 @512, median ~540. alpha_c 0.99, alpha_t
// 0.168 @256 and 0.318 @512. Nothink stops early 88.8% @256, 99.7% @512.
SimModelConfig gsm8k_8b();

// Think F_L: 0.007 @512, 0.735 @4096; alpha_c 0.9796, alpha_t 0.5849 @4096.
SimModelConfig gsm8k_27b();

// Boxed answers; F_L 0.178 @2048, alpha_c 0.787, alpha_t 0.365 @2048.
SimModelConfig math500_8b();

// Budget-grid view of the 8B think CDF, used for crossover arithmetic.
SurvivalCurve gsm8k_8b_think_grid_curve();

struct NothinkSweep {
  std::vector<std::int64_t> budgets;
  std::vector<double> accuracy;
};

// Nothink accuracy over {128, ..., 2048}. The 1024 and 2048 entries are
// plateau assumptions.
NothinkSweep gsm8k_8b_nothink_sweep();

std::vector<std::string> names();
// Throws InvalidArgument for unknown names.
SimModelConfig by_name(const std::string& name);

}  // namespace thinkbudget::presets
