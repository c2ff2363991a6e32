// Copyright 2026 The gradbid Authors.
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

#include <functional>
#include <string>
#include <vector>

#include "gradbid/ad/tensor.hpp"

namespace gradbid::ad {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  // Location of the worst entry.
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of `loss` against central differences for
// every entry of every tensor in `inputs`. `loss` must rebuild the graph from
// the current values of `inputs` each call and return a 1x1 tensor.
// Relative error per entry: |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport check_gradients(const std::function<Tensor()>& loss,
                                std::vector<Tensor> inputs, double epsilon = 1e-6);

}  // namespace gradbid::ad
