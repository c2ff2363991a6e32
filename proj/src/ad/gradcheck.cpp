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

#include "gradbid/ad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gradbid::ad {

GradCheckReport check_gradients(const std::function<Tensor()>& loss,
                                std::vector<Tensor> inputs, double epsilon) {
  for (auto& t : inputs) {
    if (!t.requires_grad()) throw std::invalid_argument("check_gradients: input does not require grad");
    t.zero_grad();
  }
  backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());

  GradCheckReport rep;
  for (std::size_t p = 0; p < inputs.size(); ++p) {
    auto values = inputs[p].value_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double fp = loss().item();
      values[i] = saved - epsilon;
      const double fm = loss().item();
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * epsilon);
      const double a = analytic[p][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      const double rel = std::abs(a - numeric) / denom;
      ++rep.entries_checked;
      if (rel > rep.max_rel_error || rep.entries_checked == 1) {
        rep.max_rel_error = std::max(rep.max_rel_error, rel);
        if (rel >= rep.max_rel_error) {
          rep.worst_param = p;
          rep.worst_index = i;
          rep.worst_analytic = a;
          rep.worst_numeric = numeric;
        }
      }
    }
  }
  return rep;
}

}  // namespace gradbid::ad
