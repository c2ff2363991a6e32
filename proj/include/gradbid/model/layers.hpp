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

#include <string>

#include "gradbid/ad/params.hpp"
#include "gradbid/ad/tensor.hpp"

namespace gradbid::model {

// Affine map with weight [in x out] and zero-initialized bias [1 x out].
struct Linear {
  ad::Tensor w, b;

  Linear() = default;
  Linear(ad::ParameterStore& store, const std::string& path, std::size_t in, std::size_t out)
      : w(store.create(path + "/w", {in, out}, ad::Init::kUniformFanIn)),
        b(store.create(path + "/b", {1, out}, ad::Init::kZeros)) {}

  ad::Tensor operator()(const ad::Tensor& x) const { return ad::linear(x, w, b); }
};

// Two affine maps with a ReLU between them.
struct Mlp2 {
  Linear fc1, fc2;

  Mlp2() = default;
  Mlp2(ad::ParameterStore& store, const std::string& path, std::size_t in, std::size_t hidden, std::size_t out)
      : fc1(store, path + "/fc1", in, hidden), fc2(store, path + "/fc2", hidden, out) {}

  ad::Tensor operator()(const ad::Tensor& x) const { return fc2(ad::relu(fc1(x))); }
};

// Mean of (pred - target)^2 over rows with mask 1; `mask` is [rows x 1]
// with 0/1 entries and optional per-row weights folded in.
ad::Tensor masked_mse(const ad::Tensor& pred, const ad::Tensor& target, const ad::Tensor& mask);

}  // namespace gradbid::model
