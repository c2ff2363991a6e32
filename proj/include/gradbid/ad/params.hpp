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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gradbid/ad/tensor.hpp"

namespace gradbid::ad {

enum class Init {
  kZeros,
  kOnes,
  // Uniform(-1/sqrt(rows), 1/sqrt(rows)); rows is fan-in for [in x out].
  kUniformFanIn,
};

// Named trainable parameters. Each parameter is initialized from its own
// stream derived from (seed, path), so adding or removing one parameter
// never changes the initial values of another.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor& create(const std::string& path, Shape shape, Init init);
  Tensor& get(std::string_view path);
  const Tensor& get(std::string_view path) const;
  bool contains(std::string_view path) const;

  std::uint64_t seed() const { return seed_; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;
  void zero_grad();

  // Sorted by path.
  const std::map<std::string, Tensor, std::less<>>& all() const { return params_; }
  std::map<std::string, Tensor, std::less<>>& all() { return params_; }
  std::vector<std::string> paths_with_prefix(std::string_view prefix) const;

 private:
  std::uint64_t seed_;
  std::map<std::string, Tensor, std::less<>> params_;
};

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;
};

// Decoupled weight decay Adam. Only parameters whose path starts with one of
// the allowed prefixes are touched (decay included).
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  void step(ParameterStore& store, const std::vector<std::string>& prefixes);

  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  std::uint64_t step_count() const { return t_; }

  struct Moments {
    std::vector<double> m, v;
  };
  const std::map<std::string, Moments, std::less<>>& moments() const { return state_; }
  void restore(std::uint64_t step_count, std::map<std::string, Moments, std::less<>> state);

 private:
  AdamWConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments, std::less<>> state_;
};

// Global L2 norm of gradients under the prefixes; rescales them in place if
// it exceeds max_norm (max_norm <= 0 disables). Returns the pre-clip norm.
double clip_grad_norm(ParameterStore& store, const std::vector<std::string>& prefixes,
                      double max_norm);

bool path_selected(std::string_view path, const std::vector<std::string>& prefixes);

// --- checkpoint --------------------------------------------------------------
//
// A checkpoint directory holds manifest.json and params.bin. The manifest
// lists every tensor as {path, rows, cols, offset} (offset in doubles into
// params.bin, row-major float64, little-endian) plus an arbitrary "meta"
// object owned by the caller.

struct CheckpointTensor {
  std::string path;
  Shape shape;
  std::vector<double> values;
};

void write_checkpoint(const std::filesystem::path& dir,
                      const std::vector<CheckpointTensor>& tensors,
                      const nlohmann::json& meta);

struct CheckpointContents {
  std::map<std::string, CheckpointTensor, std::less<>> tensors;
  nlohmann::json meta;
};

CheckpointContents read_checkpoint(const std::filesystem::path& dir);

// Copies checkpoint tensors into matching store parameters. Every store
// parameter must be present with the same shape; errors name the path.
void load_parameters(ParameterStore& store, const CheckpointContents& ckpt,
                     std::string_view prefix = "");

std::vector<CheckpointTensor> snapshot_parameters(const ParameterStore& store,
                                                  std::string_view prefix = "");

}  // namespace gradbid::ad
