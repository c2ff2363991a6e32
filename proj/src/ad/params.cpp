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

#include "gradbid/ad/params.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "gradbid/util/rng.hpp"

namespace gradbid::ad {

Tensor& ParameterStore::create(const std::string& path, Shape shape, Init init) {
  if (params_.contains(path)) throw std::invalid_argument("duplicate parameter path: " + path);
  std::vector<double> values(shape.size(), 0.0);
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::fill(values.begin(), values.end(), 1.0);
      break;
    case Init::kUniformFanIn: {
      Rng rng = make_rng(seed_, path);
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(shape.rows, 1)));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (double& v : values) v = dist(rng);
      break;
    }
  }
  auto [it, ok] = params_.emplace(path, Tensor::parameter(shape, std::move(values)));
  return it->second;
}

Tensor& ParameterStore::get(std::string_view path) {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + std::string(path));
  return it->second;
}

const Tensor& ParameterStore::get(std::string_view path) const {
  auto it = params_.find(path);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + std::string(path));
  return it->second;
}

bool ParameterStore::contains(std::string_view path) const { return params_.contains(path); }

std::size_t ParameterStore::num_scalars() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

std::vector<std::string> ParameterStore::paths_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& [path, _] : params_) {
    if (path.starts_with(prefix)) out.push_back(path);
  }
  return out;
}

bool path_selected(std::string_view path, const std::vector<std::string>& prefixes) {
  for (const auto& p : prefixes) {
    if (path.starts_with(p)) return true;
  }
  return false;
}

void AdamW::step(ParameterStore& store, const std::vector<std::string>& prefixes) {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [path, param] : store.all()) {
    if (!path_selected(path, prefixes)) continue;
    auto& st = state_[path];
    if (st.m.empty()) {
      st.m.assign(param.size(), 0.0);
      st.v.assign(param.size(), 0.0);
    }
    auto w = param.value_mut();
    auto g = param.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      st.m[i] = config_.beta1 * st.m[i] + (1.0 - config_.beta1) * g[i];
      st.v[i] = config_.beta2 * st.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      w[i] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * w[i]);
    }
  }
}

void AdamW::restore(std::uint64_t step_count, std::map<std::string, Moments, std::less<>> state) {
  t_ = step_count;
  state_ = std::move(state);
}

double clip_grad_norm(ParameterStore& store, const std::vector<std::string>& prefixes,
                      double max_norm) {
  double sq = 0.0;
  for (auto& [path, p] : store.all()) {
    if (!path_selected(path, prefixes)) continue;
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [path, p] : store.all()) {
      if (!path_selected(path, prefixes)) continue;
      for (double& g : p.grad_mut()) g *= s;
    }
  }
  return norm;
}

// --- checkpoint --------------------------------------------------------------

void write_checkpoint(const std::filesystem::path& dir,
                      const std::vector<CheckpointTensor>& tensors,
                      const nlohmann::json& meta) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["format"] = "gradbid-checkpoint";
  manifest["version"] = 1;
  manifest["dtype"] = "float64";
  manifest["payload"] = "params.bin";
  nlohmann::json entries = nlohmann::json::array();
  std::ofstream bin(dir / "params.bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot write " + (dir / "params.bin").string());
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    if (t.values.size() != t.shape.size()) {
      throw std::invalid_argument("checkpoint tensor " + t.path + " size mismatch");
    }
    entries.push_back({{"path", t.path}, {"rows", t.shape.rows}, {"cols", t.shape.cols}, {"offset", offset}});
    bin.write(reinterpret_cast<const char*>(t.values.data()),
              static_cast<std::streamsize>(t.values.size() * sizeof(double)));
    offset += t.values.size();
  }
  if (!bin) throw std::runtime_error("short write to " + (dir / "params.bin").string());
  manifest["tensors"] = std::move(entries);
  manifest["total_values"] = offset;
  manifest["meta"] = meta;
  std::ofstream js(dir / "manifest.json", std::ios::trunc);
  if (!js) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  js << manifest.dump(2) << "\n";
}

CheckpointContents read_checkpoint(const std::filesystem::path& dir) {
  std::ifstream js(dir / "manifest.json");
  if (!js) throw std::runtime_error("checkpoint manifest missing: " + (dir / "manifest.json").string());
  nlohmann::json manifest;
  try {
    js >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint manifest " + (dir / "manifest.json").string() + ": " +
                             e.what());
  }
  if (manifest.value("format", "") != "gradbid-checkpoint") {
    throw std::runtime_error("not a gradbid checkpoint: " + dir.string());
  }
  const auto payload = dir / manifest.value("payload", "params.bin");
  std::ifstream bin(payload, std::ios::binary);
  if (!bin) throw std::runtime_error("checkpoint payload missing: " + payload.string());
  bin.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(bin.tellg());
  bin.seekg(0);
  const std::uint64_t total = manifest.at("total_values").get<std::uint64_t>();
  if (bytes != total * sizeof(double)) {
    throw std::runtime_error("checkpoint payload " + payload.string() + " has " + std::to_string(bytes) +
                             " bytes, manifest expects " + std::to_string(total * sizeof(double)));
  }
  std::vector<double> data(total);
  bin.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));

  CheckpointContents out;
  out.meta = manifest.value("meta", nlohmann::json::object());
  for (const auto& e : manifest.at("tensors")) {
    CheckpointTensor t;
    t.path = e.at("path").get<std::string>();
    t.shape = {e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>()};
    const auto off = e.at("offset").get<std::uint64_t>();
    if (off + t.shape.size() > total) throw std::runtime_error("checkpoint tensor " + t.path + " out of bounds");
    t.values.assign(data.begin() + static_cast<std::ptrdiff_t>(off),
                    data.begin() + static_cast<std::ptrdiff_t>(off + t.shape.size()));
    out.tensors.emplace(t.path, std::move(t));
  }
  return out;
}

void load_parameters(ParameterStore& store, const CheckpointContents& ckpt, std::string_view prefix) {
  for (auto& [path, param] : store.all()) {
    const std::string key = std::string(prefix) + path;
    auto it = ckpt.tensors.find(key);
    if (it == ckpt.tensors.end()) throw std::runtime_error("checkpoint is missing parameter " + key);
    if (it->second.shape != param.shape()) {
      throw std::runtime_error("checkpoint shape mismatch for parameter " + key + ": " +
                               it->second.shape.str() + " vs model " + param.shape().str());
    }
    std::copy(it->second.values.begin(), it->second.values.end(), param.value_mut().begin());
  }
}

std::vector<CheckpointTensor> snapshot_parameters(const ParameterStore& store, std::string_view prefix) {
  std::vector<CheckpointTensor> out;
  for (const auto& [path, param] : store.all()) {
    out.push_back({std::string(prefix) + path, param.shape(),
                   std::vector<double>(param.value().begin(), param.value().end())});
  }
  return out;
}

}  // namespace gradbid::ad
