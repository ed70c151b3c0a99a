/*
 * Copyright (c) 2026 The unilabel Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "unilabel/autodiff.hpp"
#include "unilabel/tensor.hpp"

namespace unilabel::nn {

/// Named parameter tensors in insertion order.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t numel() const noexcept;
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  std::vector<std::string> names() const;
  std::vector<Tensor> tensors() const;
  /// Replaces every tensor, in order. Shapes must match.
  void assign(std::span<const Tensor> values);

  bool operator==(const ParamStore& other) const { return entries_ == other.entries_; }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Parameters of a store placed on a graph, addressable by name.
class Bound {
 public:
  Bound() = default;
  Bound(std::vector<std::string> names, std::vector<ad::Var> vars);

  const ad::Var& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<ad::Var>& vars() const noexcept { return vars_; }
  const std::vector<std::string>& names() const noexcept { return names_; }

 private:
  std::vector<std::string> names_;
  std::vector<ad::Var> vars_;
  std::map<std::string, std::size_t> index_;
};

/// Every parameter becomes a leaf of `g`.
Bound bind(ad::Graph& g, const ParamStore& params);
/// Every parameter becomes a constant.
Bound bind_constant(const ParamStore& params);

enum class Activation { kNone, kRelu, kTanh };

ad::Var activate(const ad::Var& x, Activation act);

/// Adds `prefix.i.weight` [sizes[i+1] x sizes[i]] and zero `prefix.i.bias`,
/// weights Glorot-uniform in +-sqrt(6 / (in + out)).
void init_mlp(ParamStore& store, const std::string& prefix, std::span<const std::size_t> sizes,
              std::mt19937_64& rng);

/// Standalone MLP store with prefix "mlp"; deterministic in `seed`.
ParamStore init_params(std::span<const std::size_t> sizes, std::uint64_t seed);

/// x W^T + b for the layer `prefix` (expects prefix.weight, prefix.bias).
ad::Var linear(const Bound& p, const std::string& prefix, const ad::Var& x);

/// Applies every `prefix.i` layer in order; `hidden` after all but the last,
/// `output` after the last.
ad::Var mlp_forward(const Bound& p, const std::string& prefix, const ad::Var& x,
                    Activation hidden, Activation output = Activation::kNone);

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

class AdamW {
 public:
  AdamW(const ParamStore& params, AdamWConfig config);

  /// One decoupled-weight-decay Adam step; `grads` aligned with the store.
  /// A non-finite gradient throws NumericalError naming the parameter and
  /// leaves every parameter untouched.
  void step(ParamStore& params, std::span<const Tensor> grads);

  std::uint64_t steps() const noexcept { return step_; }
  const AdamWConfig& config() const noexcept { return config_; }
  void set_lr(double lr) noexcept { config_.lr = lr; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

 private:
  AdamWConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t step_ = 0;
};

/// One record per line: name, rank, dims, then values with 17 significant
/// digits, space separated.
void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_text(const ParamStore& params);
ParamStore parse_checkpoint(std::string_view text);

}  // namespace unilabel::nn
