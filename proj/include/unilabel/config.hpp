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

// Run configuration: flat `key = value` files with `#` comments.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "unilabel/data.hpp"
#include "unilabel/losses.hpp"
#include "unilabel/meta.hpp"
#include "unilabel/metrics.hpp"
#include "unilabel/model.hpp"
#include "unilabel/nn.hpp"

namespace unilabel {

struct Config {
  // Optimization (stages 1 and 3).
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  std::size_t pretrain_epochs = 15;
  std::size_t train_epochs = 100;  // upper bound for stage 3
  std::size_t patience = 8;

  // Label correction (stage 2).
  std::size_t meta_epochs = 65;
  double alpha = 5e-3;
  double meta_alpha = 1e-3;
  double sigma = 1.0;
  double lambda_init = 0.5;
  std::size_t oversample = 10;
  std::size_t k_inner = 1;
  bool second_order = true;
  bool parallel = true;

  // Loss weights.
  double gamma = 0.01;
  double eta = 0.01;
  double beta = 0.01;
  double tau = 1.0;

  // Widths.
  std::size_t d = 32;
  std::size_t d_a = 256;
  std::size_t d_v = 64;
  std::size_t d_l = 64;
  std::size_t enc_hidden = 64;
  std::size_t pred_hidden = 32;

  double rho = 3.0;
  std::uint64_t seed = 1111;
  metrics::F1Mode f1_mode = metrics::F1Mode::kWeighted;

  // Synthetic data; its rho is kept equal to the field above.
  data::GenSpec data;

  /// Throws ConfigError.
  void validate() const;

  model::ModelDims model_dims(const PerModality<std::size_t>& input_dims) const;
  nn::AdamWConfig optimizer() const;
  losses::Stage1Weights stage1_weights() const;
  losses::Stage3Weights stage3_weights() const;
  meta::MetaConfig meta_config() const;
};

/// Applies one `key = value` setting; unknown keys and bad values throw
/// ConfigError.
void apply_setting(Config& c, std::string_view key, std::string_view value);

/// Every recognised key, in the order config_text writes them.
std::vector<std::string> config_keys();

Config parse_config(std::string_view text);
Config load_config(const std::filesystem::path& path);
/// Full listing of every key; parse_config(config_text(c)) reproduces c.
std::string config_text(const Config& c);

}  // namespace unilabel
