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

// Synthetic multimodal regression data whose per-modality sentiments drift
// away from the shared label, plus the JSON-lines dataset format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unilabel/modality.hpp"
#include "unilabel/tensor.hpp"

namespace unilabel::data {

struct GenSpec {
  std::size_t n_train = 1284;
  std::size_t n_val = 229;
  std::size_t n_test = 686;
  PerModality<std::size_t> feature_dims{16, 16, 32};  // a, v, l
  double rho = 3.0;
  double sigma_inc = 0.8;
  PerModality<double> weights{0.2, 0.2, 0.6};
  double sigma_y = 0.1;
  double sigma_x = 0.05;
  std::size_t distractor_dims = 8;
  std::uint64_t seed = 1111;

  /// Throws ConfigError.
  void validate() const;
  /// Width of the emitted feature vector for modality m.
  std::size_t input_dim(Modality m) const { return feature_dims[index(m)] + distractor_dims; }
};

struct Sample {
  long long id = 0;
  PerModality<std::vector<double>> x;
  double y = 0.0;
  /// Ground-truth unimodal sentiments; evaluation only.
  std::optional<PerModality<double>> truth;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;

  bool has_truth() const noexcept;
  std::size_t size() const noexcept { return samples.size(); }
  bool operator==(const Dataset&) const = default;
};

/// Column view of a dataset with the truth fields stripped. This is the only
/// form the training stages receive.
struct TrainView {
  std::vector<long long> ids;
  PerModality<Tensor> x;  // [n x input_dim]
  std::vector<double> y;

  std::size_t size() const noexcept { return ids.size(); }
  /// Row subset in the order of `rows`.
  TrainView gather(std::span<const std::size_t> rows) const;
};

TrainView training_view(const Dataset& ds);

/// Mean |s_m - y| per modality: the error of copying the multimodal label.
PerModality<double> copy_label_error(const Dataset& ds);

struct BaselineReport {
  PerModality<double> train{};
  PerModality<double> val{};
  PerModality<double> test{};
};

struct Generated {
  Dataset train;
  Dataset val;
  Dataset test;
  BaselineReport baseline;
};

/// phi(s) = [s, s^2, sin 2s, cos 3s]
std::array<double, 4> feature_basis(double s);

Generated generate(const GenSpec& spec);

std::string to_jsonl(const Dataset& ds);
Dataset parse_jsonl(std::string_view text);
void save(const std::filesystem::path& path, const Dataset& ds);
Dataset load(const std::filesystem::path& path);

std::string baseline_json(const BaselineReport& r);

/// Writes train/val/test .jsonl and baseline.json into `dir`.
void save_generated(const std::filesystem::path& dir, const Generated& g);

}  // namespace unilabel::data
