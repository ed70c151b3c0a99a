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

// Regression and sentiment-class metrics, plus unimodal label quality
// against synthetic ground truth.

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "unilabel/data.hpp"
#include "unilabel/labels.hpp"
#include "unilabel/modality.hpp"

namespace unilabel::metrics {

/// Clamp to [-3, 3] and round half away from zero.
int sentiment_class(double v);

/// Seven-class accuracy; empty input throws EmptyBatch.
double acc7(std::span<const double> preds, std::span<const double> labels);

enum class F1Mode {
  kWeighted,        // support-weighted mean of the two class F1 scores
  kBinaryPositive,  // F1 of the positive class only
};

struct BinaryScores {
  std::optional<double> acc2;  // absent when every label is neutral
  std::optional<double> f1;
  std::size_t n = 0;           // non-neutral samples scored
};

/// Drops label == 0, positive means > 0.
BinaryScores acc2_f1(std::span<const double> preds, std::span<const double> labels,
                     F1Mode mode = F1Mode::kWeighted);

/// Pearson correlation; absent when either side has variance <= 1e-12.
std::optional<double> corr(std::span<const double> preds, std::span<const double> labels);

struct LabelQuality {
  PerModality<double> label_mae{};     // mean |y_mc - s_m|
  PerModality<double> baseline_mae{};  // mean |y - s_m|
};

/// Over every sample of `ds`; throws TruthUnavailable or MissingLabel.
LabelQuality label_quality(const LabelStore& labels, const data::Dataset& ds);

struct MetricsReport {
  double mae = 0.0;
  std::optional<double> corr;
  std::optional<double> acc2;
  std::optional<double> f1;
  double acc7 = 0.0;
  std::optional<LabelQuality> labels;
  std::size_t n_eval = 0;
};

MetricsReport evaluate(std::span<const double> preds, std::span<const double> labels,
                       F1Mode mode = F1Mode::kWeighted);

/// Fields mae, corr, acc2, f1, acc7, label_mae{a,v,l}, baseline_mae{a,v,l},
/// n_eval; undefined values are null.
std::string report_json(const MetricsReport& r);
void save_report(const std::filesystem::path& path, const MetricsReport& r);

}  // namespace unilabel::metrics
