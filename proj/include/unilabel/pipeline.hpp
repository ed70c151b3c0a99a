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

// Three-stage orchestration: pretraining with contrastive projection, label
// correction, and joint multimodal/unimodal training from scratch.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unilabel/config.hpp"
#include "unilabel/data.hpp"
#include "unilabel/labels.hpp"
#include "unilabel/losses.hpp"
#include "unilabel/meta.hpp"
#include "unilabel/metrics.hpp"
#include "unilabel/nn.hpp"

namespace unilabel::pipeline {

using LogSink = std::function<void(const std::string&)>;

/// Stage tags for seeded streams.
inline constexpr std::uint64_t kStage1 = 1;
inline constexpr std::uint64_t kStage3 = 3;

/// Shuffled row order for one epoch of a stage.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t stage,
                                     std::size_t epoch);

/// Seed for a stage's parameter initialization.
std::uint64_t init_seed(std::uint64_t seed, std::uint64_t stage);

losses::Batch make_batch(const data::TrainView& view, std::span<const std::size_t> rows);
/// The whole view as one batch.
losses::Batch full_batch(const data::TrainView& view);

PerModality<std::size_t> input_dims(const data::TrainView& view);

struct Stage1Result {
  nn::ParamStore params;
  meta::FrozenBank bank;
  std::vector<double> step_losses;  // total loss of every optimizer step
};

/// Trains for pretrain_epochs on the stage-1 objective, then caches the
/// representations of every training sample. A non-finite loss throws
/// NumericalError naming the epoch and batch.
Stage1Result run_stage1(const Config& config, const data::TrainView& train,
                        const LogSink& log = {});

/// One forward pass over `train` with fixed parameters.
meta::FrozenBank build_bank(const nn::ParamStore& params, const data::TrainView& train);

meta::MetaResult run_stage2(const Config& config, const meta::FrozenBank& bank,
                            const LogSink& log = {});

/// Labels for the training rows of `result` plus, when given, the validation
/// rows corrected by the trained networks. Stage 3 needs both when beta != 0.
LabelStore stage2_labels(const Config& config, const meta::MetaResult& result,
                         const meta::FrozenBank* val_bank = nullptr);

struct Stage3Result {
  nn::ParamStore params;            // from the best validation epoch
  std::vector<double> step_losses;  // total loss of every optimizer step
  std::vector<double> val_losses;   // validation total loss per epoch
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
  std::vector<double> test_predictions;
  metrics::MetricsReport report;
};

/// Fresh model trained on the joint objective with early stopping on the
/// validation total loss; `labels` must cover the train and validation ids.
/// With beta = 0 the unimodal heads are not trained and `labels` is not
/// consulted.
Stage3Result run_stage3(const Config& config, const data::TrainView& train,
                        const data::TrainView& val, const data::TrainView& test,
                        const LabelStore& labels, const LogSink& log = {});

/// Predictions of the multimodal head.
std::vector<double> predict(const nn::ParamStore& params, const data::TrainView& view);

struct Splits {
  data::Dataset train;
  data::Dataset val;
  data::Dataset test;
};

/// Reads train.jsonl, val.jsonl and test.jsonl from `dir`.
Splits load_splits(const std::filesystem::path& dir);

struct RunArtifacts {
  std::filesystem::path stage1_checkpoint;
  std::filesystem::path bank;
  std::filesystem::path val_bank;
  std::filesystem::path labels;
  std::filesystem::path gate_log;
  std::filesystem::path stage3_checkpoint;
  std::filesystem::path metrics;
  std::filesystem::path log;

  static RunArtifacts under(const std::filesystem::path& dir);
  std::vector<std::filesystem::path> all() const;
};

/// Writes one row per sample and modality for both the unimodal and the
/// projected embeddings of `params` on `view`.
std::string export_embeddings(const nn::ParamStore& params, const data::TrainView& view);

/// Generates (or loads, when `data_dir` is given) the data, runs stages 1
/// and 2 once, then stage 3, and writes every artifact under `out`.
RunArtifacts run_all(const Config& config, const std::filesystem::path& out,
                     const std::optional<std::filesystem::path>& data_dir = std::nullopt,
                     const LogSink& echo = {});

}  // namespace unilabel::pipeline
