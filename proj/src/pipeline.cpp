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

#include "unilabel/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"
#include "unilabel/model.hpp"

namespace unilabel::pipeline {

namespace fs = std::filesystem;

namespace {

void emit(const LogSink& log, const std::string& line) {
  if (log) log(line);
}

std::size_t batch_count(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

std::span<const std::size_t> batch_rows(const std::vector<std::size_t>& order, std::size_t b,
                                        std::size_t batch) {
  const std::size_t lo = b * batch;
  return {order.data() + lo, std::min(batch, order.size() - lo)};
}

/// One AdamW step on `loss_of`; returns the loss value.
template <typename LossFn>
double train_step(nn::ParamStore& params, nn::AdamW& opt, const LossFn& loss_of,
                  const char* stage, std::size_t epoch, std::size_t batch) {
  ad::Graph g;
  const nn::Bound p = nn::bind(g, params);
  const ad::Var loss = loss_of(p);
  const double value = loss.item();
  if (!std::isfinite(value)) {
    throw NumericalError(std::string(stage) + ": non-finite loss at epoch " +
                         std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
  const auto grads = ad::grad(loss, p.vars());
  opt.step(params, ad::values(grads));
  return value;
}

double mean_of(std::span<const double> v, std::size_t from) {
  double s = 0.0;
  for (std::size_t i = from; i < v.size(); ++i) s += v[i];
  return v.size() > from ? s / static_cast<double>(v.size() - from) : 0.0;
}

}  // namespace

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::uint64_t stage,
                                     std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng = substream(seed, {0xE90C, stage, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::uint64_t init_seed(std::uint64_t seed, std::uint64_t stage) {
  return substream(seed, {0x1417, stage})();
}

losses::Batch make_batch(const data::TrainView& view, std::span<const std::size_t> rows) {
  const data::TrainView sub = view.gather(rows);
  losses::Batch b;
  b.ids = sub.ids;
  for (std::size_t i = 0; i < 3; ++i) b.x[i] = ad::Var::constant(sub.x[i]);
  b.y = ad::Var::constant(Tensor({sub.size(), 1}, sub.y));
  return b;
}

losses::Batch full_batch(const data::TrainView& view) {
  if (view.size() == 0) throw EmptyBatch();
  losses::Batch b;
  b.ids = view.ids;
  for (std::size_t i = 0; i < 3; ++i) b.x[i] = ad::Var::constant(view.x[i]);
  b.y = ad::Var::constant(Tensor({view.size(), 1}, view.y));
  return b;
}

PerModality<std::size_t> input_dims(const data::TrainView& view) {
  return {view.x[0].cols(), view.x[1].cols(), view.x[2].cols()};
}

// ---------------------------------------------------------------- stage 1

meta::FrozenBank build_bank(const nn::ParamStore& params, const data::TrainView& train) {
  const losses::Batch all = full_batch(train);
  const losses::Stage1Forward f = losses::stage1_forward(nn::bind_constant(params), all.x);
  meta::FrozenBank bank;
  bank.ids = train.ids;
  bank.y = train.y;
  for (std::size_t i = 0; i < 3; ++i) {
    bank.uni[i] = f.uni[i].value();
    bank.proj[i] = f.projected[i].value();
    const auto pred = f.projected_pred[i].value().data();
    bank.proj_pred[i].assign(pred.begin(), pred.end());
  }
  bank.validate();
  return bank;
}

Stage1Result run_stage1(const Config& config, const data::TrainView& train, const LogSink& log) {
  config.validate();
  if (train.size() == 0) throw EmptyBatch();
  Stage1Result r;
  r.params = model::init_model(config.model_dims(input_dims(train)), init_seed(config.seed, kStage1));
  nn::AdamW opt(r.params, config.optimizer());
  const losses::Stage1Weights w = config.stage1_weights();
  const std::size_t batches = batch_count(train.size(), config.batch_size);

  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, kStage1, epoch);
    const std::size_t first = r.step_losses.size();
    for (std::size_t b = 0; b < batches; ++b) {
      const losses::Batch batch = make_batch(train, batch_rows(order, b, config.batch_size));
      r.step_losses.push_back(train_step(
          r.params, opt, [&](const nn::Bound& p) { return losses::stage1_loss(p, batch, w).total; },
          "stage 1", epoch, b));
    }
    emit(log, "stage1 epoch " + std::to_string(epoch) +
                  " loss " + io::format_double(mean_of(r.step_losses, first)));
  }
  r.bank = build_bank(r.params, train);
  return r;
}

// ---------------------------------------------------------------- stage 2

meta::MetaResult run_stage2(const Config& config, const meta::FrozenBank& bank,
                            const LogSink& log) {
  config.validate();
  meta::MetaResult r = meta::run_meta(config.meta_config(), bank);
  for (Modality m : kModalities) {
    const auto& counts = r.counts[index(m)];
    for (std::size_t e = 0; e < counts.size(); ++e) {
      emit(log, std::string("stage2 modality ") + short_name(m) + " epoch " + std::to_string(e) +
                    " accepted " + std::to_string(counts[e].accepted) + " meta_updated " +
                    std::to_string(counts[e].meta_updated) + " skipped " +
                    std::to_string(counts[e].skipped));
    }
  }
  for (const auto& note : r.notes) emit(log, "stage2 note: " + note);
  return r;
}

LabelStore stage2_labels(const Config& config, const meta::MetaResult& result,
                         const meta::FrozenBank* val_bank) {
  LabelStore labels = result.labels;
  if (val_bank != nullptr) {
    const LabelStore val_labels = meta::extract_labels(result.mucn, *val_bank, config.rho);
    for (const auto& [id, row] : val_labels.rows()) {
      if (labels.contains(id)) throw ShapeError("stage2: id " + std::to_string(id) + " is in both banks");
      labels.set(id, row);
    }
  }
  return labels;
}

// ---------------------------------------------------------------- stage 3

std::vector<double> predict(const nn::ParamStore& params, const data::TrainView& view) {
  const losses::Batch all = full_batch(view);
  const nn::Bound p = nn::bind_constant(params);
  const ad::Var y_hat = model::fuse_predict(p, model::encode(p, all.x)).y_hat;
  const auto values = y_hat.value().data();
  return {values.begin(), values.end()};
}

Stage3Result run_stage3(const Config& config, const data::TrainView& train,
                        const data::TrainView& val, const data::TrainView& test,
                        const LabelStore& labels, const LogSink& log) {
  config.validate();
  if (train.size() == 0) throw EmptyBatch();
  const bool joint = config.beta != 0.0;
  if (joint) {
    // MissingLabel before any training.
    for (long long id : train.ids) labels.at(id);
    for (long long id : val.ids) labels.at(id);
  }
  const losses::Stage3Weights w = config.stage3_weights();
  const losses::Batch val_batch = full_batch(val);
  auto val_loss = [&](const nn::ParamStore& current) {
    const nn::Bound p = nn::bind_constant(current);
    if (joint) return losses::stage3_loss(p, val_batch, labels, w).total.item();
    return losses::mae(model::fuse_predict(p, model::encode(p, val_batch.x)).y_hat, val_batch.y)
        .item();
  };
  Stage3Result r;
  nn::ParamStore params =
      model::init_model(config.model_dims(input_dims(train)), init_seed(config.seed, kStage3));
  nn::AdamW opt(params, config.optimizer());
  const std::size_t batches = batch_count(train.size(), config.batch_size);

  double best = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  r.params = params;
  for (std::size_t epoch = 0; epoch < config.train_epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, kStage3, epoch);
    const std::size_t first = r.step_losses.size();
    for (std::size_t b = 0; b < batches; ++b) {
      const losses::Batch batch = make_batch(train, batch_rows(order, b, config.batch_size));
      r.step_losses.push_back(train_step(
          params, opt,
          [&](const nn::Bound& p) {
            if (joint) return losses::stage3_loss(p, batch, labels, w).total;
            return losses::mae(model::fuse_predict(p, model::encode(p, batch.x)).y_hat, batch.y);
          },
          "stage 3", epoch, b));
    }
    const double v = val_loss(params);
    if (!std::isfinite(v)) {
      throw NumericalError("stage 3: non-finite validation loss at epoch " + std::to_string(epoch));
    }
    r.val_losses.push_back(v);
    r.epochs_run = epoch + 1;
    emit(log, "stage3 epoch " + std::to_string(epoch) + " loss " +
                  io::format_double(mean_of(r.step_losses, first)) + " val " +
                  io::format_double(v));
    if (v < best) {
      best = v;
      r.best_epoch = epoch;
      r.params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      r.early_stopped = true;
      emit(log, "stage3 early stop at epoch " + std::to_string(epoch) + ", best epoch " +
                    std::to_string(r.best_epoch));
      break;
    }
  }
  r.test_predictions = predict(r.params, test);
  r.report = metrics::evaluate(r.test_predictions, test.y, config.f1_mode);
  return r;
}

// ---------------------------------------------------------------- artifacts

Splits load_splits(const fs::path& dir) {
  return {data::load(dir / "train.jsonl"), data::load(dir / "val.jsonl"),
          data::load(dir / "test.jsonl")};
}

RunArtifacts RunArtifacts::under(const fs::path& dir) {
  RunArtifacts a;
  a.stage1_checkpoint = dir / "stage1" / "checkpoint.txt";
  a.bank = dir / "stage1" / "bank.jsonl";
  a.val_bank = dir / "stage1" / "bank_val.jsonl";
  a.labels = dir / "stage2" / "labels.csv";
  a.gate_log = dir / "stage2" / "gates.csv";
  a.stage3_checkpoint = dir / "stage3" / "checkpoint.txt";
  a.metrics = dir / "metrics.json";
  a.log = dir / "run.log";
  return a;
}

std::vector<fs::path> RunArtifacts::all() const {
  return {stage1_checkpoint, bank, val_bank, labels, gate_log, stage3_checkpoint, metrics, log};
}

std::string export_embeddings(const nn::ParamStore& params, const data::TrainView& view) {
  const losses::Batch all = full_batch(view);
  const losses::Stage1Forward f = losses::stage1_forward(nn::bind_constant(params), all.x);
  std::string out;
  for (Modality m : kModalities) {
    out += model::embedding_csv(view.ids, m, "uni", f.uni[index(m)].value());
    out += model::embedding_csv(view.ids, m, "proj", f.projected[index(m)].value());
  }
  return out;
}

RunArtifacts run_all(const Config& config, const fs::path& out,
                     const std::optional<fs::path>& data_dir, const LogSink& echo) {
  config.validate();
  const RunArtifacts art = RunArtifacts::under(out);
  std::string log_text;
  const LogSink log = [&](const std::string& line) {
    log_text += line + '\n';
    if (echo) echo(line);
  };
  auto flush_log = [&] { io::write_file_atomic(art.log, log_text); };

  io::write_file_atomic(out / "config.txt", config_text(config));
  Splits splits;
  if (data_dir) {
    splits = load_splits(*data_dir);
    log("data loaded from " + data_dir->string());
  } else {
    data::Generated g = data::generate(config.data);
    data::save_generated(out / "data", g);
    splits = {std::move(g.train), std::move(g.val), std::move(g.test)};
    log("data generated into " + (out / "data").string());
  }
  const data::TrainView train = data::training_view(splits.train);
  const data::TrainView val = data::training_view(splits.val);
  const data::TrainView test = data::training_view(splits.test);
  log("train " + std::to_string(train.size()) + " val " + std::to_string(val.size()) + " test " +
      std::to_string(test.size()));

  const Stage1Result s1 = run_stage1(config, train, log);
  nn::save_checkpoint(art.stage1_checkpoint, s1.params);
  meta::save_bank(art.bank, s1.bank);
  const meta::FrozenBank val_bank = build_bank(s1.params, val);
  meta::save_bank(art.val_bank, val_bank);
  flush_log();

  const meta::MetaResult s2 = run_stage2(config, s1.bank, log);
  save_labels(art.labels, stage2_labels(config, s2, &val_bank));
  io::write_file_atomic(art.gate_log, meta::gate_log_csv(s2.gates));
  for (Modality m : kModalities) {
    nn::save_checkpoint(out / "stage2" / (std::string("mucn_") + short_name(m) + ".txt"),
                        s2.mucn[index(m)]);
  }
  flush_log();

  // Stage 3 reads the label file back: it sees exactly what was persisted.
  const LabelStore labels = load_labels(art.labels);
  Stage3Result s3 = run_stage3(config, train, val, test, labels, log);
  nn::save_checkpoint(art.stage3_checkpoint, s3.params);
  if (splits.train.has_truth()) s3.report.labels = metrics::label_quality(labels, splits.train);
  metrics::save_report(art.metrics, s3.report);
  log("test mae " + io::format_double(s3.report.mae) + " acc7 " +
      io::format_double(s3.report.acc7));
  flush_log();
  return art;
}

}  // namespace unilabel::pipeline
