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

#include "cli.hpp"

#include <CLI11.hpp>

#include <exception>
#include <filesystem>
#include <optional>
#include <vector>

#include "unilabel/config.hpp"
#include "unilabel/data.hpp"
#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"
#include "unilabel/labels.hpp"
#include "unilabel/meta.hpp"
#include "unilabel/metrics.hpp"
#include "unilabel/nn.hpp"
#include "unilabel/pipeline.hpp"

namespace unilabel::cli {
namespace {

namespace fs = std::filesystem;

// Options shared by every subcommand.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool quiet = false;
};

void add_common(CLI::App& sub, Common& c) {
  sub.add_option("--config", c.config, "key = value config file; defaults when omitted")
      ->check(CLI::ExistingFile);
  sub.add_option("--seed", c.seed, "overrides both the training and the data seed");
  sub.add_option("--out", c.out, "output directory")->required();
  sub.add_flag("--quiet", c.quiet, "suppress progress lines");
}

Config resolve_config(const Common& c) {
  Config config = c.config.empty() ? Config{} : load_config(c.config);
  if (c.seed) {
    config.seed = *c.seed;
    config.data.seed = *c.seed;
  }
  config.validate();
  return config;
}

pipeline::LogSink progress(const Common& c, std::ostream& err) {
  if (c.quiet) return {};
  return [&err](const std::string& line) { err << line << '\n'; };
}

data::TrainView view_of(const data::Dataset& ds) { return data::training_view(ds); }

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Unimodal label generation for multimodal regression", "unilabel"};
  app.require_subcommand(1);

  Common common;
  std::string data_dir, labels_path, bank_path, val_bank_path, checkpoint_path;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic train/val/test splits");
  add_common(*gen, common);

  auto* s1 = app.add_subcommand("stage1", "pretrain and cache the frozen representation banks");
  add_common(*s1, common);
  s1->add_option("--data", data_dir, "directory with train/val/test .jsonl")->required();

  auto* s2 = app.add_subcommand("stage2", "learn corrected unimodal labels from a bank");
  add_common(*s2, common);
  s2->add_option("--bank", bank_path, "training bank .jsonl")->required()->check(CLI::ExistingFile);
  s2->add_option("--val-bank", val_bank_path, "validation bank .jsonl; its rows are labelled too")
      ->check(CLI::ExistingFile);

  auto* s3 = app.add_subcommand("stage3", "train from scratch on the corrected labels");
  add_common(*s3, common);
  s3->add_option("--data", data_dir, "directory with train/val/test .jsonl")->required();
  s3->add_option("--labels", labels_path, "label store .csv")->required()->check(CLI::ExistingFile);

  auto* all = app.add_subcommand("run-all", "all three stages with every artifact");
  add_common(*all, common);
  all->add_option("--data", data_dir, "use these splits instead of generating them");

  auto* eval = app.add_subcommand("eval-labels", "compare a label store with the hidden truth");
  add_common(*eval, common);
  eval->add_option("--data", data_dir, "directory with train.jsonl")->required();
  eval->add_option("--labels", labels_path, "label store .csv")->required()->check(CLI::ExistingFile);

  auto* emb = app.add_subcommand("export-embeddings", "write unimodal and projected embeddings");
  add_common(*emb, common);
  emb->add_option("--data", data_dir, "directory with train/val/test .jsonl")->required();
  emb->add_option("--checkpoint", checkpoint_path, "model checkpoint")
      ->required()
      ->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    // Usage of the subcommand that failed to parse, if any.
    const CLI::App* failed = &app;
    for (const CLI::App* sub : app.get_subcommands()) failed = sub;
    err << "error: " << e.what() << "\n\n" << failed->help();
    return kUsage;
  }

  try {
    const Config config = resolve_config(common);
    const fs::path outdir = common.out;
    const auto log = progress(common, err);

    if (gen->parsed()) {
      data::save_generated(outdir, data::generate(config.data));
      out << (outdir / "train.jsonl").string() << '\n';
    } else if (s1->parsed()) {
      const auto splits = pipeline::load_splits(data_dir);
      const auto art = pipeline::RunArtifacts::under(outdir);
      const auto r = pipeline::run_stage1(config, view_of(splits.train), log);
      nn::save_checkpoint(art.stage1_checkpoint, r.params);
      meta::save_bank(art.bank, r.bank);
      meta::save_bank(art.val_bank, pipeline::build_bank(r.params, view_of(splits.val)));
      out << art.bank.string() << '\n';
    } else if (s2->parsed()) {
      const auto art = pipeline::RunArtifacts::under(outdir);
      const meta::FrozenBank bank = meta::load_bank(bank_path);
      const auto r = pipeline::run_stage2(config, bank, log);
      std::optional<meta::FrozenBank> val_bank;
      if (!val_bank_path.empty()) val_bank = meta::load_bank(val_bank_path);
      save_labels(art.labels, pipeline::stage2_labels(config, r, val_bank ? &*val_bank : nullptr));
      io::write_file_atomic(art.gate_log, meta::gate_log_csv(r.gates));
      for (Modality m : kModalities) {
        nn::save_checkpoint(outdir / "stage2" / (std::string("mucn_") + short_name(m) + ".txt"),
                            r.mucn[index(m)]);
      }
      out << art.labels.string() << '\n';
    } else if (s3->parsed()) {
      const auto splits = pipeline::load_splits(data_dir);
      const auto art = pipeline::RunArtifacts::under(outdir);
      auto r = pipeline::run_stage3(config, view_of(splits.train), view_of(splits.val),
                                    view_of(splits.test), load_labels(labels_path), log);
      nn::save_checkpoint(art.stage3_checkpoint, r.params);
      if (splits.train.has_truth()) {
        r.report.labels = metrics::label_quality(load_labels(labels_path), splits.train);
      }
      metrics::save_report(art.metrics, r.report);
      out << metrics::report_json(r.report) << '\n';
    } else if (all->parsed()) {
      std::optional<fs::path> source;
      if (!data_dir.empty()) source = data_dir;
      const auto art = pipeline::run_all(config, outdir, source, log);
      out << io::read_file(art.metrics) << '\n';
    } else if (eval->parsed()) {
      const data::Dataset train = data::load(fs::path(data_dir) / "train.jsonl");
      const metrics::LabelQuality q = metrics::label_quality(load_labels(labels_path), train);
      std::string text = "modality,label_mae,baseline_mae\n";
      for (Modality m : kModalities) {
        text += std::string(short_name(m)) + ',' + io::format_double(q.label_mae[index(m)]) + ',' +
                io::format_double(q.baseline_mae[index(m)]) + '\n';
      }
      io::write_file_atomic(outdir / "label_quality.csv", text);
      out << text;
    } else if (emb->parsed()) {
      const auto splits = pipeline::load_splits(data_dir);
      const nn::ParamStore params = nn::load_checkpoint(checkpoint_path);
      const fs::path path = outdir / "embeddings.csv";
      io::write_file_atomic(path, pipeline::export_embeddings(params, view_of(splits.train)));
      out << path.string() << '\n';
    }
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

}  // namespace unilabel::cli
