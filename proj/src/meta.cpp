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

#include "unilabel/meta.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"
#include "unilabel/kernels.hpp"
#include "unilabel/model.hpp"

namespace unilabel::meta {

using nlohmann::json;

// ---------------------------------------------------------------- bank

void FrozenBank::validate() const {
  const std::size_t n = ids.size();
  if (n == 0) throw EmptyBatch();
  if (y.size() != n) throw ShapeError("bank: y rows differ from ids");
  for (Modality m : kModalities) {
    const std::size_t i = index(m);
    if (uni[i].rows() != n || proj[i].rows() != n || proj_pred[i].size() != n) {
      throw ShapeError(std::string("bank: row count mismatch for modality ") + short_name(m));
    }
    if (uni[i].cols() != proj[i].cols()) {
      throw ShapeError(std::string("bank: unimodal and projected widths differ for ") +
                       short_name(m));
    }
  }
}

bool FrozenBank::operator==(const FrozenBank& o) const {
  return ids == o.ids && y == o.y && uni == o.uni && proj == o.proj && proj_pred == o.proj_pred;
}

namespace {

void append_row(std::string& out, const Tensor& t, std::size_t r) {
  out += '[';
  for (std::size_t c = 0; c < t.cols(); ++c) {
    if (c) out += ',';
    out += io::format_double(t.at(r, c));
  }
  out += ']';
}

std::string key(const char* prefix, Modality m) { return std::string(prefix) + short_name(m); }

double finite(const json& j, const std::string& name) {
  if (!j.is_number()) throw std::invalid_argument("field '" + name + "' is not a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument("field '" + name + "' is not finite");
  return v;
}

}  // namespace

std::string bank_jsonl(const FrozenBank& bank) {
  bank.validate();
  std::string out;
  for (std::size_t r = 0; r < bank.size(); ++r) {
    out += "{\"id\":" + std::to_string(bank.ids[r]);
    out += ",\"y\":" + io::format_double(bank.y[r]);
    for (Modality m : kModalities) {
      const std::size_t i = index(m);
      out += ",\"" + key("x_", m) + "\":";
      append_row(out, bank.uni[i], r);
      out += ",\"" + key("p_", m) + "\":";
      append_row(out, bank.proj[i], r);
      out += ",\"" + key("yp_", m) + "\":" + io::format_double(bank.proj_pred[i][r]);
    }
    out += "}\n";
  }
  return out;
}

FrozenBank parse_bank_jsonl(std::string_view text) {
  FrozenBank bank;
  PerModality<std::vector<double>> uni, proj;
  PerModality<std::size_t> width{};
  std::size_t line_no = 0;
  for (auto line : io::split(text, '\n')) {
    ++line_no;
    line = io::trim(line);
    if (line.empty()) continue;
    try {
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error& e) {
        throw std::invalid_argument(std::string("malformed record: ") + e.what());
      }
      if (!j.is_object() || j.size() != 11) {
        throw std::invalid_argument("expected an object with 11 fields");
      }
      if (!j.contains("id") || !j["id"].is_number_integer()) {
        throw std::invalid_argument("missing or non-integer field 'id'");
      }
      bank.ids.push_back(j["id"].get<long long>());
      if (!j.contains("y")) throw std::invalid_argument("missing field 'y'");
      bank.y.push_back(finite(j["y"], "y"));
      for (Modality m : kModalities) {
        const std::size_t i = index(m);
        for (auto [name, dest] : {std::pair{key("x_", m), &uni[i]}, std::pair{key("p_", m), &proj[i]}}) {
          if (!j.contains(name) || !j[name].is_array() || j[name].empty()) {
            throw std::invalid_argument("missing or empty field '" + name + "'");
          }
          if (width[i] == 0) width[i] = j[name].size();
          if (j[name].size() != width[i]) {
            throw std::invalid_argument("field '" + name + "' has inconsistent width");
          }
          for (const auto& v : j[name]) dest->push_back(finite(v, name));
        }
        const std::string yp = key("yp_", m);
        if (!j.contains(yp)) throw std::invalid_argument("missing field '" + yp + "'");
        bank.proj_pred[i].push_back(finite(j[yp], yp));
      }
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    }
  }
  if (bank.ids.empty()) throw ParseError(line_no, "empty bank");
  const std::size_t n = bank.ids.size();
  for (Modality m : kModalities) {
    const std::size_t i = index(m);
    bank.uni[i] = Tensor({n, width[i]}, std::move(uni[i]));
    bank.proj[i] = Tensor({n, width[i]}, std::move(proj[i]));
  }
  return bank;
}

void save_bank(const std::filesystem::path& path, const FrozenBank& bank) {
  io::write_file_atomic(path, bank_jsonl(bank));
}

FrozenBank load_bank(const std::filesystem::path& path) {
  return parse_bank_jsonl(io::read_file(path));
}

// ---------------------------------------------------------------- config

void MetaConfig::validate() const {
  if (!(alpha >= 0.0) || !(meta_alpha >= 0.0)) throw ConfigError("learning rates must be >= 0");
  if (!(sigma >= kMinSigma)) throw ConfigError("sigma must be at least 1e-12");
  if (!(lambda_init > 0.0 && lambda_init < 1.0)) throw ConfigError("lambda_init must be in (0, 1)");
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  if (oversample < 1) throw ConfigError("oversample must be >= 1");
  if (k_inner < 1) throw ConfigError("k_inner must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double lambda_schedule(double lambda_init, std::size_t epoch) {
  if (!(lambda_init > 0.0 && lambda_init < 1.0)) throw ConfigError("lambda_init must be in (0, 1)");
  return std::pow(lambda_init, static_cast<double>(epoch + 1));
}

double mixed_target(double prev, double y, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must be in [0, 1]");
  return lambda * prev + (1.0 - lambda) * y;
}

double corrupt_label(double y, double sigma, std::mt19937_64& rng) {
  if (!(sigma >= kMinSigma)) throw ConfigError("sigma must be at least 1e-12");
  std::normal_distribution<double> z(0.0, 1.0);
  return y + sigma * z(rng);
}

double make_noisy_label(double pred, double sigma, std::mt19937_64& rng) {
  return corrupt_label(pred, sigma, rng);
}

// ---------------------------------------------------------------- tasks

ad::Var denoise_loss(const nn::Bound& mucn, const Tensor& reps, std::span<const double> labels,
                     std::span<const double> targets, double rho) {
  const std::size_t n = reps.rows();
  if (labels.size() != n || targets.size() != n) {
    throw ShapeError("denoise_loss: labels, targets and representations disagree");
  }
  const ad::Var label = ad::Var::constant(Tensor({n, 1}, {labels.begin(), labels.end()}));
  const ad::Var target = ad::Var::constant(Tensor({n, 1}, {targets.begin(), targets.end()}));
  const ad::Var out = model::mucn_forward(mucn, ad::Var::constant(reps), label, rho);
  return ad::mean_all(ad::abs(ad::sub(target, out)));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> rows) {
  if (rows.empty()) throw EmptyBatch();
  const std::size_t w = t.cols();
  std::vector<double> out;
  out.reserve(rows.size() * w);
  const auto src = t.data();
  for (std::size_t r : rows) {
    if (r >= t.rows()) throw std::out_of_range("gather_rows: row out of range");
    out.insert(out.end(), src.begin() + r * w, src.begin() + (r + 1) * w);
  }
  return Tensor({rows.size(), w}, std::move(out));
}

OuterDraw draw_outer_set(std::size_t n, std::span<const std::size_t> task, std::size_t oversample,
                         std::mt19937_64& rng) {
  OuterDraw d;
  const std::size_t want = oversample * task.size();
  std::vector<char> in_task(n, 0);
  for (std::size_t i : task) {
    if (i >= n) throw std::out_of_range("draw_outer_set: task index out of range");
    in_task[i] = 1;
  }
  std::vector<std::size_t> pool;
  pool.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!in_task[i]) pool.push_back(i);
  }
  if (pool.size() >= want) {
    // Partial Fisher-Yates: the first `want` entries are a uniform sample.
    for (std::size_t k = 0; k < want; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    pool.resize(want);
    d.extra = std::move(pool);
  } else {
    d.with_replacement = true;
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    d.extra.resize(want);
    for (auto& v : d.extra) v = pick(rng);
  }
  return d;
}

const char* branch_name(Branch b) {
  return b == Branch::kAccepted ? "accepted" : "meta_updated";
}

// ---------------------------------------------------------------- gate

GateOutcome gate_step(nn::ParamStore& params, const TaskLoss& inner, const TaskLoss& outer,
                      const GateConfig& config) {
  if (config.k_inner < 1) throw ConfigError("k_inner must be >= 1");
  GateOutcome out;
  out.loss_pre = outer(nn::bind_constant(params)).item();

  ad::Graph g;
  const nn::Bound theta = nn::bind(g, params);
  std::vector<ad::Var> current = theta.vars();
  for (std::size_t k = 0; k < config.k_inner; ++k) {
    const ad::Var loss = inner(nn::Bound(theta.names(), current));
    if (!std::isfinite(loss.item())) throw NumericalError("non-finite inner loss");
    current = ad::sgd_step(loss, current, config.alpha, config.second_order);
  }
  const ad::Var post = outer(nn::Bound(theta.names(), current));
  out.loss_post = post.item();
  if (!std::isfinite(out.loss_pre) || !std::isfinite(out.loss_post)) {
    throw NumericalError("non-finite denoising loss at the gate");
  }

  if (out.loss_post < out.loss_pre) {
    out.branch = Branch::kAccepted;
    const auto updated = ad::values(current);
    for (const auto& t : updated) {
      if (!t.all_finite()) throw NumericalError("non-finite parameters after the inner step");
    }
    params.assign(updated);
    return out;
  }

  out.branch = Branch::kMetaUpdated;
  const ad::InnerStep step{theta.vars(), current, config.second_order};
  const auto hg = ad::hypergrad(post, step,
                                config.second_order ? ad::HypergradMode::kSecondOrder
                                                    : ad::HypergradMode::kFirstOrder);
  std::vector<Tensor> next;
  next.reserve(hg.size());
  std::size_t i = 0;
  for (const auto& [name, value] : params) {
    const Tensor& h = hg[i++].value();
    if (!h.all_finite()) throw NumericalError("non-finite hypergradient for '" + name + "'");
    Tensor t = value;
    kernels::axpy(value.data(), -config.meta_alpha, h.data(), t.data());
    next.push_back(std::move(t));
  }
  params.assign(next);
  return out;
}

// ---------------------------------------------------------------- loops

std::vector<double> correct_labels(const nn::ParamStore& mucn, const FrozenBank& bank,
                                   Modality m, double rho) {
  const std::size_t n = bank.size();
  const ad::Var out =
      model::mucn_forward(nn::bind_constant(mucn), ad::Var::constant(bank.uni[index(m)]),
                          ad::Var::constant(Tensor({n, 1}, bank.y)), rho);
  const auto v = out.value().data();
  return {v.begin(), v.end()};
}

ModalityResult run_modality(const MetaConfig& config, const FrozenBank& bank, Modality m,
                            nn::ParamStore mucn) {
  config.validate();
  bank.validate();
  const std::size_t mi = index(m);
  const std::size_t n = bank.size();
  const Tensor& uni = bank.uni[mi];
  const Tensor& proj = bank.proj[mi];
  const std::size_t half = config.epochs / 2;
  const GateConfig gate{config.alpha, config.meta_alpha, config.k_inner, config.second_order};

  ModalityResult result;
  std::vector<double> prev;  // labels from the end of the previous epoch
  std::vector<double> targets(n);
  std::vector<std::size_t> order(n);
  std::size_t fallbacks = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (epoch < half || prev.empty()) {
      targets = bank.y;
    } else {
      const double lambda = lambda_schedule(config.lambda_init, epoch);
      for (std::size_t j = 0; j < n; ++j) targets[j] = mixed_target(prev[j], bank.y[j], lambda);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng = substream(config.seed, {2, mi, epoch});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochCounts counts;
    const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::span<const std::size_t> task(order.data() + lo,
                                              std::min(config.batch_size, n - lo));
      std::mt19937_64 rng = substream(config.seed, {3, mi, epoch, b});

      std::vector<double> noisy(task.size()), task_targets(task.size());
      for (std::size_t j = 0; j < task.size(); ++j) {
        noisy[j] = corrupt_label(bank.y[task[j]], config.sigma, rng);
        task_targets[j] = targets[task[j]];
      }
      const OuterDraw draw = draw_outer_set(n, task, config.oversample, rng);
      if (draw.with_replacement) ++fallbacks;
      std::vector<std::size_t> outer_rows(task.begin(), task.end());
      outer_rows.insert(outer_rows.end(), draw.extra.begin(), draw.extra.end());
      std::vector<double> outer_noisy(outer_rows.size()), outer_y(outer_rows.size());
      for (std::size_t k = 0; k < outer_rows.size(); ++k) {
        outer_noisy[k] = make_noisy_label(bank.proj_pred[mi][outer_rows[k]], config.sigma, rng);
        outer_y[k] = bank.y[outer_rows[k]];
      }
      const Tensor task_reps = gather_rows(uni, task);
      const Tensor outer_reps = gather_rows(proj, outer_rows);

      const TaskLoss inner = [&](const nn::Bound& p) {
        return unimodal_denoise_loss(p, task_reps, noisy, task_targets, config.rho);
      };
      const TaskLoss outer = [&](const nn::Bound& p) {
        return multimodal_denoise_loss(p, outer_reps, outer_noisy, outer_y, config.rho);
      };
      try {
        const GateOutcome o = gate_step(mucn, inner, outer, gate);
        result.gates.push_back({epoch, b, m, o.loss_pre, o.loss_post, o.branch});
        ++(o.branch == Branch::kAccepted ? counts.accepted : counts.meta_updated);
      } catch (const NumericalError& e) {
        ++counts.skipped;
        result.notes.push_back(std::string("modality ") + short_name(m) + " epoch " +
                               std::to_string(epoch) + " batch " + std::to_string(b) +
                               ": step skipped: " + e.what());
      }
    }
    result.counts.push_back(counts);
    prev = correct_labels(mucn, bank, m, config.rho);
  }
  if (fallbacks > 0) {
    result.notes.push_back(std::string("modality ") + short_name(m) + ": " +
                           std::to_string(fallbacks) +
                           " outer sets drawn with replacement (dataset too small)");
  }
  result.mucn = std::move(mucn);
  return result;
}

LabelStore extract_labels(const PerModality<nn::ParamStore>& mucn, const FrozenBank& bank,
                          double rho) {
  bank.validate();
  PerModality<std::vector<double>> corrected;
  for (Modality m : kModalities) corrected[index(m)] = correct_labels(mucn[index(m)], bank, m, rho);
  LabelStore store;
  for (std::size_t j = 0; j < bank.size(); ++j) {
    LabelRow row;
    row.y = bank.y[j];
    for (std::size_t i = 0; i < 3; ++i) row.corrected[i] = corrected[i][j];
    store.set(bank.ids[j], row);
  }
  return store;
}

MetaResult run_meta(const MetaConfig& config, const FrozenBank& bank) {
  config.validate();
  bank.validate();
  PerModality<ModalityResult> parts;
  auto run = [&](Modality m) {
    return run_modality(config, bank, m,
                        model::init_mucn(bank.width(m), config.seed, index(m)));
  };
  if (config.parallel) {
    std::vector<std::future<ModalityResult>> futures;
    for (Modality m : kModalities) futures.push_back(std::async(std::launch::async, run, m));
    for (std::size_t i = 0; i < 3; ++i) parts[i] = futures[i].get();
  } else {
    for (Modality m : kModalities) parts[index(m)] = run(m);
  }
  MetaResult out;
  for (std::size_t i = 0; i < 3; ++i) {
    out.gates.insert(out.gates.end(), parts[i].gates.begin(), parts[i].gates.end());
    out.notes.insert(out.notes.end(), parts[i].notes.begin(), parts[i].notes.end());
    out.counts[i] = std::move(parts[i].counts);
    out.mucn[i] = std::move(parts[i].mucn);
  }
  out.labels = extract_labels(out.mucn, bank, config.rho);
  return out;
}

std::string gate_log_csv(std::span<const GateRecord> gates) {
  std::string out = "epoch,batch,modality,loss_pre,loss_post,branch\n";
  for (const auto& g : gates) {
    out += std::to_string(g.epoch) + ',' + std::to_string(g.batch) + ',' + short_name(g.modality) +
           ',' + io::format_double(g.loss_pre) + ',' + io::format_double(g.loss_post) + ',' +
           branch_name(g.branch) + '\n';
  }
  return out;
}

}  // namespace unilabel::meta
