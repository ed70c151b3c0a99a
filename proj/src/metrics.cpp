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

#include "unilabel/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"

namespace unilabel::metrics {

namespace {

void check_lengths(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("metrics: predictions and labels differ in length");
}

}  // namespace

int sentiment_class(double v) {
  return static_cast<int>(std::round(std::clamp(v, -3.0, 3.0)));
}

double acc7(std::span<const double> preds, std::span<const double> labels) {
  check_lengths(preds, labels);
  if (preds.empty()) throw EmptyBatch();
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    hit += sentiment_class(preds[i]) == sentiment_class(labels[i]);
  }
  return static_cast<double>(hit) / static_cast<double>(preds.size());
}

BinaryScores acc2_f1(std::span<const double> preds, std::span<const double> labels, F1Mode mode) {
  check_lengths(preds, labels);
  // Confusion counts with "positive" as class 1.
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] == 0.0) continue;
    const bool truth = labels[i] > 0.0;
    const bool guess = preds[i] > 0.0;
    if (truth && guess) ++tp;
    else if (truth) ++fn;
    else if (guess) ++fp;
    else ++tn;
  }
  BinaryScores s;
  s.n = tp + fp + tn + fn;
  if (s.n == 0) return s;
  const double n = static_cast<double>(s.n);
  s.acc2 = static_cast<double>(tp + tn) / n;
  auto f1 = [](std::size_t t, std::size_t f_pos, std::size_t f_neg) {
    const std::size_t denom = 2 * t + f_pos + f_neg;
    return denom == 0 ? 0.0 : 2.0 * static_cast<double>(t) / static_cast<double>(denom);
  };
  const double f1_pos = f1(tp, fp, fn);
  if (mode == F1Mode::kBinaryPositive) {
    s.f1 = f1_pos;
  } else {
    const double f1_neg = f1(tn, fn, fp);
    s.f1 = (static_cast<double>(tp + fn) * f1_pos + static_cast<double>(tn + fp) * f1_neg) / n;
  }
  return s;
}

std::optional<double> corr(std::span<const double> preds, std::span<const double> labels) {
  check_lengths(preds, labels);
  const std::size_t n = preds.size();
  if (n == 0) return std::nullopt;
  double mp = 0.0, ml = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mp += preds[i];
    ml += labels[i];
  }
  mp /= static_cast<double>(n);
  ml /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = preds[i] - mp, b = labels[i] - ml;
    sxy += a * b;
    sxx += a * a;
    syy += b * b;
  }
  const double vx = sxx / static_cast<double>(n), vy = syy / static_cast<double>(n);
  if (vx <= 1e-12 || vy <= 1e-12) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

LabelQuality label_quality(const LabelStore& labels, const data::Dataset& ds) {
  if (ds.size() == 0) throw EmptyBatch();
  if (!ds.has_truth()) throw TruthUnavailable();
  LabelQuality q;
  for (const auto& s : ds.samples) {
    const LabelRow& row = labels.at(s.id);
    for (Modality m : kModalities) {
      const std::size_t i = index(m);
      q.label_mae[i] += std::abs(row.corrected[i] - (*s.truth)[i]);
      q.baseline_mae[i] += std::abs(s.y - (*s.truth)[i]);
    }
  }
  const double n = static_cast<double>(ds.size());
  for (std::size_t i = 0; i < 3; ++i) {
    q.label_mae[i] /= n;
    q.baseline_mae[i] /= n;
  }
  return q;
}

MetricsReport evaluate(std::span<const double> preds, std::span<const double> labels,
                       F1Mode mode) {
  check_lengths(preds, labels);
  if (preds.empty()) throw EmptyBatch();
  MetricsReport r;
  double sum = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) sum += std::abs(labels[i] - preds[i]);
  r.mae = sum / static_cast<double>(preds.size());
  r.corr = corr(preds, labels);
  const BinaryScores b = acc2_f1(preds, labels, mode);
  r.acc2 = b.acc2;
  r.f1 = b.f1;
  r.acc7 = acc7(preds, labels);
  r.n_eval = preds.size();
  return r;
}

std::string report_json(const MetricsReport& r) {
  using nlohmann::ordered_json;
  auto opt = [](const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(); };
  auto per = [&](const PerModality<double>* v) {
    ordered_json o = ordered_json::object();
    for (Modality m : kModalities) {
      o[short_name(m)] = v ? ordered_json((*v)[index(m)]) : ordered_json();
    }
    return o;
  };
  ordered_json j;
  j["mae"] = r.mae;
  j["corr"] = opt(r.corr);
  j["acc2"] = opt(r.acc2);
  j["f1"] = opt(r.f1);
  j["acc7"] = r.acc7;
  j["label_mae"] = per(r.labels ? &r.labels->label_mae : nullptr);
  j["baseline_mae"] = per(r.labels ? &r.labels->baseline_mae : nullptr);
  j["n_eval"] = r.n_eval;
  return j.dump(2) + "\n";
}

void save_report(const std::filesystem::path& path, const MetricsReport& r) {
  io::write_file_atomic(path, report_json(r));
}

}  // namespace unilabel::metrics
