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

#include "unilabel/data.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <set>

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"

namespace unilabel::data {

using nlohmann::json;

void GenSpec::validate() const {
  if (n_train == 0 || n_val == 0 || n_test == 0) throw ConfigError("split sizes must be positive");
  for (auto d : feature_dims) {
    if (d == 0) throw ConfigError("feature dimensions must be positive");
  }
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  if (sigma_inc < 0.0 || sigma_y < 0.0 || sigma_x < 0.0) {
    throw ConfigError("noise standard deviations must be nonnegative");
  }
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ConfigError("label mixing weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("label mixing weights must sum to 1");
}

bool Dataset::has_truth() const noexcept {
  return !samples.empty() &&
         std::all_of(samples.begin(), samples.end(), [](const Sample& s) { return s.truth.has_value(); });
}

TrainView TrainView::gather(std::span<const std::size_t> rows) const {
  TrainView out;
  for (Modality m : kModalities) {
    const Tensor& src = x[index(m)];
    const std::size_t w = src.cols();
    std::vector<double> data(rows.size() * w);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      std::copy_n(src.data().begin() + rows[r] * w, w, data.begin() + r * w);
    }
    out.x[index(m)] = Tensor::unchecked({rows.size(), w}, std::move(data));
  }
  for (auto r : rows) {
    out.ids.push_back(ids[r]);
    out.y.push_back(y[r]);
  }
  return out;
}

TrainView training_view(const Dataset& ds) {
  if (ds.samples.empty()) throw Error("empty dataset");
  TrainView v;
  const std::size_t n = ds.size();
  for (Modality m : kModalities) {
    const std::size_t w = ds.samples.front().x[index(m)].size();
    std::vector<double> data;
    data.reserve(n * w);
    for (const auto& s : ds.samples) {
      if (s.x[index(m)].size() != w) throw ShapeError("ragged feature vectors");
      data.insert(data.end(), s.x[index(m)].begin(), s.x[index(m)].end());
    }
    v.x[index(m)] = Tensor({n, w}, std::move(data));
  }
  for (const auto& s : ds.samples) {
    v.ids.push_back(s.id);
    v.y.push_back(s.y);
  }
  return v;
}

PerModality<double> copy_label_error(const Dataset& ds) {
  if (!ds.has_truth()) throw TruthUnavailable();
  PerModality<double> out{};
  for (Modality m : kModalities) {
    double acc = 0.0;
    for (const auto& s : ds.samples) acc += std::abs((*s.truth)[index(m)] - s.y);
    out[index(m)] = acc / static_cast<double>(ds.size());
  }
  return out;
}

std::array<double, 4> feature_basis(double s) {
  return {s, s * s, std::sin(2.0 * s), std::cos(3.0 * s)};
}

Generated generate(const GenSpec& spec) {
  spec.validate();
  std::normal_distribution<double> normal(0.0, 1.0);

  // Mixing matrices A_m [feature_dim x 4].
  PerModality<std::vector<double>> mixing;
  for (Modality m : kModalities) {
    auto rng = substream(spec.seed, {0xA11CE, index(m)});
    mixing[index(m)].resize(spec.feature_dims[index(m)] * 4);
    for (auto& a : mixing[index(m)]) a = 0.5 * normal(rng);
  }

  auto make_sample = [&](long long id) {
    auto rng = substream(spec.seed, {1, static_cast<std::uint64_t>(id)});
    std::uniform_real_distribution<double> base(-spec.rho, spec.rho);
    Sample s;
    s.id = id;
    const double shared = base(rng);
    PerModality<double> truth{};
    for (Modality m : kModalities) {
      const double drift = spec.sigma_inc * normal(rng);
      truth[index(m)] = std::clamp(shared + drift, -spec.rho, spec.rho);
    }
    // Equal to sum_m w_m s_m because the weights sum to one; written as an
    // offset from the shared sentiment so zero drift reproduces it exactly.
    double y = shared;
    for (Modality m : kModalities) y += spec.weights[index(m)] * (truth[index(m)] - shared);
    y += spec.sigma_y * normal(rng);
    s.y = std::clamp(y, -spec.rho, spec.rho);

    for (Modality m : kModalities) {
      const auto phi = feature_basis(truth[index(m)]);
      const std::size_t d = spec.feature_dims[index(m)];
      auto& x = s.x[index(m)];
      x.resize(d + spec.distractor_dims);
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < 4; ++c) acc += mixing[index(m)][r * 4 + c] * phi[c];
        x[r] = acc + spec.sigma_x * normal(rng);
      }
      for (std::size_t r = d; r < x.size(); ++r) x[r] = normal(rng);
    }
    s.truth = truth;
    return s;
  };

  Generated g;
  long long next = 0;
  for (std::size_t i = 0; i < spec.n_train; ++i) g.train.samples.push_back(make_sample(next++));
  for (std::size_t i = 0; i < spec.n_val; ++i) g.val.samples.push_back(make_sample(next++));
  for (std::size_t i = 0; i < spec.n_test; ++i) g.test.samples.push_back(make_sample(next++));
  g.baseline.train = copy_label_error(g.train);
  g.baseline.val = copy_label_error(g.val);
  g.baseline.test = copy_label_error(g.test);
  return g;
}

namespace {

const char* const kFeatureKeys[3] = {"x_a", "x_v", "x_l"};
const char* const kTruthKeys[3] = {"s_a", "s_v", "s_l"};

void append_array(std::string& out, const std::vector<double>& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += io::format_double(v[i]);
  }
  out += ']';
}

double finite_number(const json& j, const char* key) {
  if (!j.is_number()) throw std::invalid_argument(std::string("field '") + key + "' is not a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("field '") + key + "' is not finite");
  return v;
}

}  // namespace

std::string to_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& s : ds.samples) {
    out += "{\"id\":" + std::to_string(s.id);
    for (Modality m : kModalities) {
      out += ",\"";
      out += kFeatureKeys[index(m)];
      out += "\":";
      append_array(out, s.x[index(m)]);
    }
    out += ",\"y\":" + io::format_double(s.y);
    if (s.truth) {
      for (Modality m : kModalities) {
        out += ",\"";
        out += kTruthKeys[index(m)];
        out += "\":" + io::format_double((*s.truth)[index(m)]);
      }
    }
    out += "}\n";
  }
  return out;
}

Dataset parse_jsonl(std::string_view text) {
  static const std::set<std::string> kKnown{"id", "x_a", "x_v", "x_l", "y", "s_a", "s_v", "s_l"};
  Dataset ds;
  std::set<long long> seen;
  std::optional<PerModality<std::size_t>> dims;
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
      if (!j.is_object()) throw std::invalid_argument("record is not an object");
      for (const auto& [key, _] : j.items()) {
        if (!kKnown.count(key)) throw std::invalid_argument("unknown field '" + key + "'");
      }
      Sample s;
      if (!j.contains("id") || !j["id"].is_number_integer()) {
        throw std::invalid_argument("missing or non-integer field 'id'");
      }
      s.id = j["id"].get<long long>();
      if (!seen.insert(s.id).second) throw std::invalid_argument("duplicate id " + std::to_string(s.id));
      for (Modality m : kModalities) {
        const char* key = kFeatureKeys[index(m)];
        if (!j.contains(key) || !j[key].is_array() || j[key].empty()) {
          throw std::invalid_argument(std::string("missing or empty field '") + key + "'");
        }
        for (const auto& v : j[key]) s.x[index(m)].push_back(finite_number(v, key));
      }
      if (!j.contains("y")) throw std::invalid_argument("missing field 'y'");
      s.y = finite_number(j["y"], "y");
      int truth_fields = 0;
      PerModality<double> truth{};
      for (Modality m : kModalities) {
        const char* key = kTruthKeys[index(m)];
        if (j.contains(key)) {
          truth[index(m)] = finite_number(j[key], key);
          ++truth_fields;
        }
      }
      if (truth_fields == 3) {
        s.truth = truth;
      } else if (truth_fields != 0) {
        throw std::invalid_argument("truth fields must be all present or all absent");
      }
      PerModality<std::size_t> d{s.x[0].size(), s.x[1].size(), s.x[2].size()};
      if (!dims) dims = d;
      if (*dims != d) throw std::invalid_argument("feature widths differ from earlier records");
      ds.samples.push_back(std::move(s));
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    } catch (const json::exception& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return ds;
}

void save(const std::filesystem::path& path, const Dataset& ds) {
  io::write_file_atomic(path, to_jsonl(ds));
}

Dataset load(const std::filesystem::path& path) { return parse_jsonl(io::read_file(path)); }

std::string baseline_json(const BaselineReport& r) {
  nlohmann::ordered_json j;
  auto split = [](const PerModality<double>& b) {
    nlohmann::ordered_json s;
    for (Modality m : kModalities) s[short_name(m)] = b[index(m)];
    return s;
  };
  j["train"] = split(r.train);
  j["val"] = split(r.val);
  j["test"] = split(r.test);
  return j.dump(2) + "\n";
}

void save_generated(const std::filesystem::path& dir, const Generated& g) {
  save(dir / "train.jsonl", g.train);
  save(dir / "val.jsonl", g.val);
  save(dir / "test.jsonl", g.test);
  io::write_file_atomic(dir / "baseline.json", baseline_json(g.baseline));
}

}  // namespace unilabel::data
