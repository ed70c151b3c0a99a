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

#include "unilabel/config.hpp"

#include <functional>
#include <map>

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"

namespace unilabel {

namespace {

struct Field {
  std::function<void(Config&, std::string_view)> set;
  std::function<std::string(const Config&)> get;
};

std::size_t to_size(std::string_view v) {
  const long long x = io::parse_int(v);
  if (x < 0) throw std::invalid_argument("must be non-negative");
  return static_cast<std::size_t>(x);
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected true or false");
}

template <typename T>
Field size_field(T Config::*member) {
  return {[member](Config& c, std::string_view v) { c.*member = to_size(v); },
          [member](const Config& c) { return std::to_string(c.*member); }};
}

Field real_field(double Config::*member) {
  return {[member](Config& c, std::string_view v) { c.*member = io::parse_double(v); },
          [member](const Config& c) { return io::format_double(c.*member); }};
}

Field bool_field(bool Config::*member) {
  return {[member](Config& c, std::string_view v) { c.*member = to_bool(v); },
          [member](const Config& c) { return std::string(c.*member ? "true" : "false"); }};
}

template <typename Get>
Field data_size(Get get) {
  return {[get](Config& c, std::string_view v) { get(c.data) = to_size(v); },
          [get](const Config& c) {
            return std::to_string(get(c.data));
          }};
}

template <typename Get>
Field data_real(Get get) {
  return {[get](Config& c, std::string_view v) { get(c.data) = io::parse_double(v); },
          [get](const Config& c) {
            return io::format_double(get(c.data));
          }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    t.emplace_back("batch_size", size_field(&Config::batch_size));
    t.emplace_back("learning_rate", real_field(&Config::learning_rate));
    t.emplace_back("weight_decay", real_field(&Config::weight_decay));
    t.emplace_back("pretrain_epochs", size_field(&Config::pretrain_epochs));
    t.emplace_back("train_epochs", size_field(&Config::train_epochs));
    t.emplace_back("patience", size_field(&Config::patience));
    t.emplace_back("meta_epochs", size_field(&Config::meta_epochs));
    t.emplace_back("alpha", real_field(&Config::alpha));
    t.emplace_back("meta_alpha", real_field(&Config::meta_alpha));
    t.emplace_back("sigma", real_field(&Config::sigma));
    t.emplace_back("lambda_init", real_field(&Config::lambda_init));
    t.emplace_back("oversample", size_field(&Config::oversample));
    t.emplace_back("k_inner", size_field(&Config::k_inner));
    t.emplace_back("second_order", bool_field(&Config::second_order));
    t.emplace_back("parallel", bool_field(&Config::parallel));
    t.emplace_back("gamma", real_field(&Config::gamma));
    t.emplace_back("eta", real_field(&Config::eta));
    t.emplace_back("beta", real_field(&Config::beta));
    t.emplace_back("tau", real_field(&Config::tau));
    t.emplace_back("d", size_field(&Config::d));
    t.emplace_back("d_a", size_field(&Config::d_a));
    t.emplace_back("d_v", size_field(&Config::d_v));
    t.emplace_back("d_l", size_field(&Config::d_l));
    t.emplace_back("enc_hidden", size_field(&Config::enc_hidden));
    t.emplace_back("pred_hidden", size_field(&Config::pred_hidden));
    t.emplace_back("rho", Field{[](Config& c, std::string_view v) {
                                  c.rho = io::parse_double(v);
                                  c.data.rho = c.rho;
                                },
                                [](const Config& c) { return io::format_double(c.rho); }});
    t.emplace_back("seed", Field{[](Config& c, std::string_view v) {
                                   const long long s = io::parse_int(v);
                                   if (s < 0) throw std::invalid_argument("must be non-negative");
                                   c.seed = static_cast<std::uint64_t>(s);
                                 },
                                 [](const Config& c) { return std::to_string(c.seed); }});
    t.emplace_back("f1_mode",
                   Field{[](Config& c, std::string_view v) {
                           if (v == "weighted") c.f1_mode = metrics::F1Mode::kWeighted;
                           else if (v == "binary") c.f1_mode = metrics::F1Mode::kBinaryPositive;
                           else throw std::invalid_argument("expected weighted or binary");
                         },
                         [](const Config& c) {
                           return std::string(c.f1_mode == metrics::F1Mode::kWeighted ? "weighted"
                                                                                      : "binary");
                         }});
    t.emplace_back("data_seed", Field{[](Config& c, std::string_view v) {
                                        const long long s = io::parse_int(v);
                                        if (s < 0) throw std::invalid_argument("must be non-negative");
                                        c.data.seed = static_cast<std::uint64_t>(s);
                                      },
                                      [](const Config& c) { return std::to_string(c.data.seed); }});
    t.emplace_back("n_train", data_size([](auto& g) -> auto& { return g.n_train; }));
    t.emplace_back("n_val", data_size([](auto& g) -> auto& { return g.n_val; }));
    t.emplace_back("n_test", data_size([](auto& g) -> auto& { return g.n_test; }));
    for (Modality m : kModalities) {
      const std::size_t i = index(m);
      t.emplace_back(std::string("feature_dim_") + short_name(m),
                     data_size([i](auto& g) -> auto& { return g.feature_dims[i]; }));
    }
    t.emplace_back("distractor_dims",
                   data_size([](auto& g) -> auto& { return g.distractor_dims; }));
    t.emplace_back("sigma_inc", data_real([](auto& g) -> auto& { return g.sigma_inc; }));
    t.emplace_back("sigma_y", data_real([](auto& g) -> auto& { return g.sigma_y; }));
    t.emplace_back("sigma_x", data_real([](auto& g) -> auto& { return g.sigma_x; }));
    for (Modality m : kModalities) {
      const std::size_t i = index(m);
      t.emplace_back(std::string("weight_") + short_name(m),
                     data_real([i](auto& g) -> auto& { return g.weights[i]; }));
    }
    return t;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& [name, f] : fields()) {
    if (name == key) return f;
  }
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

}  // namespace

void Config::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (pretrain_epochs == 0) throw ConfigError("pretrain_epochs must be positive");
  if (train_epochs == 0) throw ConfigError("train_epochs must be positive");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (d == 0 || d_a == 0 || d_v == 0 || d_l == 0 || enc_hidden == 0 || pred_hidden == 0) {
    throw ConfigError("dimensions must be positive");
  }
  if (rho != data.rho) throw ConfigError("rho and the data rho differ");
  stage1_weights().validate();
  stage3_weights().validate();
  meta_config().validate();
  data.validate();
}

model::ModelDims Config::model_dims(const PerModality<std::size_t>& input_dims) const {
  model::ModelDims m;
  m.input_dims = input_dims;
  m.embed_dims = {d_a, d_v, d_l};
  m.fusion_dim = d;
  m.encoder_hidden = enc_hidden;
  m.predictor_hidden = pred_hidden;
  return m;
}

nn::AdamWConfig Config::optimizer() const {
  nn::AdamWConfig a;
  a.lr = learning_rate;
  a.weight_decay = weight_decay;
  return a;
}

losses::Stage1Weights Config::stage1_weights() const { return {eta, gamma, tau}; }
losses::Stage3Weights Config::stage3_weights() const { return {beta}; }

meta::MetaConfig Config::meta_config() const {
  meta::MetaConfig m;
  m.alpha = alpha;
  m.meta_alpha = meta_alpha;
  m.sigma = sigma;
  m.lambda_init = lambda_init;
  m.rho = rho;
  m.oversample = oversample;
  m.k_inner = k_inner;
  m.batch_size = batch_size;
  m.epochs = meta_epochs;
  m.second_order = second_order;
  m.parallel = parallel;
  m.seed = seed;
  return m;
}

void apply_setting(Config& c, std::string_view key, std::string_view value) {
  const Field& f = field(key);
  try {
    f.set(c, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("bad value '" + std::string(value) + "' for '" + std::string(key) +
                      "': " + e.what());
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& [name, f] : fields()) out.push_back(name);
  return out;
}

Config parse_config(std::string_view text) {
  Config c;
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  for (std::string_view line : io::split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = io::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(io::trim(line.substr(0, eq)));
    const std::string_view value = io::trim(line.substr(eq + 1));
    if (const auto it = seen.find(key); it != seen.end()) {
      throw ConfigError("line " + std::to_string(line_no) + ": '" + key +
                        "' already set on line " + std::to_string(it->second));
    }
    seen[key] = line_no;
    try {
      apply_setting(c, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) { return parse_config(io::read_file(path)); }

std::string config_text(const Config& c) {
  std::string out;
  for (const auto& [name, f] : fields()) out += name + " = " + f.get(c) + "\n";
  return out;
}

}  // namespace unilabel
