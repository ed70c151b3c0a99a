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

#include "unilabel/model.hpp"

#include <cmath>

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"

namespace unilabel::model {

namespace {

std::string key(const char* group, Modality m) {
  return std::string(group) + "." + short_name(m);
}

}  // namespace

void ModelDims::validate() const {
  for (Modality m : kModalities) {
    if (input_dims[index(m)] == 0 || embed_dims[index(m)] == 0) {
      throw ConfigError("modality dimensions must be positive");
    }
  }
  if (fusion_dim == 0 || encoder_hidden == 0 || predictor_hidden == 0) {
    throw ConfigError("layer widths must be positive");
  }
}

nn::ParamStore init_model(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  std::mt19937_64 rng = substream(seed, {0x30DE1});
  nn::ParamStore store;
  for (Modality m : kModalities) {
    const std::size_t sizes[] = {dims.input_dims[index(m)], dims.encoder_hidden,
                                 dims.encoder_hidden, dims.embed_dims[index(m)]};
    nn::init_mlp(store, key("enc", m), sizes, rng);
  }
  const std::size_t concat = dims.embed_dims[0] + dims.embed_dims[1] + dims.embed_dims[2];
  const std::size_t fusion[] = {concat, 2 * dims.fusion_dim, dims.fusion_dim};
  nn::init_mlp(store, "fusion", fusion, rng);
  const std::size_t head[] = {dims.fusion_dim, dims.predictor_hidden, 1};
  nn::init_mlp(store, "pred.M", head, rng);
  for (Modality m : kModalities) {
    const std::size_t uni[] = {dims.embed_dims[index(m)], dims.predictor_hidden, 1};
    nn::init_mlp(store, key("pred", m), uni, rng);
  }
  for (Modality m : kModalities) {
    const std::size_t proj[] = {dims.fusion_dim, dims.embed_dims[index(m)]};
    nn::init_mlp(store, key("cpm", m), proj, rng);
  }
  return store;
}

PerModality<ad::Var> encode(const nn::Bound& p, const Features& features) {
  PerModality<ad::Var> out;
  for (Modality m : kModalities) {
    out[index(m)] = nn::mlp_forward(p, key("enc", m), features[index(m)], nn::Activation::kRelu,
                                    nn::Activation::kRelu);
  }
  return out;
}

Fused fuse_predict(const nn::Bound& p, const PerModality<ad::Var>& uni) {
  const std::size_t n = uni[0].rows();
  for (const auto& u : uni) {
    if (u.rows() != n) throw ShapeError("fuse_predict: batch sizes differ");
  }
  const ad::Var parts[] = {uni[index(Modality::kLanguage)], uni[index(Modality::kAcoustic)],
                           uni[index(Modality::kVisual)]};
  Fused f;
  f.x = nn::mlp_forward(p, "fusion", ad::concat_cols(parts), nn::Activation::kRelu);
  f.y_hat = nn::mlp_forward(p, "pred.M", f.x, nn::Activation::kRelu);
  return f;
}

ad::Var project(const nn::Bound& p, const ad::Var& x, Modality m) {
  return ad::relu(nn::linear(p, key("cpm", m) + ".0", x));
}

ad::Var predict_unimodal(const nn::Bound& p, const ad::Var& rep, Modality m) {
  return nn::mlp_forward(p, key("pred", m), rep, nn::Activation::kRelu);
}

nn::ParamStore init_mucn(std::size_t embed_dim, std::uint64_t seed, std::uint64_t stream) {
  if (embed_dim == 0) throw ConfigError("MUCN width must be positive");
  std::mt19937_64 rng = substream(seed, {0x3C4, stream});
  nn::ParamStore store;
  const std::size_t sizes[] = {embed_dim + 1, embed_dim, embed_dim, 1};
  nn::init_mlp(store, "mucn", sizes, rng);
  store.at("mucn.2.weight") = Tensor::zeros({1, embed_dim});
  return store;
}

ad::Var mucn_forward(const nn::Bound& p, const ad::Var& rep, const ad::Var& label, double rho) {
  if (label.cols() != 1 || label.rows() != rep.rows()) {
    throw ShapeError("mucn_forward: label must be [n x 1] matching the representation rows");
  }
  if (!(rho > 0.0)) throw ConfigError("rho must be positive");
  if (!label.value().all_finite()) throw NumericalError("non-finite label fed to MUCN");
  const ad::Var parts[] = {rep, label};
  ad::Var residual = nn::mlp_forward(p, "mucn", ad::concat_cols(parts), nn::Activation::kRelu);
  // tanh saturates to exactly 1 in double; the factor keeps |out| < rho.
  return ad::scale(ad::tanh(ad::add(label, residual)), rho * (1.0 - 0x1p-53));
}

std::string embedding_csv(std::span<const long long> ids, Modality m, std::string_view kind,
                          const Tensor& rows) {
  if (rows.rows() != ids.size()) throw ShapeError("embedding_csv: ids and rows differ");
  std::string out;
  const std::size_t w = rows.cols();
  for (std::size_t r = 0; r < ids.size(); ++r) {
    out += std::to_string(ids[r]);
    out += ',';
    out += short_name(m);
    out += ',';
    out += kind;
    for (std::size_t c = 0; c < w; ++c) {
      out += ',';
      out += io::format_double(rows.at(r, c));
    }
    out += '\n';
  }
  return out;
}

}  // namespace unilabel::model
