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

#include "unilabel/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "unilabel/errors.hpp"
#include "unilabel/io.hpp"
#include "unilabel/kernels.hpp"

namespace unilabel::nn {

void ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParamStore::numel() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::vector<Tensor> ParamStore::tensors() const {
  std::vector<Tensor> out;
  for (const auto& [_, t] : entries_) out.push_back(t);
  return out;
}

void ParamStore::assign(std::span<const Tensor> values) {
  if (values.size() != entries_.size()) throw ShapeError("assign: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != entries_[i].second.shape()) {
      throw ShapeError("assign: shape mismatch for " + entries_[i].first);
    }
    entries_[i].second = values[i];
  }
}

Bound::Bound(std::vector<std::string> names, std::vector<ad::Var> vars)
    : names_(std::move(names)), vars_(std::move(vars)) {
  if (names_.size() != vars_.size()) throw Error("Bound: names and values differ in length");
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
}

const ad::Var& Bound::operator[](const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unbound parameter: " + name);
  return vars_[it->second];
}

Bound bind(ad::Graph& g, const ParamStore& params) {
  std::vector<ad::Var> vars;
  for (const auto& [_, t] : params) vars.push_back(g.leaf(t));
  return Bound(params.names(), std::move(vars));
}

Bound bind_constant(const ParamStore& params) {
  std::vector<ad::Var> vars;
  for (const auto& [_, t] : params) vars.push_back(ad::Var::constant(t));
  return Bound(params.names(), std::move(vars));
}

ad::Var activate(const ad::Var& x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return ad::relu(x);
    case Activation::kTanh:
      return ad::tanh(x);
    case Activation::kNone:
      break;
  }
  return x;
}

void init_mlp(ParamStore& store, const std::string& prefix, std::span<const std::size_t> sizes,
              std::mt19937_64& rng) {
  if (sizes.size() < 2) throw ConfigError("an MLP needs at least two layer sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    const std::size_t in = sizes[i], out = sizes[i + 1];
    if (in == 0 || out == 0) throw ConfigError("layer sizes must be positive");
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& v : w) v = u(rng);
    const std::string base = prefix + "." + std::to_string(i);
    store.add(base + ".weight", Tensor({out, in}, std::move(w)));
    store.add(base + ".bias", Tensor::zeros({out}));
  }
}

ParamStore init_params(std::span<const std::size_t> sizes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store;
  init_mlp(store, "mlp", sizes, rng);
  return store;
}

ad::Var linear(const Bound& p, const std::string& prefix, const ad::Var& x) {
  const ad::Var& w = p[prefix + ".weight"];
  if (x.cols() != w.cols()) {
    throw ShapeError(prefix + ": input width " + std::to_string(x.cols()) + ", expected " +
                     std::to_string(w.cols()));
  }
  return ad::add_rowvec(ad::matmul(x, w, false, true), p[prefix + ".bias"]);
}

ad::Var mlp_forward(const Bound& p, const std::string& prefix, const ad::Var& x,
                    Activation hidden, Activation output) {
  std::size_t layers = 0;
  while (p.contains(prefix + "." + std::to_string(layers) + ".weight")) ++layers;
  if (layers == 0) throw Error("no layers under prefix " + prefix);
  ad::Var h = x;
  for (std::size_t i = 0; i < layers; ++i) {
    h = linear(p, prefix + "." + std::to_string(i), h);
    h = activate(h, i + 1 < layers ? hidden : output);
  }
  return h;
}

AdamW::AdamW(const ParamStore& params, AdamWConfig config) : config_(config) {
  for (const auto& [_, t] : params) {
    m_.push_back(Tensor::zeros(t.shape()));
    v_.push_back(Tensor::zeros(t.shape()));
  }
}

void AdamW::step(ParamStore& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size() || m_.size() != params.size()) {
    throw ShapeError("AdamW: gradients do not align with parameters");
  }
  std::size_t i = 0;
  for (const auto& [name, t] : params) {
    if (grads[i].shape() != t.shape()) throw ShapeError("AdamW: gradient shape for " + name);
    if (!grads[i].all_finite()) throw NumericalError("non-finite gradient for parameter " + name);
    ++i;
  }
  ++step_;
  const double t = static_cast<double>(step_);
  const kernels::AdamWCoeffs c{config_.lr,
                               config_.beta1,
                               config_.beta2,
                               config_.eps,
                               config_.weight_decay,
                               1.0 - std::pow(config_.beta1, t),
                               1.0 - std::pow(config_.beta2, t)};
  i = 0;
  for (auto& [_, p] : params) {
    kernels::adamw(p.data(), grads[i].data(), m_[i].data(), v_[i].data(), c);
    ++i;
  }
}

std::string checkpoint_text(const ParamStore& params) {
  std::string out;
  for (const auto& [name, t] : params) {
    out += name;
    out += ' ';
    out += std::to_string(t.rank());
    for (auto d : t.shape()) out += ' ' + std::to_string(d);
    for (double v : t.data()) out += ' ' + io::format_double(v);
    out += '\n';
  }
  return out;
}

ParamStore parse_checkpoint(std::string_view text) {
  ParamStore store;
  std::size_t line_no = 0;
  for (auto line : io::split(text, '\n')) {
    ++line_no;
    line = io::trim(line);
    if (line.empty()) continue;
    std::vector<std::string_view> tok;
    for (auto t : io::split(line, ' ')) {
      if (!t.empty()) tok.push_back(t);
    }
    try {
      if (tok.size() < 3) throw std::invalid_argument("truncated record");
      const auto rank = static_cast<std::size_t>(io::parse_int(tok[1]));
      if (rank < 1 || rank > 2 || tok.size() < 2 + rank) {
        throw std::invalid_argument("bad rank");
      }
      Shape shape;
      for (std::size_t r = 0; r < rank; ++r) {
        const auto d = io::parse_int(tok[2 + r]);
        if (d <= 0) throw std::invalid_argument("non-positive dimension");
        shape.push_back(static_cast<std::size_t>(d));
      }
      const std::size_t n = shape_numel(shape);
      if (tok.size() != 2 + rank + n) {
        throw std::invalid_argument("expected " + std::to_string(n) + " values, got " +
                                    std::to_string(tok.size() - 2 - rank));
      }
      std::vector<double> data(n);
      for (std::size_t k = 0; k < n; ++k) data[k] = io::parse_double(tok[2 + rank + k]);
      store.add(std::string(tok[0]), Tensor(std::move(shape), std::move(data)));
    } catch (const std::invalid_argument& e) {
      throw ParseError(line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return store;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  io::write_file_atomic(path, checkpoint_text(params));
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(io::read_file(path));
}

}  // namespace unilabel::nn
