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

#include "unilabel/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "unilabel/errors.hpp"
#include "unilabel/kernels.hpp"

namespace unilabel::ad {

Var Var::constant(Tensor value) {
  return Var(std::make_shared<const Tensor>(std::move(value)), nullptr, 0);
}

Var Graph::leaf(Tensor value) {
  if (!value.all_finite()) throw NumericalError("non-finite value in leaf tensor");
  nodes_.push_back(Node{OpKind::kLeaf, {}, std::make_shared<const Tensor>(std::move(value)), {}});
  return Var(nodes_.back().value, this, nodes_.size() - 1);
}

std::vector<Var> Graph::leaves(std::span<const Tensor> values) {
  std::vector<Var> out;
  out.reserve(values.size());
  for (const auto& v : values) out.push_back(leaf(v));
  return out;
}

Var Graph::node_var(std::size_t i) { return Var(nodes_.at(i).value, this, i); }

Var Graph::record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  nodes_.push_back(Node{kind, std::move(inputs), std::make_shared<const Tensor>(std::move(value)),
                        std::move(backward)});
  return Var(nodes_.back().value, this, nodes_.size() - 1);
}

double Graph::min_kink_margin() const {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& n : nodes_) {
    if (n.kind != OpKind::kRelu && n.kind != OpKind::kAbs) continue;
    for (double v : n.inputs[0].value().data()) margin = std::min(margin, std::abs(v));
  }
  return margin;
}

namespace {

Var make(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward) {
  Graph* g = nullptr;
  for (const auto& v : inputs) {
    if (!v.defined()) throw Error("operation on an undefined value");
    if (!v.tracked()) continue;
    if (g != nullptr && g != v.graph()) throw Error("operands belong to different graphs");
    g = v.graph();
  }
  if (g != nullptr && g->recording()) {
    return g->record(kind, std::move(inputs), std::move(value), std::move(backward));
  }
  return Var::constant(std::move(value));
}

Tensor blank(const Shape& shape) {
  return Tensor::unchecked(shape, std::vector<double>(shape_numel(shape)));
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

template <typename F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out = blank(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

Shape matrix_shape(std::size_t r, std::size_t c) { return {r, c}; }

}  // namespace

Var detach(const Var& v) { return v.tracked() ? Var::constant(v.value()) : v; }

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out = blank(a.shape());
  kernels::add(a.value().data(), b.value().data(), out.data());
  return make(OpKind::kAdd, {a, b}, std::move(out),
              [](const Var&, const Var& g) { return std::vector<Var>{g, g}; });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out = blank(a.shape());
  kernels::sub(a.value().data(), b.value().data(), out.data());
  return make(OpKind::kSub, {a, b}, std::move(out), [b](const Var&, const Var& g) {
    return std::vector<Var>{g, b.tracked() ? neg(g) : Var{}};
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out = blank(a.shape());
  kernels::mul(a.value().data(), b.value().data(), out.data());
  return make(OpKind::kMul, {a, b}, std::move(out), [a, b](const Var&, const Var& g) {
    return std::vector<Var>{a.tracked() ? mul(g, b) : Var{}, b.tracked() ? mul(g, a) : Var{}};
  });
}

Var scale(const Var& a, double s) {
  Tensor out = blank(a.shape());
  kernels::scale(a.value().data(), s, out.data());
  return make(OpKind::kScale, {a}, std::move(out),
              [s](const Var&, const Var& g) { return std::vector<Var>{scale(g, s)}; });
}

Var add_scalar(const Var& a, double s) {
  Tensor out = map_unary(a.value(), [s](double x) { return x + s; });
  return make(OpKind::kAddScalar, {a}, std::move(out),
              [](const Var&, const Var& g) { return std::vector<Var>{g}; });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var tanh(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return std::tanh(x); });
  return make(OpKind::kTanh, {a}, std::move(out), [](const Var& y, const Var& g) {
    return std::vector<Var>{mul(g, add_scalar(neg(mul(y, y)), 1.0))};
  });
}

Var relu(const Var& a) {
  Tensor out = blank(a.shape());
  kernels::relu(a.value().data(), out.data());
  return make(OpKind::kRelu, {a}, std::move(out), [a](const Var&, const Var& g) {
    Tensor mask = blank(a.shape());
    kernels::step(a.value().data(), mask.data());
    return std::vector<Var>{mul(g, Var::constant(std::move(mask)))};
  });
}

Var exp(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return std::exp(x); });
  return make(OpKind::kExp, {a}, std::move(out),
              [](const Var& y, const Var& g) { return std::vector<Var>{mul(g, y)}; });
}

Var log(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return std::log(x); });
  return make(OpKind::kLog, {a}, std::move(out), [a](const Var&, const Var& g) {
    return std::vector<Var>{mul(g, reciprocal(a))};
  });
}

Var abs(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return std::abs(x); });
  return make(OpKind::kAbs, {a}, std::move(out), [a](const Var&, const Var& g) {
    Tensor sign = map_unary(a.value(), [](double x) { return x > 0.0 ? 1.0 : x < 0.0 ? -1.0 : 0.0; });
    return std::vector<Var>{mul(g, Var::constant(std::move(sign)))};
  });
}

Var sqrt(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return std::sqrt(x); });
  return make(OpKind::kSqrt, {a}, std::move(out), [](const Var& y, const Var& g) {
    return std::vector<Var>{mul(g, scale(reciprocal(y), 0.5))};
  });
}

Var reciprocal(const Var& a) {
  Tensor out = map_unary(a.value(), [](double x) { return 1.0 / x; });
  return make(OpKind::kReciprocal, {a}, std::move(out), [](const Var& y, const Var& g) {
    return std::vector<Var>{mul(g, neg(mul(y, y)))};
  });
}

Var matmul(const Var& a, const Var& b, bool transpose_a, bool transpose_b) {
  // Transposed operands are read in place by the kernel.
  std::size_t n = a.rows(), k = a.cols(), k2 = b.rows(), m = b.cols();
  if (transpose_a) std::swap(n, k);
  if (transpose_b) std::swap(k2, m);
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ (" + shape_string(a.shape()) +
                     (transpose_a ? "^T" : "") + " * " + shape_string(b.shape()) +
                     (transpose_b ? "^T" : "") + ")");
  }
  Tensor out = blank(matrix_shape(n, m));
  kernels::gemm(a.value().data(), b.value().data(), out.data(), n, k, m, transpose_a,
                transpose_b);
  return make(OpKind::kMatmul, {a, b}, std::move(out),
              [a, b, transpose_a, transpose_b](const Var&, const Var& g) {
                Var da, db;
                if (!transpose_a && !transpose_b) {
                  if (a.tracked()) da = matmul(g, b, false, true);
                  if (b.tracked()) db = matmul(a, g, true, false);
                } else if (transpose_a && !transpose_b) {
                  if (a.tracked()) da = matmul(b, g, false, true);
                  if (b.tracked()) db = matmul(a, g, false, false);
                } else if (!transpose_a && transpose_b) {
                  if (a.tracked()) da = matmul(g, b, false, false);
                  if (b.tracked()) db = matmul(g, a, true, false);
                } else {
                  if (a.tracked()) da = matmul(b, g, true, true);
                  if (b.tracked()) db = matmul(g, a, true, true);
                }
                // Rank-1 operands come back as [1 x m]; restore their shape.
                if (da.defined() && da.shape() != a.shape()) da = reshape(da, a.shape());
                if (db.defined() && db.shape() != b.shape()) db = reshape(db, b.shape());
                return std::vector<Var>{da, db};
              });
}

Var add_rowvec(const Var& x, const Var& b) {
  const std::size_t n = x.rows(), m = x.cols();
  if (b.value().size() != m) {
    throw ShapeError("add_rowvec: bias " + shape_string(b.shape()) + " does not fit " +
                     shape_string(x.shape()));
  }
  Tensor out = blank(x.shape());
  const auto bd = b.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    kernels::add(x.value().data().subspan(i * m, m), bd, out.data().subspan(i * m, m));
  }
  return make(OpKind::kAddRowVec, {x, b}, std::move(out), [b](const Var&, const Var& g) {
    return std::vector<Var>{g, b.tracked() ? reshape(sum_cols(g), b.shape()) : Var{}};
  });
}

Var mul_colvec(const Var& x, const Var& c) {
  const std::size_t n = x.rows(), m = x.cols();
  if (c.value().size() != n) {
    throw ShapeError("mul_colvec: column " + shape_string(c.shape()) + " does not fit " +
                     shape_string(x.shape()));
  }
  Tensor out = blank(x.shape());
  for (std::size_t i = 0; i < n; ++i) {
    kernels::scale(x.value().data().subspan(i * m, m), c.value()[i],
                   out.data().subspan(i * m, m));
  }
  return make(OpKind::kMulColVec, {x, c}, std::move(out), [x, c](const Var&, const Var& g) {
    Var dc;
    if (c.tracked()) {
      dc = sum_rows(mul(g, x));
      if (dc.shape() != c.shape()) dc = reshape(dc, c.shape());
    }
    return std::vector<Var>{x.tracked() ? mul_colvec(g, c) : Var{}, dc};
  });
}

Var sum_rows(const Var& x) {
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out = blank(matrix_shape(n, 1));
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) acc += x.value()[i * m + j];
    out[i] = acc;
  }
  return make(OpKind::kSumRows, {x}, std::move(out), [m](const Var&, const Var& g) {
    return std::vector<Var>{expand_cols(g, m)};
  });
}

Var sum_cols(const Var& x) {
  const std::size_t n = x.rows(), m = x.cols();
  Tensor out = blank(matrix_shape(1, m));
  for (std::size_t i = 0; i < n; ++i) {
    kernels::add(out.data(), x.value().data().subspan(i * m, m), out.data());
  }
  const Shape xs = x.shape();
  return make(OpKind::kSumCols, {x}, std::move(out), [n, xs](const Var&, const Var& g) {
    Var e = expand_rows(g, n);
    return std::vector<Var>{e.shape() == xs ? e : reshape(e, xs)};
  });
}

Var sum_all(const Var& x) {
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  const Shape xs = x.shape();
  return make(OpKind::kSumAll, {x}, Tensor::unchecked({1, 1}, {acc}),
              [xs](const Var&, const Var& g) { return std::vector<Var>{expand_all(g, xs)}; });
}

Var mean_all(const Var& x) {
  return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size()));
}

Var expand_rows(const Var& row, std::size_t n) {
  const std::size_t m = row.value().size();
  Tensor out = blank(matrix_shape(n, m));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(row.value().data().begin(), row.value().data().end(), out.data().begin() + i * m);
  }
  const Shape rs = row.shape();
  return make(OpKind::kExpandRows, {row}, std::move(out), [rs](const Var&, const Var& g) {
    Var s = sum_cols(g);
    return std::vector<Var>{s.shape() == rs ? s : reshape(s, rs)};
  });
}

Var expand_cols(const Var& col, std::size_t m) {
  const std::size_t n = col.value().size();
  Tensor out = blank(matrix_shape(n, m));
  for (std::size_t i = 0; i < n; ++i) {
    std::fill_n(out.data().begin() + i * m, m, col.value()[i]);
  }
  const Shape cs = col.shape();
  return make(OpKind::kExpandCols, {col}, std::move(out), [cs](const Var&, const Var& g) {
    Var s = sum_rows(g);
    return std::vector<Var>{s.shape() == cs ? s : reshape(s, cs)};
  });
}

Var expand_all(const Var& s, const Shape& shape) {
  const double v = s.item();
  Tensor out = Tensor::unchecked(shape, std::vector<double>(shape_numel(shape), v));
  const Shape ss = s.shape();
  return make(OpKind::kExpandAll, {s}, std::move(out), [ss](const Var&, const Var& g) {
    Var t = sum_all(g);
    return std::vector<Var>{t.shape() == ss ? t : reshape(t, ss)};
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t n = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ShapeError("concat_cols: row counts differ");
    offsets.push_back(total);
    total += p.cols();
  }
  Tensor out = blank(matrix_shape(n, total));
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].cols();
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(parts[k].value().data().begin() + i * w, w,
                  out.data().begin() + i * total + offsets[k]);
    }
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(OpKind::kConcatCols, inputs, std::move(out),
              [inputs, offsets](const Var&, const Var& g) {
                std::vector<Var> grads(inputs.size());
                for (std::size_t k = 0; k < inputs.size(); ++k) {
                  if (!inputs[k].tracked()) continue;
                  Var s = slice_cols(g, offsets[k], inputs[k].cols());
                  grads[k] = s.shape() == inputs[k].shape() ? s : reshape(s, inputs[k].shape());
                }
                return grads;
              });
}

Var slice_cols(const Var& x, std::size_t start, std::size_t len) {
  const std::size_t n = x.rows(), m = x.cols();
  if (len == 0 || start + len > m) throw ShapeError("slice_cols: range out of bounds");
  Tensor out = blank(matrix_shape(n, len));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.value().data().begin() + i * m + start, len, out.data().begin() + i * len);
  }
  const Shape xs = x.shape();
  return make(OpKind::kSliceCols, {x}, std::move(out), [start, m, xs](const Var&, const Var& g) {
    Var p = pad_cols(g, start, m);
    return std::vector<Var>{p.shape() == xs ? p : reshape(p, xs)};
  });
}

Var pad_cols(const Var& x, std::size_t start, std::size_t total) {
  const std::size_t n = x.rows(), w = x.cols();
  if (start + w > total) throw ShapeError("pad_cols: range out of bounds");
  Tensor out = blank(matrix_shape(n, total));
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.value().data().begin() + i * w, w, out.data().begin() + i * total + start);
  }
  const Shape xs = x.shape();
  return make(OpKind::kPadCols, {x}, std::move(out), [start, w, xs](const Var&, const Var& g) {
    Var s = slice_cols(g, start, w);
    return std::vector<Var>{s.shape() == xs ? s : reshape(s, xs)};
  });
}

Var reshape(const Var& x, const Shape& shape) {
  if (shape_numel(shape) != x.value().size()) {
    throw ShapeError("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Tensor out = Tensor::unchecked(shape, x.value().storage());
  const Shape xs = x.shape();
  return make(OpKind::kReshape, {x}, std::move(out), [xs](const Var&, const Var& g) {
    return std::vector<Var>{reshape(g, xs)};
  });
}

std::vector<Var> grad(const Var& loss, std::span<const Var> wrt, bool create_graph) {
  if (!loss.defined() || loss.value().size() != 1) {
    throw ShapeError("grad: loss must be a scalar");
  }
  auto zeros_like = [](const Var& v) { return Var::constant(Tensor::zeros(v.shape())); };
  std::vector<Var> result;
  result.reserve(wrt.size());
  if (!loss.tracked()) {
    for (const auto& w : wrt) result.push_back(zeros_like(w));
    return result;
  }
  Graph& g = *loss.graph();
  std::optional<Graph::NoRecord> pause;
  if (!create_graph) pause.emplace(g);

  const std::size_t top = loss.node();
  std::vector<Var> grads(top + 1);
  grads[top] = Var::constant(Tensor::filled(loss.shape(), 1.0));
  for (std::size_t k = top + 1; k-- > 0;) {
    if (!grads[k].defined()) continue;
    // Copy what is needed: the deque may grow while the rule runs.
    const Node& node = g.node(k);
    if (!node.backward) continue;
    const std::vector<Var> inputs = node.inputs;
    const BackwardFn backward = node.backward;
    // The rule gets the tracked output so second derivatives see through it.
    std::vector<Var> in_grads = backward(g.node_var(k), grads[k]);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const Var& in = inputs[i];
      if (!in.tracked() || i >= in_grads.size() || !in_grads[i].defined()) continue;
      Var& slot = grads[in.node()];
      slot = slot.defined() ? add(slot, in_grads[i]) : in_grads[i];
    }
  }

  for (const auto& w : wrt) {
    if (w.tracked() && w.graph() == &g && w.node() <= top && grads[w.node()].defined()) {
      const Var& gw = grads[w.node()];
      result.push_back(create_graph ? gw : detach(gw));
    } else {
      result.push_back(zeros_like(w));
    }
  }
  return result;
}

std::vector<Var> sgd_step(const Var& loss, std::span<const Var> current, double alpha,
                          bool create_graph) {
  auto grads = grad(loss, current, create_graph);
  std::vector<Var> out;
  out.reserve(current.size());
  for (std::size_t i = 0; i < current.size(); ++i) {
    out.push_back(sub(current[i], scale(grads[i], alpha)));
  }
  return out;
}

std::vector<Var> hypergrad(const Var& outer_loss, const InnerStep& step, HypergradMode mode) {
  if (mode == HypergradMode::kFirstOrder) return grad(outer_loss, step.updated);
  if (!step.second_order) throw MissingSecondOrderGraph();
  return grad(outer_loss, step.params);
}

std::vector<Tensor> values(std::span<const Var> vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (const auto& v : vars) out.push_back(v.value());
  return out;
}

}  // namespace unilabel::ad
