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

// Reverse-mode differentiation on an append-only tape.
//
// Backward rules are written in terms of the same differentiable operations
// as the forward pass. With `create_graph` set, the backward pass is itself
// recorded on the tape, so gradients can be differentiated again; this is
// what the bi-level meta-update needs. Without it, recording is suspended
// during backward and gradients come back as constants.

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "unilabel/tensor.hpp"

namespace unilabel::ad {

class Graph;

/// A tensor value, optionally tied to a node of a Graph. Untied values are
/// constants: gradients never flow into them.
class Var {
 public:
  Var() = default;
  static Var constant(Tensor value);

  bool defined() const noexcept { return static_cast<bool>(value_); }
  bool tracked() const noexcept { return graph_ != nullptr; }
  const Tensor& value() const { return *value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t rows() const { return value_->rows(); }
  std::size_t cols() const { return value_->cols(); }
  double item() const { return value_->item(); }
  Graph* graph() const noexcept { return graph_; }
  std::size_t node() const noexcept { return node_; }

 private:
  friend class Graph;
  Var(std::shared_ptr<const Tensor> value, Graph* graph, std::size_t node)
      : value_(std::move(value)), graph_(graph), node_(node) {}

  std::shared_ptr<const Tensor> value_;
  Graph* graph_ = nullptr;
  std::size_t node_ = 0;
};

enum class OpKind {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kMatmul,
  kAddRowVec,
  kMulColVec,
  kSumRows,
  kSumCols,
  kSumAll,
  kExpandRows,
  kExpandCols,
  kExpandAll,
  kTanh,
  kRelu,
  kExp,
  kLog,
  kAbs,
  kSqrt,
  kReciprocal,
  kConcatCols,
  kSliceCols,
  kPadCols,
  kReshape,
};

/// Maps (output, upstream gradient) to one gradient per input. Entries for
/// untracked inputs may be left undefined.
using BackwardFn = std::function<std::vector<Var>(const Var& out, const Var& grad_out)>;

struct Node {
  OpKind kind = OpKind::kLeaf;
  std::vector<Var> inputs;
  std::shared_ptr<const Tensor> value;
  BackwardFn backward;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Registers a differentiable input.
  Var leaf(Tensor value);
  std::vector<Var> leaves(std::span<const Tensor> values);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  /// The tracked value of node i.
  Var node_var(std::size_t i);
  bool recording() const noexcept { return recording_; }

  /// Smallest |x| over all inputs of abs and relu nodes; +inf when none.
  /// Finite-difference checks use it to stay clear of kinks.
  double min_kink_margin() const;

  /// Suspends recording for its lifetime; ops on tracked inputs then
  /// return constants.
  class NoRecord {
   public:
    explicit NoRecord(Graph& g) : graph_(g), saved_(g.recording_) { g.recording_ = false; }
    ~NoRecord() { graph_.recording_ = saved_; }
    NoRecord(const NoRecord&) = delete;
    NoRecord& operator=(const NoRecord&) = delete;

   private:
    Graph& graph_;
    bool saved_;
  };

  Var record(OpKind kind, std::vector<Var> inputs, Tensor value, BackwardFn backward);

 private:
  std::deque<Node> nodes_;
  bool recording_ = true;
};

/// Detaches a value from its graph.
Var detach(const Var& v);

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var tanh(const Var& a);
Var relu(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
/// Subgradient 0 at the origin.
Var abs(const Var& a);
Var sqrt(const Var& a);
Var reciprocal(const Var& a);

/// op(a) * op(b), where op transposes when the matching flag is set.
Var matmul(const Var& a, const Var& b, bool transpose_a = false, bool transpose_b = false);
/// x[n x m] + b broadcast over rows; b holds m elements.
Var add_rowvec(const Var& x, const Var& b);
/// x[n x m] scaled row-wise by c[n x 1].
Var mul_colvec(const Var& x, const Var& c);

Var sum_rows(const Var& x);  // [n x m] -> [n x 1]
Var sum_cols(const Var& x);  // [n x m] -> [1 x m]
Var sum_all(const Var& x);   // -> [1 x 1]
Var mean_all(const Var& x);
Var expand_rows(const Var& row, std::size_t n);  // m elements -> [n x m]
Var expand_cols(const Var& col, std::size_t m);  // [n x 1] -> [n x m]
Var expand_all(const Var& s, const Shape& shape);

Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& x, std::size_t start, std::size_t len);
Var pad_cols(const Var& x, std::size_t start, std::size_t total);
Var reshape(const Var& x, const Shape& shape);

/// Gradients of a scalar `loss` with respect to each entry of `wrt`. Entries
/// that do not reach `loss` get zeros. With `create_graph` the returned
/// gradients are recorded on the tape and can be differentiated again.
std::vector<Var> grad(const Var& loss, std::span<const Var> wrt, bool create_graph = false);

/// Result of one or more gradient-descent steps taken on the tape.
struct InnerStep {
  std::vector<Var> params;   // the leaves the step started from
  std::vector<Var> updated;  // params after the step(s)
  bool second_order = false;
};

/// updated = params - alpha * grad(loss, current).
std::vector<Var> sgd_step(const Var& loss, std::span<const Var> current, double alpha,
                          bool create_graph);

enum class HypergradMode { kSecondOrder, kFirstOrder };

/// d(outer_loss)/d(step.params). Second-order mode differentiates through the
/// inner gradient and requires it to have been built with create_graph;
/// first-order mode treats the update as the identity map.
std::vector<Var> hypergrad(const Var& outer_loss, const InnerStep& step, HypergradMode mode);

std::vector<Tensor> values(std::span<const Var> vars);

}  // namespace unilabel::ad
