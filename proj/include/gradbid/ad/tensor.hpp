// Copyright 2026 The gradbid Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode automatic differentiation over dense row-major float64
// matrices. A Tensor is a cheap handle to a graph node; ops build the graph
// eagerly and backward() walks it in reverse topological order.
//
// Gradient semantics:
//   * leaves (parameters) accumulate across backward() calls until
//     zero_grad() is called;
//   * interior nodes are reset at the start of every backward() call, so the
//     same graph can be differentiated more than once.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gradbid::ad {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  double* grad_data() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad.data();
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor constant(Shape shape, double fill);
  static Tensor scalar(double v);
  // A trainable leaf; its gradient buffer is allocated eagerly.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t size() const { return node_->value.size(); }

  std::span<const double> value() const { return node_->value; }
  // Mutable access to the forward value (parameter updates, finite
  // differences). Do not use on interior nodes of a graph that will still be
  // differentiated.
  std::span<double> value_mut() { return node_->value; }
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  double item() const;
  double at(std::size_t r, std::size_t c) const {
    return node_->value[r * node_->shape.cols + c];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  std::string_view op() const { return node_->op; }
  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Runs reverse-mode accumulation from a 1x1 root.
void backward(const Tensor& root);

// --- forward ops -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// y = x W + b, x [n x in], W [in x out], b [1 x out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Elementwise with broadcasting of `b` when it is [1 x c], [r x 1] or [1 x 1].
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor detach(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;
// Per-row normalization to zero mean and unit variance (no affine terms).
Tensor layernorm(const Tensor& x, double eps = kLayerNormEps);

// axis 1 normalizes each row, axis 0 each column.
Tensor softmax(const Tensor& x, int axis = 1);

Tensor concat(const std::vector<Tensor>& xs, int axis);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// out[i] = x[idx[i]]
Tensor index_rows(const Tensor& x, std::span<const std::size_t> idx);
// out has `rows` rows; row r of parts[p] lands at out[idx[p][r]]; untouched
// rows are zero. Destination rows must be distinct.
Tensor merge_rows(const std::vector<Tensor>& parts,
                  const std::vector<std::vector<std::size_t>>& idx,
                  std::size_t rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor mse(const Tensor& a, const Tensor& b);
// Cosine similarity of the flattened operands; 0 if either has zero norm.
Tensor cosine(const Tensor& a, const Tensor& b);
// x [S*L x M], y [S*L x 1]: out[s][m] = cosine(x[s-block, m], y[s-block]).
Tensor segment_cosine(const Tensor& x, const Tensor& y, std::size_t segments);

struct AttentionLayout {
  std::size_t batch = 1;
  std::size_t seq = 1;
  std::size_t heads = 1;
};

// q, k, v: [batch*seq x d], heads split d evenly. Query t of sequence b
// attends to keys j <= t with key_valid[b*seq + j] != 0 (empty span: all
// valid). Rows whose query is invalid, or that see no valid key, output 0.
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionLayout& layout,
                        std::span<const std::uint8_t> key_valid = {});

}  // namespace gradbid::ad
