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

#include "gradbid/ad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_set>

#include "gradbid/kernels/kernels.hpp"

namespace gradbid::ad {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

namespace {

[[noreturn]] void shape_error(std::string_view op, const Shape& a,
                              const Shape& b) {
  throw std::invalid_argument("shape mismatch in " + std::string(op) + ": " +
                              a.str() + " vs " + b.str());
}

NodePtr make_node(Shape shape, std::string_view op,
                  std::vector<NodePtr> parents) {
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value.assign(shape.size(), 0.0);
  n->op = op;
  n->is_leaf = false;
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) n->parents = std::move(parents);
  return n;
}

enum class Bcast { kSame, kRow, kCol, kScalar };

Bcast broadcast_kind(std::string_view op, const Shape& a, const Shape& b) {
  if (a == b) return Bcast::kSame;
  if (b.rows == 1 && b.cols == 1) return Bcast::kScalar;
  if (b.rows == 1 && b.cols == a.cols) return Bcast::kRow;
  if (b.cols == 1 && b.rows == a.rows) return Bcast::kCol;
  shape_error(op, a, b);
}

inline std::size_t bidx(Bcast kind, std::size_t r, std::size_t c,
                        std::size_t cols) {
  switch (kind) {
    case Bcast::kSame:
      return r * cols + c;
    case Bcast::kRow:
      return c;
    case Bcast::kCol:
      return r;
    case Bcast::kScalar:
      return 0;
  }
  return 0;
}

// g_b += reduce(g) following the broadcast pattern of b.
void reduce_into(Bcast kind, const Shape& s, const double* g, double* gb) {
  const auto& k = kernels::active();
  switch (kind) {
    case Bcast::kSame:
      k.axpy(1.0, g, gb, s.size());
      return;
    case Bcast::kRow:
      for (std::size_t r = 0; r < s.rows; ++r) k.axpy(1.0, g + r * s.cols, gb, s.cols);
      return;
    case Bcast::kCol:
      for (std::size_t r = 0; r < s.rows; ++r) gb[r] += k.sum(g + r * s.cols, s.cols);
      return;
    case Bcast::kScalar:
      gb[0] += k.sum(g, s.size());
      return;
  }
}

}  // namespace

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) {
    throw std::invalid_argument("constant: " + std::to_string(values.size()) +
                                " values for shape " + shape.str());
  }
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::constant(Shape shape, double fill) {
  return constant(shape, std::vector<double>(shape.size(), fill));
}

Tensor Tensor::scalar(double v) { return constant({1, 1}, {v}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = constant(shape, std::move(values));
  t.node_->requires_grad = true;
  t.node_->grad.assign(shape.size(), 0.0);
  return t;
}

std::span<const double> Tensor::grad() const { return {node_->grad_data(), size()}; }

std::span<double> Tensor::grad_mut() { return {node_->grad_data(), size()}; }

double Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item() on non-scalar " + shape().str());
  return node_->value[0];
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

// --- backward --------------------------------------------------------------

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1) {
    throw std::invalid_argument("backward() requires a scalar root, got " +
                                (root.defined() ? root.shape().str() : std::string("undefined")));
  }
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
  }
  root.node()->grad_data()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.shape(), b.shape());
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  auto out = make_node({n, m}, "matmul", {a.node_ptr(), b.node_ptr()});
  kernels::gemm(n, k, m, a.value().data(), b.value().data(), out->value.data(), false);
  if (out->requires_grad) {
    out->backward = [n, k, m](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      if (pa.requires_grad) {
        kernels::gemm_nt(n, m, k, self.grad.data(), pb.value.data(), pa.grad_data(), true);
      }
      if (pb.requires_grad) {
        kernels::gemm_tn(n, k, m, pa.value.data(), self.grad.data(), pb.grad_data(), true);
      }
    };
  }
  return Tensor(out);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.cols() != w.rows()) shape_error("linear", x.shape(), w.shape());
  if (b.rows() != 1 || b.cols() != w.cols()) shape_error("linear bias", w.shape(), b.shape());
  const std::size_t n = x.rows(), k = x.cols(), m = w.cols();
  auto out = make_node({n, m}, "linear", {x.node_ptr(), w.node_ptr(), b.node_ptr()});
  kernels::gemm(n, k, m, x.value().data(), w.value().data(), out->value.data(), false);
  const auto& kt = kernels::active();
  for (std::size_t r = 0; r < n; ++r) {
    kt.add(out->value.data() + r * m, b.value().data(), out->value.data() + r * m, m);
  }
  if (out->requires_grad) {
    out->backward = [n, k, m](Node& self) {
      Node& px = *self.parents[0];
      Node& pw = *self.parents[1];
      Node& pb = *self.parents[2];
      if (px.requires_grad) {
        kernels::gemm_nt(n, m, k, self.grad.data(), pw.value.data(), px.grad_data(), true);
      }
      if (pw.requires_grad) {
        kernels::gemm_tn(n, k, m, px.value.data(), self.grad.data(), pw.grad_data(), true);
      }
      if (pb.requires_grad) reduce_into(Bcast::kRow, self.shape, self.grad.data(), pb.grad_data());
    };
  }
  return Tensor(out);
}

// --- elementwise -----------------------------------------------------------

namespace {

Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, int kind) {
  // kind: 0 add, 1 sub, 2 mul
  const Bcast bc = broadcast_kind(op, a.shape(), b.shape());
  const Shape s = a.shape();
  auto out = make_node(s, op, {a.node_ptr(), b.node_ptr()});
  const double* av = a.value().data();
  const double* bv = b.value().data();
  double* ov = out->value.data();
  if (bc == Bcast::kSame && kind != 1) {
    if (kind == 0) kernels::active().add(av, bv, ov, s.size());
    else kernels::active().mul(av, bv, ov, s.size());
  } else {
    for (std::size_t r = 0; r < s.rows; ++r) {
      for (std::size_t c = 0; c < s.cols; ++c) {
        const double x = av[r * s.cols + c];
        const double y = bv[bidx(bc, r, c, s.cols)];
        ov[r * s.cols + c] = kind == 0 ? x + y : (kind == 1 ? x - y : x * y);
      }
    }
  }
  if (out->requires_grad) {
    out->backward = [bc, kind](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      const Shape& s = self.shape;
      const double* g = self.grad.data();
      if (kind == 0 || kind == 1) {
        if (pa.requires_grad) kernels::active().axpy(1.0, g, pa.grad_data(), s.size());
        if (pb.requires_grad) {
          if (kind == 0) {
            reduce_into(bc, s, g, pb.grad_data());
          } else {
            std::vector<double> neg(g, g + s.size());
            for (double& x : neg) x = -x;
            reduce_into(bc, s, neg.data(), pb.grad_data());
          }
        }
        return;
      }
      if (pa.requires_grad) {
        double* ga = pa.grad_data();
        for (std::size_t r = 0; r < s.rows; ++r) {
          for (std::size_t c = 0; c < s.cols; ++c) {
            ga[r * s.cols + c] += g[r * s.cols + c] * pb.value[bidx(bc, r, c, s.cols)];
          }
        }
      }
      if (pb.requires_grad) {
        std::vector<double> prod(s.size());
        kernels::active().mul(g, pa.value.data(), prod.data(), s.size());
        reduce_into(bc, s, prod.data(), pb.grad_data());
      }
    };
  }
  return Tensor(out);
}

template <typename Fwd, typename Deriv>
Tensor unary(std::string_view op, const Tensor& x, Fwd fwd, Deriv deriv) {
  auto out = make_node(x.shape(), op, {x.node_ptr()});
  const auto xv = x.value();
  for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = fwd(xv[i]);
  if (out->requires_grad) {
    out->backward = [deriv](Node& self) {
      Node& px = *self.parents[0];
      double* gx = px.grad_data();
      for (std::size_t i = 0; i < self.value.size(); ++i) {
        gx[i] += self.grad[i] * deriv(px.value[i], self.value[i]);
      }
    };
  }
  return Tensor(out);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", a, b, 0); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", a, b, 1); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", a, b, 2); }

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; },
               [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary("tanh", x, [](double v) { return std::tanh(v); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
  auto out = make_node(x.shape(), "relu", {x.node_ptr()});
  kernels::active().relu(x.value().data(), out->value.data(), x.size());
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& px = *self.parents[0];
      kernels::active().relu_backward(px.value.data(), self.grad.data(), px.grad_data(),
                                      self.value.size());
    };
  }
  return Tensor(out);
}

Tensor square(const Tensor& x) {
  return unary("square", x, [](double v) { return v * v; },
               [](double v, double) { return 2.0 * v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  return unary("clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
               [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor detach(const Tensor& x) {
  return Tensor::constant(x.shape(), std::vector<double>(x.value().begin(), x.value().end()));
}

// --- normalization ---------------------------------------------------------

Tensor layernorm(const Tensor& x, double eps) {
  const std::size_t n = x.rows(), d = x.cols();
  if (d == 0) throw std::invalid_argument("layernorm on zero-width input");
  auto out = make_node(x.shape(), "layernorm", {x.node_ptr()});
  std::vector<double> inv_std(n);
  const auto& kt = kernels::active();
  for (std::size_t r = 0; r < n; ++r) {
    const double* xr = x.value().data() + r * d;
    double* yr = out->value.data() + r * d;
    const double mu = kt.sum(xr, d) / static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mu) * (xr[c] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t c = 0; c < d; ++c) yr[c] = (xr[c] - mu) * is;
  }
  if (out->requires_grad) {
    out->backward = [n, d, inv_std = std::move(inv_std)](Node& self) {
      Node& px = *self.parents[0];
      double* gx = px.grad_data();
      const auto& kt = kernels::active();
      for (std::size_t r = 0; r < n; ++r) {
        const double* g = self.grad.data() + r * d;
        const double* y = self.value.data() + r * d;
        const double gm = kt.sum(g, d) / static_cast<double>(d);
        const double gy = kt.dot(g, y, d) / static_cast<double>(d);
        double* gxr = gx + r * d;
        for (std::size_t c = 0; c < d; ++c) gxr[c] += inv_std[r] * (g[c] - gm - y[c] * gy);
      }
    };
  }
  return Tensor(out);
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax axis must be 0 or 1");
  const std::size_t rows = x.rows(), cols = x.cols();
  // Treat the reduced axis as "inner" with a stride.
  const std::size_t outer = axis == 1 ? rows : cols;
  const std::size_t inner = axis == 1 ? cols : rows;
  const std::size_t ostride = axis == 1 ? cols : 1;
  const std::size_t istride = axis == 1 ? 1 : cols;
  auto out = make_node(x.shape(), "softmax", {x.node_ptr()});
  const double* xv = x.value().data();
  double* yv = out->value.data();
  for (std::size_t o = 0; o < outer; ++o) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, xv[o * ostride + i * istride]);
    double z = 0.0;
    for (std::size_t i = 0; i < inner; ++i) {
      const double e = std::exp(xv[o * ostride + i * istride] - mx);
      yv[o * ostride + i * istride] = e;
      z += e;
    }
    for (std::size_t i = 0; i < inner; ++i) yv[o * ostride + i * istride] /= z;
  }
  if (out->requires_grad) {
    out->backward = [outer, inner, ostride, istride](Node& self) {
      Node& px = *self.parents[0];
      double* gx = px.grad_data();
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t at = o * ostride + i * istride;
          s += self.grad[at] * self.value[at];
        }
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t at = o * ostride + i * istride;
          gx[at] += self.value[at] * (self.grad[at] - s);
        }
      }
    };
  }
  return Tensor(out);
}

// --- structural ------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& xs, int axis) {
  if (xs.empty()) throw std::invalid_argument("concat of zero tensors");
  if (axis != 0 && axis != 1) throw std::invalid_argument("concat axis must be 0 or 1");
  std::vector<NodePtr> parents;
  Shape s = xs.front().shape();
  if (axis == 1) s.cols = 0;
  else s.rows = 0;
  for (const auto& t : xs) {
    if (axis == 1) {
      if (t.rows() != xs.front().rows()) shape_error("concat", xs.front().shape(), t.shape());
      s.cols += t.cols();
    } else {
      if (t.cols() != xs.front().cols()) shape_error("concat", xs.front().shape(), t.shape());
      s.rows += t.rows();
    }
    parents.push_back(t.node_ptr());
  }
  auto out = make_node(s, "concat", parents);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    if (axis == 1) {
      for (std::size_t r = 0; r < s.rows; ++r) {
        std::copy_n(t.value().data() + r * t.cols(), t.cols(), out->value.data() + r * s.cols + off);
      }
      off += t.cols();
    } else {
      std::copy_n(t.value().data(), t.size(), out->value.data() + off * s.cols);
      off += t.rows();
    }
  }
  if (out->requires_grad) {
    out->backward = [axis, offsets = std::move(offsets)](Node& self) {
      const Shape& s = self.shape;
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        Node& pn = *self.parents[p];
        if (!pn.requires_grad) continue;
        double* g = pn.grad_data();
        if (axis == 1) {
          for (std::size_t r = 0; r < s.rows; ++r) {
            kernels::active().axpy(1.0, self.grad.data() + r * s.cols + offsets[p],
                                   g + r * pn.shape.cols, pn.shape.cols);
          }
        } else {
          kernels::active().axpy(1.0, self.grad.data() + offsets[p] * s.cols, g, pn.value.size());
        }
      }
    };
  }
  return Tensor(out);
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) {
    throw std::invalid_argument("slice_cols [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") out of range for " + x.shape().str());
  }
  const std::size_t w = end - begin;
  auto out = make_node({x.rows(), w}, "slice_cols", {x.node_ptr()});
  for (std::size_t r = 0; r < x.rows(); ++r) {
    std::copy_n(x.value().data() + r * x.cols() + begin, w, out->value.data() + r * w);
  }
  if (out->requires_grad) {
    out->backward = [begin, w](Node& self) {
      Node& px = *self.parents[0];
      double* g = px.grad_data();
      for (std::size_t r = 0; r < self.shape.rows; ++r) {
        kernels::active().axpy(1.0, self.grad.data() + r * w, g + r * px.shape.cols + begin, w);
      }
    };
  }
  return Tensor(out);
}

Tensor index_rows(const Tensor& x, std::span<const std::size_t> idx) {
  const std::size_t d = x.cols();
  for (std::size_t i : idx) {
    if (i >= x.rows()) {
      throw std::invalid_argument("index_rows: row " + std::to_string(i) + " out of range for " +
                                  x.shape().str());
    }
  }
  auto out = make_node({idx.size(), d}, "index_rows", {x.node_ptr()});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(x.value().data() + idx[r] * d, d, out->value.data() + r * d);
  }
  if (out->requires_grad) {
    out->backward = [d, idx = std::vector<std::size_t>(idx.begin(), idx.end())](Node& self) {
      Node& px = *self.parents[0];
      double* g = px.grad_data();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        kernels::active().axpy(1.0, self.grad.data() + r * d, g + idx[r] * d, d);
      }
    };
  }
  return Tensor(out);
}

Tensor merge_rows(const std::vector<Tensor>& parts,
                  const std::vector<std::vector<std::size_t>>& idx,
                  std::size_t rows) {
  if (parts.size() != idx.size()) throw std::invalid_argument("merge_rows: parts/index count mismatch");
  std::size_t d = 0;
  bool have_d = false;
  std::vector<NodePtr> parents;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (!parts[p].defined()) throw std::invalid_argument("merge_rows: undefined part");
    if (parts[p].rows() != idx[p].size()) {
      throw std::invalid_argument("merge_rows: part " + std::to_string(p) + " has " +
                                  parts[p].shape().str() + " but " + std::to_string(idx[p].size()) +
                                  " destinations");
    }
    if (have_d && parts[p].cols() != d) shape_error("merge_rows", parts[0].shape(), parts[p].shape());
    d = parts[p].cols();
    have_d = true;
    parents.push_back(parts[p].node_ptr());
  }
  if (!have_d) throw std::invalid_argument("merge_rows of zero parts");
  std::vector<std::uint8_t> used(rows, 0);
  auto out = make_node({rows, d}, "merge_rows", parents);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t r = 0; r < idx[p].size(); ++r) {
      const std::size_t dst = idx[p][r];
      if (dst >= rows || used[dst]) {
        throw std::invalid_argument("merge_rows: invalid or duplicate destination row " +
                                    std::to_string(dst));
      }
      used[dst] = 1;
      std::copy_n(parts[p].value().data() + r * d, d, out->value.data() + dst * d);
    }
  }
  if (out->requires_grad) {
    out->backward = [d, idx](Node& self) {
      for (std::size_t p = 0; p < self.parents.size(); ++p) {
        Node& pn = *self.parents[p];
        if (!pn.requires_grad) continue;
        double* g = pn.grad_data();
        for (std::size_t r = 0; r < idx[p].size(); ++r) {
          kernels::active().axpy(1.0, self.grad.data() + idx[p][r] * d, g + r * d, d);
        }
      }
    };
  }
  return Tensor(out);
}

// --- reductions and losses -------------------------------------------------

Tensor sum(const Tensor& x) {
  auto out = make_node({1, 1}, "sum", {x.node_ptr()});
  out->value[0] = kernels::active().sum(x.value().data(), x.size());
  if (out->requires_grad) {
    out->backward = [](Node& self) {
      Node& px = *self.parents[0];
      double* g = px.grad_data();
      const double gy = self.grad[0];
      for (std::size_t i = 0; i < px.value.size(); ++i) g[i] += gy;
    };
  }
  return Tensor(out);
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mse", a.shape(), b.shape());
  return mean(square(sub(a, b)));
}

namespace {

struct CosineParts {
  double dot = 0.0, na = 0.0, nb = 0.0;
};

// d cos / d a = b/(|a||b|) - cos * a/|a|^2
void cosine_grad(double g, const CosineParts& cp, double cosv, const double* av,
                 const double* bv, std::size_t n, std::size_t stride_a,
                 std::size_t stride_b, double* ga, double* gb) {
  const double inv = 1.0 / (cp.na * cp.nb);
  const double na2 = cp.na * cp.na, nb2 = cp.nb * cp.nb;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = av[i * stride_a], b = bv[i * stride_b];
    if (ga != nullptr) ga[i * stride_a] += g * (b * inv - cosv * a / na2);
    if (gb != nullptr) gb[i * stride_b] += g * (a * inv - cosv * b / nb2);
  }
}

}  // namespace

Tensor cosine(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) shape_error("cosine", a.shape(), b.shape());
  auto out = make_node({1, 1}, "cosine", {a.node_ptr(), b.node_ptr()});
  const auto& kt = kernels::active();
  CosineParts cp;
  cp.dot = kt.dot(a.value().data(), b.value().data(), a.size());
  cp.na = std::sqrt(kt.dot(a.value().data(), a.value().data(), a.size()));
  cp.nb = std::sqrt(kt.dot(b.value().data(), b.value().data(), b.size()));
  const bool degenerate = cp.na == 0.0 || cp.nb == 0.0;
  out->value[0] = degenerate ? 0.0 : cp.dot / (cp.na * cp.nb);
  if (out->requires_grad && !degenerate) {
    out->backward = [cp](Node& self) {
      Node& pa = *self.parents[0];
      Node& pb = *self.parents[1];
      cosine_grad(self.grad[0], cp, self.value[0], pa.value.data(), pb.value.data(),
                  pa.value.size(), 1, 1, pa.requires_grad ? pa.grad_data() : nullptr,
                  pb.requires_grad ? pb.grad_data() : nullptr);
    };
  }
  return Tensor(out);
}

Tensor segment_cosine(const Tensor& x, const Tensor& y, std::size_t segments) {
  if (y.cols() != 1 || y.rows() != x.rows()) shape_error("segment_cosine", x.shape(), y.shape());
  if (segments == 0 || x.rows() % segments != 0) {
    throw std::invalid_argument("segment_cosine: " + std::to_string(x.rows()) +
                                " rows not divisible into " + std::to_string(segments) + " segments");
  }
  const std::size_t len = x.rows() / segments, m = x.cols();
  auto out = make_node({segments, m}, "segment_cosine", {x.node_ptr(), y.node_ptr()});
  std::vector<CosineParts> parts(segments * m);
  for (std::size_t s = 0; s < segments; ++s) {
    const double* yv = y.value().data() + s * len;
    double nb = 0.0;
    for (std::size_t i = 0; i < len; ++i) nb += yv[i] * yv[i];
    nb = std::sqrt(nb);
    for (std::size_t c = 0; c < m; ++c) {
      CosineParts& cp = parts[s * m + c];
      const double* xv = x.value().data() + s * len * m + c;
      for (std::size_t i = 0; i < len; ++i) {
        cp.dot += xv[i * m] * yv[i];
        cp.na += xv[i * m] * xv[i * m];
      }
      cp.na = std::sqrt(cp.na);
      cp.nb = nb;
      const bool degenerate = cp.na == 0.0 || cp.nb == 0.0;
      out->value[s * m + c] = degenerate ? 0.0 : cp.dot / (cp.na * cp.nb);
    }
  }
  if (out->requires_grad) {
    out->backward = [len, m, segments, parts = std::move(parts)](Node& self) {
      Node& px = *self.parents[0];
      Node& py = *self.parents[1];
      double* gx = px.requires_grad ? px.grad_data() : nullptr;
      double* gy = py.requires_grad ? py.grad_data() : nullptr;
      for (std::size_t s = 0; s < segments; ++s) {
        for (std::size_t c = 0; c < m; ++c) {
          const CosineParts& cp = parts[s * m + c];
          if (cp.na == 0.0 || cp.nb == 0.0) continue;
          const std::size_t xoff = s * len * m + c;
          const std::size_t yoff = s * len;
          cosine_grad(self.grad[s * m + c], cp, self.value[s * m + c], px.value.data() + xoff,
                      py.value.data() + yoff, len, m, 1, gx != nullptr ? gx + xoff : nullptr,
                      gy != nullptr ? gy + yoff : nullptr);
        }
      }
    };
  }
  return Tensor(out);
}

// --- attention -------------------------------------------------------------

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        const AttentionLayout& layout,
                        std::span<const std::uint8_t> key_valid) {
  if (q.shape() != k.shape()) shape_error("causal_attention q/k", q.shape(), k.shape());
  if (q.shape() != v.shape()) shape_error("causal_attention q/v", q.shape(), v.shape());
  const std::size_t B = layout.batch, L = layout.seq, H = layout.heads;
  const std::size_t d = q.cols();
  if (B * L != q.rows()) {
    throw std::invalid_argument("causal_attention: layout " + std::to_string(B) + "x" +
                                std::to_string(L) + " does not cover " + q.shape().str());
  }
  if (H == 0 || d % H != 0) {
    throw std::invalid_argument("causal_attention: width " + std::to_string(d) +
                                " not divisible by " + std::to_string(H) + " heads");
  }
  if (!key_valid.empty() && key_valid.size() != q.rows()) {
    throw std::invalid_argument("causal_attention: mask length " + std::to_string(key_valid.size()) +
                                " != rows " + std::to_string(q.rows()));
  }
  const std::size_t dh = d / H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  auto valid = [&key_valid](std::size_t row) { return key_valid.empty() || key_valid[row] != 0; };

  auto out = make_node(q.shape(), "causal_attention", {q.node_ptr(), k.node_ptr(), v.node_ptr()});
  // probs[((b*H + h)*L + t)*L + j]; zero for masked pairs.
  std::vector<double> probs(B * H * L * L, 0.0);
  std::vector<std::uint8_t> row_active(B * L, 0);
  const auto& kt = kernels::active();
  const double* qv = q.value().data();
  const double* kv = k.value().data();
  const double* vv = v.value().data();
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < L; ++t) {
      const std::size_t qrow = b * L + t;
      if (!valid(qrow)) continue;
      bool any = false;
      for (std::size_t j = 0; j <= t; ++j) any = any || valid(b * L + j);
      if (!any) continue;
      row_active[qrow] = 1;
      for (std::size_t h = 0; h < H; ++h) {
        double* p = probs.data() + ((b * H + h) * L + t) * L;
        const double* qh = qv + qrow * d + h * dh;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j <= t; ++j) {
          if (!valid(b * L + j)) continue;
          p[j] = kt.dot(qh, kv + (b * L + j) * d + h * dh, dh) * inv_sqrt;
          mx = std::max(mx, p[j]);
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= t; ++j) {
          if (!valid(b * L + j)) continue;
          p[j] = std::exp(p[j] - mx);
          z += p[j];
        }
        double* o = out->value.data() + qrow * d + h * dh;
        for (std::size_t j = 0; j <= t; ++j) {
          if (!valid(b * L + j)) continue;
          p[j] /= z;
          kt.axpy(p[j], vv + (b * L + j) * d + h * dh, o, dh);
        }
      }
    }
  }
  if (out->requires_grad) {
    out->backward = [B, L, H, d, dh, inv_sqrt, probs = std::move(probs),
                     row_active = std::move(row_active)](Node& self) {
      Node& pq = *self.parents[0];
      Node& pk = *self.parents[1];
      Node& pv = *self.parents[2];
      double* gq = pq.requires_grad ? pq.grad_data() : nullptr;
      double* gk = pk.requires_grad ? pk.grad_data() : nullptr;
      double* gv = pv.requires_grad ? pv.grad_data() : nullptr;
      const auto& kt = kernels::active();
      std::vector<double> dp(L);
      for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < L; ++t) {
          const std::size_t qrow = b * L + t;
          if (!row_active[qrow]) continue;
          for (std::size_t h = 0; h < H; ++h) {
            const double* p = probs.data() + ((b * H + h) * L + t) * L;
            const double* go = self.grad.data() + qrow * d + h * dh;
            double s = 0.0;
            for (std::size_t j = 0; j <= t; ++j) {
              if (p[j] == 0.0) {
                dp[j] = 0.0;
                continue;
              }
              const std::size_t krow = b * L + j;
              dp[j] = kt.dot(go, pv.value.data() + krow * d + h * dh, dh);
              s += p[j] * dp[j];
              if (gv != nullptr) kt.axpy(p[j], go, gv + krow * d + h * dh, dh);
            }
            for (std::size_t j = 0; j <= t; ++j) {
              if (p[j] == 0.0) continue;
              const double ds = p[j] * (dp[j] - s) * inv_sqrt;
              const std::size_t krow = b * L + j;
              if (gq != nullptr) kt.axpy(ds, pk.value.data() + krow * d + h * dh, gq + qrow * d + h * dh, dh);
              if (gk != nullptr) kt.axpy(ds, pq.value.data() + qrow * d + h * dh, gk + krow * d + h * dh, dh);
            }
          }
        }
      }
    };
  }
  return Tensor(out);
}

}  // namespace gradbid::ad
