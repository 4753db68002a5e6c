#include "savn/autodiff/var.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <unordered_map>
#include <unordered_set>

namespace savn::ad {

namespace {

thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_next_id{1};

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

void require_same(const Tensor& a, const Tensor& b, Op op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op_name(op)) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

template <class F>
Tensor map_unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

template <class F>
Tensor map_binary(const Tensor& a, const Tensor& b, Op op, F f) {
  require_same(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

Tensor matmul_kernel(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2, "matmul: left operand must be rank 2, got " + shape_string(a.shape()));
  const std::size_t m = a.dim(0);
  const std::size_t n = a.dim(1);
  if (b.rank() == 1) {
    require(b.dim(0) == n, "matmul: inner dimensions differ " + shape_string(a.shape()) + " x " +
                               shape_string(b.shape()));
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
      double acc = 0.0;
      const double* row = a.data().data() + i * n;
      for (std::size_t j = 0; j < n; ++j) acc += row[j] * b[j];
      out[i] = acc;
    }
    return out;
  }
  require(b.rank() == 2 && b.dim(0) == n, "matmul: inner dimensions differ " +
                                              shape_string(a.shape()) + " x " +
                                              shape_string(b.shape()));
  const std::size_t p = b.dim(1);
  Tensor out({m, p});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a[i * n + k];
      if (aik == 0.0) continue;
      const double* brow = b.data().data() + k * p;
      double* orow = out.data().data() + i * p;
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Tensor conv1d_kernel(const Tensor& x, const Tensor& w) {
  require(x.rank() == 2 && w.rank() == 3 && w.dim(1) == x.dim(0),
          "conv1d: expected x [C,T] and w [O,C,W], got " + shape_string(x.shape()) + " and " +
              shape_string(w.shape()));
  const std::size_t C = x.dim(0), T = x.dim(1), O = w.dim(0), W = w.dim(2);
  require(W >= 1 && T >= W, "conv1d: input length shorter than filter width");
  const std::size_t To = T - W + 1;
  Tensor out({O, To});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < W; ++j) {
        const double wv = w[(o * C + c) * W + j];
        for (std::size_t t = 0; t < To; ++t) out[o * To + t] += wv * x[c * T + t + j];
      }
  return out;
}

Tensor conv1d_input_grad_kernel(const Tensor& g, const Tensor& w) {
  require(g.rank() == 2 && w.rank() == 3 && w.dim(0) == g.dim(0),
          "conv1d_input_grad: expected g [O,T'] and w [O,C,W]");
  const std::size_t O = w.dim(0), C = w.dim(1), W = w.dim(2), To = g.dim(1);
  const std::size_t T = To + W - 1;
  Tensor out({C, T});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < W; ++j) {
        const double wv = w[(o * C + c) * W + j];
        for (std::size_t t = 0; t < To; ++t) out[c * T + t + j] += wv * g[o * To + t];
      }
  return out;
}

Tensor conv1d_weight_grad_kernel(const Tensor& x, const Tensor& g, std::size_t W) {
  require(x.rank() == 2 && g.rank() == 2 && x.dim(1) + 1 == g.dim(1) + W,
          "conv1d_weight_grad: inconsistent shapes " + shape_string(x.shape()) + " and " +
              shape_string(g.shape()));
  const std::size_t C = x.dim(0), T = x.dim(1), O = g.dim(0), To = g.dim(1);
  Tensor out({O, C, W});
  for (std::size_t o = 0; o < O; ++o)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t j = 0; j < W; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < To; ++t) acc += g[o * To + t] * x[c * T + t + j];
        out[(o * C + c) * W + j] = acc;
      }
  return out;
}

double stable_sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

Shape as_shape(const std::vector<std::size_t>& ints) { return Shape(ints.begin(), ints.end()); }

Var make(Op op, std::vector<Var> inputs, OpAttrs attrs = {}) {
  std::vector<const Tensor*> values;
  values.reserve(inputs.size());
  bool needs_graph = false;
  for (const auto& in : inputs) {
    values.push_back(&in.value());
    needs_graph = needs_graph || in.requires_grad();
  }
  auto node = std::make_shared<Node>();
  node->op = op;
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->value = evaluate(op, values, attrs);
  if (!node->value.all_finite()) throw NonFiniteError(op, node->id);
  node->attrs = std::move(attrs);
  if (needs_graph && t_grad_enabled) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
  }
  return Var(std::move(node));
}

Var zeros_like(const Tensor& t) { return Var::constant(Tensor(t.shape(), 0.0)); }

Var mask_constant(const Tensor& x, auto pred) {
  Tensor m(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) m[i] = pred(x[i]) ? 1.0 : 0.0;
  return Var::constant(std::move(m));
}

/// Adjoint rules. `self` is the node being differentiated and `g` the incoming
/// gradient; entries are produced only where `needed` is set.
std::vector<Var> backward_rule(const Var& self, const Var& g, const std::vector<bool>& needed) {
  const Node& n = *self.node();
  std::vector<Var> in;
  in.reserve(n.inputs.size());
  for (const auto& p : n.inputs) in.emplace_back(p);
  std::vector<Var> out(in.size());
  auto want = [&](std::size_t i) { return i < needed.size() && needed[i]; };

  switch (n.op) {
    case Op::Leaf:
      break;
    case Op::Add:
      if (want(0)) out[0] = g;
      if (want(1)) out[1] = g;
      break;
    case Op::Sub:
      if (want(0)) out[0] = g;
      if (want(1)) out[1] = neg(g);
      break;
    case Op::Mul:
      if (want(0)) out[0] = mul(g, in[1]);
      if (want(1)) out[1] = mul(g, in[0]);
      break;
    case Op::Scale:
      out[0] = scale(g, n.attrs.a);
      break;
    case Op::AddScalar:
      out[0] = g;
      break;
    case Op::Matmul:
      if (in[1].value().rank() == 1) {
        const std::size_t m = in[0].shape()[0], k = in[0].shape()[1];
        if (want(0)) out[0] = matmul(reshape(g, {m, 1}), reshape(in[1], {1, k}));
        if (want(1)) out[1] = matmul(transpose(in[0]), g);
      } else {
        if (want(0)) out[0] = matmul(g, transpose(in[1]));
        if (want(1)) out[1] = matmul(transpose(in[0]), g);
      }
      break;
    case Op::Transpose:
      out[0] = transpose(g);
      break;
    case Op::Reshape:
      out[0] = reshape(g, in[0].shape());
      break;
    case Op::Conv1d:
      if (want(0)) out[0] = conv1d_input_grad(g, in[1]);
      if (want(1)) out[1] = conv1d_weight_grad(in[0], g, in[1].shape()[2]);
      break;
    case Op::Conv1dInputGrad:
      if (want(0)) out[0] = conv1d(g, in[1]);
      if (want(1)) out[1] = conv1d_weight_grad(g, in[0], in[1].shape()[2]);
      break;
    case Op::Conv1dWeightGrad:
      if (want(0)) out[0] = conv1d_input_grad(in[1], g);
      if (want(1)) out[1] = conv1d(in[0], g);
      break;
    case Op::Relu:
      out[0] = mul(g, mask_constant(in[0].value(), [](double v) { return v > 0.0; }));
      break;
    case Op::Sigmoid:
      out[0] = mul(g, mul(self, add_scalar(neg(self), 1.0)));
      break;
    case Op::Tanh:
      out[0] = mul(g, add_scalar(neg(mul(self, self)), 1.0));
      break;
    case Op::Exp:
      out[0] = mul(g, self);
      break;
    case Op::Log:
      out[0] = mul(g, reciprocal(in[0]));
      break;
    case Op::Reciprocal:
      out[0] = neg(mul(g, mul(self, self)));
      break;
    case Op::Clamp: {
      const double lo = n.attrs.a, hi = n.attrs.b;
      out[0] = mul(g, mask_constant(in[0].value(), [=](double v) { return v >= lo && v <= hi; }));
      break;
    }
    case Op::Softmax:
      out[0] = mul(self, sub(g, expand(dot(g, self), self.shape())));
      break;
    case Op::LogSoftmax:
      out[0] = sub(g, mul(exp(self), expand(sum(g), self.shape())));
      break;
    case Op::Sum:
      out[0] = expand(g, in[0].shape());
      break;
    case Op::Mean:
      out[0] = scale(expand(g, in[0].shape()), 1.0 / static_cast<double>(in[0].size()));
      break;
    case Op::Expand:
      out[0] = reshape(sum(g), in[0].shape());
      break;
    case Op::BroadcastCols:
      out[0] = row_sum(g);
      break;
    case Op::RowSum:
      out[0] = broadcast_cols(g, in[0].shape()[1]);
      break;
    case Op::L2Norm:
      if (self.item() == 0.0) {
        out[0] = zeros_like(in[0].value());
      } else {
        out[0] = mul(in[0], expand(mul(g, reciprocal(self)), in[0].shape()));
      }
      break;
    case Op::Concat: {
      std::size_t offset = 0;
      for (std::size_t i = 0; i < in.size(); ++i) {
        const std::size_t len = in[i].size();
        if (want(i)) out[i] = reshape(slice(g, offset, len), in[i].shape());
        offset += len;
      }
      break;
    }
    case Op::Slice:
      out[0] = reshape(pad(g, n.attrs.ints[0], in[0].size()), in[0].shape());
      break;
    case Op::Pad:
      out[0] = reshape(slice(g, n.attrs.ints[0], in[0].size()), in[0].shape());
      break;
  }
  return out;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::AddScalar: return "add_scalar";
    case Op::Matmul: return "matmul";
    case Op::Transpose: return "transpose";
    case Op::Reshape: return "reshape";
    case Op::Conv1d: return "conv1d";
    case Op::Conv1dInputGrad: return "conv1d_input_grad";
    case Op::Conv1dWeightGrad: return "conv1d_weight_grad";
    case Op::Relu: return "relu";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Reciprocal: return "reciprocal";
    case Op::Softmax: return "softmax";
    case Op::LogSoftmax: return "log_softmax";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::Expand: return "expand";
    case Op::BroadcastCols: return "broadcast_cols";
    case Op::RowSum: return "row_sum";
    case Op::L2Norm: return "l2_norm";
    case Op::Concat: return "concat";
    case Op::Slice: return "slice";
    case Op::Pad: return "pad";
    case Op::Clamp: return "clamp";
  }
  return "unknown";
}

NonFiniteError::NonFiniteError(Op op, std::uint64_t node_id)
    : std::runtime_error("non-finite value produced by " + std::string(op_name(op)) +
                         " (node " + std::to_string(node_id) + ")"),
      op_(op),
      node_id_(node_id) {}

Node::~Node() {
  // Long recurrent chains would otherwise recurse once per node on release.
  std::vector<std::shared_ptr<Node>> pending = std::move(inputs);
  while (!pending.empty()) {
    std::shared_ptr<Node> n = std::move(pending.back());
    pending.pop_back();
    if (n && n.use_count() == 1) {
      for (auto& child : n->inputs) pending.push_back(std::move(child));
      n->inputs.clear();
    }
  }
}

Var Var::constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->value = std::move(value);
  return Var(std::move(node));
}

Var Var::parameter(Tensor value, std::string name) {
  auto node = std::make_shared<Node>();
  node->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  node->value = std::move(value);
  node->requires_grad = true;
  node->name = std::move(name);
  return Var(std::move(node));
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tensor evaluate(Op op, std::span<const Tensor* const> in, const OpAttrs& attrs) {
  switch (op) {
    case Op::Leaf:
      throw GraphError("evaluate: leaves carry values, they are not computed");
    case Op::Add:
      return map_binary(*in[0], *in[1], op, [](double a, double b) { return a + b; });
    case Op::Sub:
      return map_binary(*in[0], *in[1], op, [](double a, double b) { return a - b; });
    case Op::Mul:
      return map_binary(*in[0], *in[1], op, [](double a, double b) { return a * b; });
    case Op::Scale: {
      const double c = attrs.a;
      return map_unary(*in[0], [c](double v) { return v * c; });
    }
    case Op::AddScalar: {
      const double c = attrs.a;
      return map_unary(*in[0], [c](double v) { return v + c; });
    }
    case Op::Matmul:
      return matmul_kernel(*in[0], *in[1]);
    case Op::Transpose: {
      const Tensor& a = *in[0];
      require(a.rank() == 2, "transpose: rank-2 tensor required");
      const std::size_t r = a.dim(0), c = a.dim(1);
      Tensor out({c, r});
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
      return out;
    }
    case Op::Reshape: {
      Shape s = as_shape(attrs.ints);
      require(numel(s) == in[0]->size(), "reshape: cannot view " + shape_string(in[0]->shape()) +
                                             " as " + shape_string(s));
      return Tensor(std::move(s), in[0]->storage());
    }
    case Op::Conv1d:
      return conv1d_kernel(*in[0], *in[1]);
    case Op::Conv1dInputGrad:
      return conv1d_input_grad_kernel(*in[0], *in[1]);
    case Op::Conv1dWeightGrad:
      return conv1d_weight_grad_kernel(*in[0], *in[1], attrs.ints.at(0));
    case Op::Relu:
      return map_unary(*in[0], [](double v) { return v > 0.0 ? v : 0.0; });
    case Op::Sigmoid:
      return map_unary(*in[0], stable_sigmoid);
    case Op::Tanh:
      return map_unary(*in[0], [](double v) { return std::tanh(v); });
    case Op::Exp:
      return map_unary(*in[0], [](double v) { return std::exp(v); });
    case Op::Log:
      return map_unary(*in[0], [](double v) { return std::log(v); });
    case Op::Reciprocal:
      return map_unary(*in[0], [](double v) { return 1.0 / v; });
    case Op::Clamp: {
      const double lo = attrs.a, hi = attrs.b;
      return map_unary(*in[0], [=](double v) { return std::clamp(v, lo, hi); });
    }
    case Op::Softmax:
    case Op::LogSoftmax: {
      const Tensor& a = *in[0];
      require(a.rank() == 1 && a.size() > 0, std::string(op_name(op)) + ": non-empty rank-1 input required");
      const double mx = *std::max_element(a.data().begin(), a.data().end());
      double z = 0.0;
      for (double v : a.data()) z += std::exp(v - mx);
      Tensor out(a.shape());
      if (op == Op::Softmax) {
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i] - mx) / z;
      } else {
        const double lz = std::log(z);
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - mx - lz;
      }
      return out;
    }
    case Op::Sum: {
      double acc = 0.0;
      for (double v : in[0]->data()) acc += v;
      return Tensor::scalar(acc);
    }
    case Op::Mean: {
      double acc = 0.0;
      for (double v : in[0]->data()) acc += v;
      return Tensor::scalar(acc / static_cast<double>(in[0]->size()));
    }
    case Op::Expand:
      require(in[0]->size() == 1, "expand: one-element input required");
      return Tensor(as_shape(attrs.ints), (*in[0])[0]);
    case Op::BroadcastCols: {
      const Tensor& v = *in[0];
      require(v.rank() == 1, "broadcast_cols: rank-1 input required");
      const std::size_t C = v.dim(0), T = attrs.ints.at(0);
      Tensor out({C, T});
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t t = 0; t < T; ++t) out[c * T + t] = v[c];
      return out;
    }
    case Op::RowSum: {
      const Tensor& a = *in[0];
      require(a.rank() == 2, "row_sum: rank-2 input required");
      const std::size_t C = a.dim(0), T = a.dim(1);
      Tensor out({C});
      for (std::size_t c = 0; c < C; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < T; ++t) acc += a[c * T + t];
        out[c] = acc;
      }
      return out;
    }
    case Op::L2Norm: {
      double acc = 0.0;
      for (double v : in[0]->data()) acc += v * v;
      return Tensor::scalar(std::sqrt(acc));
    }
    case Op::Concat: {
      std::vector<double> out;
      for (const Tensor* t : in) out.insert(out.end(), t->data().begin(), t->data().end());
      return Tensor::vector(std::move(out));
    }
    case Op::Slice: {
      const std::size_t off = attrs.ints.at(0), len = attrs.ints.at(1);
      require(off + len <= in[0]->size(), "slice: range exceeds tensor of " +
                                              std::to_string(in[0]->size()) + " values");
      auto d = in[0]->data();
      return Tensor::vector(std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(off),
                                                d.begin() + static_cast<std::ptrdiff_t>(off + len)));
    }
    case Op::Pad: {
      const std::size_t off = attrs.ints.at(0), total = attrs.ints.at(1);
      require(off + in[0]->size() <= total, "pad: input does not fit");
      Tensor out({total});
      std::copy(in[0]->data().begin(), in[0]->data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(off));
      return out;
    }
  }
  throw GraphError("evaluate: unknown op");
}

Var add(const Var& a, const Var& b) { return make(Op::Add, {a, b}); }
Var sub(const Var& a, const Var& b) { return make(Op::Sub, {a, b}); }
Var mul(const Var& a, const Var& b) { return make(Op::Mul, {a, b}); }
Var scale(const Var& a, double c) { return make(Op::Scale, {a}, {.a = c, .b = 0.0, .ints = {}}); }
Var add_scalar(const Var& a, double c) { return make(Op::AddScalar, {a}, {.a = c, .b = 0.0, .ints = {}}); }
Var neg(const Var& a) { return scale(a, -1.0); }
Var matmul(const Var& a, const Var& b) { return make(Op::Matmul, {a, b}); }
Var transpose(const Var& a) { return make(Op::Transpose, {a}); }
Var reshape(const Var& a, Shape shape) {
  return make(Op::Reshape, {a}, {.ints = std::vector<std::size_t>(shape.begin(), shape.end())});
}
Var conv1d(const Var& x, const Var& w) { return make(Op::Conv1d, {x, w}); }
Var conv1d_input_grad(const Var& g, const Var& w) { return make(Op::Conv1dInputGrad, {g, w}); }
Var conv1d_weight_grad(const Var& x, const Var& g, std::size_t width) {
  return make(Op::Conv1dWeightGrad, {x, g}, {.ints = {width}});
}
Var relu(const Var& a) { return make(Op::Relu, {a}); }
Var sigmoid(const Var& a) { return make(Op::Sigmoid, {a}); }
Var tanh(const Var& a) { return make(Op::Tanh, {a}); }
Var exp(const Var& a) { return make(Op::Exp, {a}); }
Var log(const Var& a) { return make(Op::Log, {a}); }
Var reciprocal(const Var& a) { return make(Op::Reciprocal, {a}); }
Var clamp(const Var& a, double lo, double hi) { return make(Op::Clamp, {a}, {.a = lo, .b = hi, .ints = {}}); }
Var softmax(const Var& a) { return make(Op::Softmax, {a}); }
Var log_softmax(const Var& a) { return make(Op::LogSoftmax, {a}); }
Var sum(const Var& a) { return make(Op::Sum, {a}); }
Var mean(const Var& a) { return make(Op::Mean, {a}); }
Var expand(const Var& a, Shape shape) {
  return make(Op::Expand, {a}, {.ints = std::vector<std::size_t>(shape.begin(), shape.end())});
}
Var broadcast_cols(const Var& v, std::size_t cols) { return make(Op::BroadcastCols, {v}, {.ints = {cols}}); }
Var row_sum(const Var& a) { return make(Op::RowSum, {a}); }
Var l2_norm(const Var& a) { return make(Op::L2Norm, {a}); }
Var concat(std::span<const Var> parts) {
  require(!parts.empty(), "concat: no inputs");
  return make(Op::Concat, std::vector<Var>(parts.begin(), parts.end()));
}
Var slice(const Var& a, std::size_t offset, std::size_t length) {
  return make(Op::Slice, {a}, {.ints = {offset, length}});
}
Var pad(const Var& a, std::size_t offset, std::size_t total) {
  return make(Op::Pad, {a}, {.ints = {offset, total}});
}

Var dot(const Var& a, const Var& b) { return sum(mul(a, b)); }
Var index(const Var& a, std::size_t i) { return reshape(slice(a, i, 1), {}); }
Var linear(const Var& w, const Var& b, const Var& x) { return add(matmul(w, x), b); }

LstmState lstm_cell(const Var& x, const LstmState& state, const Var& w_ih, const Var& w_hh,
                    const Var& bias) {
  const std::size_t H = state.h.size();
  require(w_ih.shape().size() == 2 && w_ih.shape()[0] == 4 * H,
          "lstm_cell: w_ih must have 4*hidden rows");
  Var gates = add(add(matmul(w_ih, x), matmul(w_hh, state.h)), bias);
  Var i = sigmoid(slice(gates, 0, H));
  Var f = sigmoid(slice(gates, H, H));
  Var g = tanh(slice(gates, 2 * H, H));
  Var o = sigmoid(slice(gates, 3 * H, H));
  Var c = add(mul(f, state.c), mul(i, g));
  Var h = mul(o, tanh(c));
  return {h, c};
}

Var binary_cross_entropy(const Var& p, double label, double eps) {
  Var pc = clamp(p, eps, 1.0 - eps);
  Var pos = scale(log(pc), label);
  Var negative = scale(log(add_scalar(neg(pc), 1.0)), 1.0 - label);
  return neg(sum(add(pos, negative)));
}

std::vector<Var> grad(const Var& root, std::span<const Var> wrt, GradOptions options) {
  if (!root) throw GraphError("grad: empty root");
  if (root.size() != 1) {
    throw GraphError("grad: root must be a scalar, got shape " + shape_string(root.shape()));
  }
  std::unordered_set<const Node*> targets;
  for (const auto& w : wrt) {
    if (!w) throw GraphError("grad: empty wrt entry");
    targets.insert(w.node().get());
  }

  // Post-order over the recorded graph; `reaches` marks nodes with a path to a target.
  std::vector<Node*> order;
  std::unordered_map<const Node*, bool> reaches;
  {
    std::vector<std::pair<Node*, std::size_t>> stack;
    std::unordered_set<const Node*> visited;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < node->inputs.size()) {
        Node* child = node->inputs[next++].get();
        if (visited.insert(child).second) stack.emplace_back(child, 0);
        continue;
      }
      bool r = targets.count(node) > 0;
      for (const auto& child : node->inputs) r = r || reaches[child.get()];
      reaches[node] = r;
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_map<const Node*, Var> grads;
  {
    std::optional<NoGradGuard> guard;
    if (!options.create_graph) guard.emplace();
    grads[root.node().get()] = Var::constant(Tensor(root.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Node* node = *it;
      if (!reaches[node] || node->inputs.empty()) continue;
      auto found = grads.find(node);
      if (found == grads.end()) continue;
      std::vector<bool> needed(node->inputs.size());
      bool any = false;
      for (std::size_t i = 0; i < node->inputs.size(); ++i) {
        needed[i] = reaches[node->inputs[i].get()];
        any = any || needed[i];
      }
      if (!any) continue;
      std::vector<Var> in_grads = backward_rule(Var(node->shared_from_this()), found->second, needed);
      for (std::size_t i = 0; i < in_grads.size(); ++i) {
        if (!needed[i] || !in_grads[i]) continue;
        const Node* child = node->inputs[i].get();
        auto existing = grads.find(child);
        if (existing == grads.end()) {
          grads.emplace(child, std::move(in_grads[i]));
        } else {
          existing->second = add(existing->second, in_grads[i]);
        }
      }
      if (!targets.count(node)) grads.erase(node);
    }
  }

  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    auto found = grads.find(w.node().get());
    if (found != grads.end()) {
      result.push_back(found->second);
    } else if (options.allow_unused) {
      result.push_back(Var::constant(Tensor(w.shape(), 0.0)));
    } else {
      throw GraphError("grad: input node " + std::to_string(w.id()) + " is not part of the graph");
    }
  }
  return result;
}

Var grad(const Var& root, const Var& wrt, GradOptions options) {
  return grad(root, std::span<const Var>(&wrt, 1), options).front();
}

}  // namespace savn::ad
