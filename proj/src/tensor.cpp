#include "stdb/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <unordered_set>

#include "stdb/kernels.hpp"

namespace stdb {

namespace {

thread_local bool g_grad_enabled = true;

constexpr std::int64_t kGrain = 4096;

void check_finite_shape(const Shape& shape) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimError("zero extent in shape " + shape_to_string(shape));
  }
}

// Stable logistic, clamped to the open interval: beyond |x| ~ 37 the exact
// value rounds to 0.0 or 1.0 in double, which would break the strict (0,1)
// gate invariant downstream.
inline double sigmoid_scalar(double x) {
  double v;
  if (x >= 0.0) {
    v = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    v = e / (1.0 + e);
  }
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  return std::clamp(v, lo, hi);
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_finite_shape(shape);
  auto impl = std::make_shared<TensorImpl>();
  impl->data.assign(shape_numel(shape), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  check_finite_shape(shape);
  if (shape_numel(shape) != data.size()) {
    throw DimError("data length " + std::to_string(data.size()) +
                   " does not match shape " + shape_to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::extent(std::size_t dim) const {
  const Shape& s = shape();
  if (dim >= s.size()) throw DimError("extent index out of rank");
  return s[dim];
}

std::size_t Tensor::size() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data.size();
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool v) {
  if (!impl_) throw ContractError("use of an undefined tensor");
  if (!impl_->is_leaf() && !v) {
    throw ContractError("cannot clear requires_grad on a non-leaf tensor");
  }
  impl_->requires_grad = v;
}

std::span<const double> Tensor::data() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (size() != 1) {
    throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t flat_index) const {
  if (flat_index >= size()) throw ContractError("flat index out of range");
  return impl_->data[flat_index];
}

bool Tensor::has_grad() const {
  return impl_ && impl_->grad.size() == impl_->data.size() && !impl_->data.empty();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  impl_->grad.assign(impl_->data.size(), 0.0);
}

Tensor Tensor::detach() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return from_data(impl_->shape, impl_->data, false);
}

const char* Tensor::op() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->op;
}

bool Tensor::is_leaf() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->is_leaf();
}

// ---------------------------------------------------------------------------
// Autograd engine
// ---------------------------------------------------------------------------

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::span<double> GradSink::grad(const TensorImplPtr& node) {
  auto [it, inserted] = buffers_.try_emplace(node.get());
  if (inserted) it->second.assign(node->data.size(), 0.0);
  return it->second;
}

std::vector<double>* GradSink::find(TensorImpl* node) {
  auto it = buffers_.find(node);
  return it == buffers_.end() ? nullptr : &it->second;
}

Tensor make_op(const char* op, std::vector<Tensor> inputs, Shape shape,
               std::vector<double> data,
               std::function<void(std::span<const double>, GradSink&)> backward_fn) {
  if (shape_numel(shape) != data.size()) {
    throw DimError(std::string(op) + ": op result shape mismatch");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  bool track = g_grad_enabled;
  if (track) {
    track = false;
    for (const Tensor& t : inputs) {
      if (t.requires_grad()) {
        track = true;
        break;
      }
    }
  }
  if (track) {
    impl->requires_grad = true;
    impl->op = op;
    impl->inputs.reserve(inputs.size());
    for (const Tensor& t : inputs) impl->inputs.push_back(t.impl());
    impl->backward = std::move(backward_fn);
  }
  return Tensor(std::move(impl));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss");
  }
  if (!loss.requires_grad()) {
    throw ContractError("backward on a tensor that is not on the tape");
  }

  // Iterative post-order DFS; children (inputs) before parents.
  std::vector<TensorImplPtr> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<std::pair<TensorImplPtr, std::size_t>> stack;
  stack.emplace_back(loss.impl(), 0);
  seen.insert(loss.impl().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      TensorImplPtr child = node->inputs[next++];
      if (child->requires_grad && seen.insert(child.get()).second) {
        stack.emplace_back(std::move(child), 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  GradSink sink;
  sink.grad(loss.impl())[0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const TensorImplPtr& node = *it;
    std::vector<double>* g = sink.find(node.get());
    if (!g) continue;  // no gradient reached this node
    if (node->backward) {
      node->backward(*g, sink);
    } else if (node->is_leaf() && node->requires_grad) {
      if (node->grad.size() != node->data.size()) {
        node->grad.assign(node->data.size(), 0.0);
      }
      for (std::size_t i = 0; i < g->size(); ++i) node->grad[i] += (*g)[i];
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimError(std::string(op) + ": shapes " + shape_to_string(a.shape()) +
                   " and " + shape_to_string(b.shape()) + " differ");
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  std::vector<double> out(a.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
  auto ia = a.impl(), ib = b.impl();
  return make_op("add", {a, b}, a.shape(), std::move(out),
                 [ia, ib](std::span<const double> g, GradSink& sink) {
                   if (sink.wants(ia)) {
                     auto ga = sink.grad(ia);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   }
                   if (sink.wants(ib)) {
                     auto gb = sink.grad(ib);
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                   }
                 });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  auto ia = a.impl(), ib = b.impl();
  return make_op("sub", {a, b}, a.shape(), std::move(out),
                 [ia, ib](std::span<const double> g, GradSink& sink) {
                   if (sink.wants(ia)) {
                     auto ga = sink.grad(ia);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                   }
                   if (sink.wants(ib)) {
                     auto gb = sink.grad(ib);
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                   }
                 });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  auto ia = a.impl(), ib = b.impl();
  return make_op("mul", {a, b}, a.shape(), std::move(out),
                 [ia, ib](std::span<const double> g, GradSink& sink) {
                   if (sink.wants(ia)) {
                     auto ga = sink.grad(ia);
                     for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ib->data[i];
                   }
                   if (sink.wants(ib)) {
                     auto gb = sink.grad(ib);
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ia->data[i];
                   }
                 });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  const auto da = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * c;
  auto ia = a.impl();
  return make_op("scale", {a}, a.shape(), std::move(out),
                 [ia, c](std::span<const double> g, GradSink& sink) {
                   if (!sink.wants(ia)) return;
                   auto ga = sink.grad(ia);
                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
                 });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  auto ia = a.impl();
  return make_op("sum", {a}, {1}, {acc},
                 [ia](std::span<const double> g, GradSink& sink) {
                   if (!sink.wants(ia)) return;
                   auto ga = sink.grad(ia);
                   for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
                 });
}

Tensor mean(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  const double inv = 1.0 / static_cast<double>(a.size());
  auto ia = a.impl();
  return make_op("mean", {a}, {1}, {acc * inv},
                 [ia, inv](std::span<const double> g, GradSink& sink) {
                   if (!sink.wants(ia)) return;
                   auto ga = sink.grad(ia);
                   for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] * inv;
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_finite_shape(shape);
  if (shape_numel(shape) != a.size()) {
    throw DimError("reshape: " + shape_to_string(a.shape()) + " -> " +
                   shape_to_string(shape) + " changes element count");
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto ia = a.impl();
  return make_op("reshape", {a}, std::move(shape), std::move(out),
                 [ia](std::span<const double> g, GradSink& sink) {
                   if (!sink.wants(ia)) return;
                   auto ga = sink.grad(ia);
                   for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                 });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0)) {
    throw DimError("concat_cols: need two rank-2 tensors with equal rows");
  }
  const std::size_t n = a.extent(0), da = a.extent(1), db = b.extent(1);
  std::vector<double> out(n * (da + db));
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.data().data() + r * da, da, out.data() + r * (da + db));
    std::copy_n(b.data().data() + r * db, db, out.data() + r * (da + db) + da);
  }
  auto ia = a.impl(), ib = b.impl();
  return make_op("concat_cols", {a, b}, {n, da + db}, std::move(out),
                 [ia, ib, n, da, db](std::span<const double> g, GradSink& sink) {
                   if (sink.wants(ia)) {
                     auto ga = sink.grad(ia);
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t i = 0; i < da; ++i)
                         ga[r * da + i] += g[r * (da + db) + i];
                   }
                   if (sink.wants(ib)) {
                     auto gb = sink.grad(ib);
                     for (std::size_t r = 0; r < n; ++r)
                       for (std::size_t i = 0; i < db; ++i)
                         gb[r * db + i] += g[r * (da + db) + da + i];
                   }
                 });
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

Tensor sigmoid(const Tensor& input) {
  const std::size_t n = input.size();
  std::vector<double> out(n);
  const auto x = input.data();
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(n) > kGrain)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    out[i] = sigmoid_scalar(x[i]);
  }
  auto ii = input.impl();
  std::vector<double> saved = out;
  return make_op("sigmoid", {input}, input.shape(), std::move(out),
                 [ii, saved = std::move(saved)](std::span<const double> g,
                                                GradSink& sink) {
                   if (!sink.wants(ii)) return;
                   auto gi = sink.grad(ii);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     gi[i] += g[i] * saved[i] * (1.0 - saved[i]);
                   }
                 });
}

Tensor relu(const Tensor& input) {
  const std::size_t n = input.size();
  std::vector<double> out(n);
  const auto x = input.data();
#pragma omp parallel for schedule(static) if (static_cast<std::int64_t>(n) > kGrain)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  auto ii = input.impl();
  return make_op("relu", {input}, input.shape(), std::move(out),
                 [ii](std::span<const double> g, GradSink& sink) {
                   if (!sink.wants(ii)) return;
                   auto gi = sink.grad(ii);
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (ii->data[i] > 0.0) gi[i] += g[i];
                   }
                 });
}

Tensor softmax_rows(const Tensor& input) {
  if (input.rank() != 2) throw DimError("softmax_rows requires a rank-2 tensor");
  const std::size_t n = input.extent(0), k = input.extent(1);
  std::vector<double> out(n * k);
  const auto x = input.data();
  for (std::size_t r = 0; r < n; ++r) {
    double mx = x[r * k];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x[r * k + j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      out[r * k + j] = std::exp(x[r * k + j] - mx);
      denom += out[r * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) out[r * k + j] /= denom;
  }
  auto ii = input.impl();
  std::vector<double> saved = out;  // softmax values drive the backward
  return make_op("softmax_rows", {input}, input.shape(), std::move(out),
                 [ii, n, k, saved = std::move(saved)](std::span<const double> g,
                                                      GradSink& sink) {
                   if (!sink.wants(ii)) return;
                   auto gi = sink.grad(ii);
                   for (std::size_t r = 0; r < n; ++r) {
                     double dot = 0.0;
                     for (std::size_t j = 0; j < k; ++j)
                       dot += g[r * k + j] * saved[r * k + j];
                     for (std::size_t j = 0; j < k; ++j)
                       gi[r * k + j] += saved[r * k + j] * (g[r * k + j] - dot);
                   }
                 });
}

Tensor activation(const Tensor& input, Activation kind) {
  switch (kind) {
    case Activation::Sigmoid: return sigmoid(input);
    case Activation::Relu: return relu(input);
    case Activation::SoftmaxRows: return softmax_rows(input);
  }
  throw ContractError("unknown activation kind");
}

// ---------------------------------------------------------------------------
// conv2d / linear
// ---------------------------------------------------------------------------

namespace {

kernels::Conv2dDims conv_dims(const Tensor& input, const Tensor& weight,
                              std::size_t stride, std::size_t padding) {
  if (input.rank() != 4) throw DimError("conv2d: input must be N x C x H x W");
  if (weight.rank() != 4) throw DimError("conv2d: weight must be Co x Ci x Kh x Kw");
  if (stride == 0) throw ContractError("conv2d: stride must be positive");
  kernels::Conv2dDims d;
  d.n = input.extent(0);
  d.cin = input.extent(1);
  d.h = input.extent(2);
  d.w = input.extent(3);
  d.cout = weight.extent(0);
  d.kh = weight.extent(2);
  d.kw = weight.extent(3);
  d.stride = stride;
  d.pad = padding;
  if (weight.extent(1) != d.cin) {
    throw DimError("conv2d: weight expects " + std::to_string(weight.extent(1)) +
                   " input channels, input has " + std::to_string(d.cin));
  }
  if (d.kh > d.h + 2 * padding || d.kw > d.w + 2 * padding) {
    throw DimError("conv2d: kernel larger than padded input");
  }
  d.hout = (d.h + 2 * padding - d.kh) / stride + 1;
  d.wout = (d.w + 2 * padding - d.kw) / stride + 1;
  return d;
}

Tensor conv2d_impl(const Tensor& input, const Tensor& weight,
                   const Tensor* bias, std::size_t stride,
                   std::size_t padding) {
  const kernels::Conv2dDims d = conv_dims(input, weight, stride, padding);
  if (bias) {
    if (bias->rank() != 1 || bias->extent(0) != d.cout) {
      throw DimError("conv2d: bias must have one value per output channel");
    }
  }
  std::vector<double> out(d.n * d.cout * d.hout * d.wout);
  kernels::conv2d_forward(input.data().data(), weight.data().data(),
                          bias ? bias->data().data() : nullptr, out.data(), d);

  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  auto ii = input.impl(), wi = weight.impl();
  TensorImplPtr bi = bias ? bias->impl() : nullptr;
  return make_op("conv2d", std::move(inputs),
                 {d.n, d.cout, d.hout, d.wout}, std::move(out),
                 [ii, wi, bi, d](std::span<const double> g, GradSink& sink) {
                   if (sink.wants(ii)) {
                     kernels::conv2d_backward_input(g.data(), wi->data.data(),
                                                    sink.grad(ii).data(), d);
                   }
                   if (sink.wants(wi)) {
                     kernels::conv2d_backward_weight(g.data(), ii->data.data(),
                                                     sink.grad(wi).data(), d);
                   }
                   if (bi && sink.wants(bi)) {
                     kernels::conv2d_backward_bias(g.data(), sink.grad(bi).data(), d);
                   }
                 });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  return conv2d_impl(input, weight, &bias, stride, padding);
}

Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride,
              std::size_t padding) {
  return conv2d_impl(input, weight, nullptr, stride, padding);
}

namespace {

Tensor linear_impl(const Tensor& input, const Tensor& weight,
                   const Tensor* bias) {
  if (input.rank() != 2) throw DimError("linear: input must be N x Din");
  if (weight.rank() != 2) throw DimError("linear: weight must be Dout x Din");
  const std::size_t n = input.extent(0);
  const std::size_t din = input.extent(1);
  const std::size_t dout = weight.extent(0);
  if (weight.extent(1) != din) {
    throw DimError("linear: weight expects " + std::to_string(weight.extent(1)) +
                   " inputs, got " + std::to_string(din));
  }
  if (bias && (bias->rank() != 1 || bias->extent(0) != dout)) {
    throw DimError("linear: bias must have one value per output");
  }
  std::vector<double> out(n * dout);
  kernels::linear_forward(input.data().data(), weight.data().data(),
                          bias ? bias->data().data() : nullptr, out.data(), n,
                          din, dout);
  std::vector<Tensor> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  auto ii = input.impl(), wi = weight.impl();
  TensorImplPtr bi = bias ? bias->impl() : nullptr;
  return make_op("linear", std::move(inputs), {n, dout}, std::move(out),
                 [ii, wi, bi, n, din, dout](std::span<const double> g,
                                            GradSink& sink) {
                   if (sink.wants(ii)) {
                     kernels::linear_backward_input(g.data(), wi->data.data(),
                                                    sink.grad(ii).data(), n, din, dout);
                   }
                   if (sink.wants(wi)) {
                     kernels::linear_backward_weight(g.data(), ii->data.data(),
                                                     sink.grad(wi).data(), n, din, dout);
                   }
                   if (bi && sink.wants(bi)) {
                     kernels::linear_backward_bias(g.data(), sink.grad(bi).data(), n, dout);
                   }
                 });
}

}  // namespace

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  return linear_impl(input, weight, &bias);
}

Tensor linear(const Tensor& input, const Tensor& weight) {
  return linear_impl(input, weight, nullptr);
}

// ---------------------------------------------------------------------------
// Pooling
// ---------------------------------------------------------------------------

Tensor pool(const Tensor& input, PoolKind kind) {
  if (input.rank() != 4) throw DimError("pool requires N x C x H x W input");
  const std::size_t n = input.extent(0), c = input.extent(1);
  const std::size_t h = input.extent(2), w = input.extent(3);
  auto ii = input.impl();

  switch (kind) {
    case PoolKind::Gap: {
      std::vector<double> out(n * c);
      kernels::gap_forward(input.data().data(), out.data(), n, c, h, w);
      return make_op("gap", {input}, {n, c, 1, 1}, std::move(out),
                     [ii, n, c, h, w](std::span<const double> g, GradSink& sink) {
                       if (!sink.wants(ii)) return;
                       kernels::gap_backward(g.data(), sink.grad(ii).data(), n, c, h, w);
                     });
    }
    case PoolKind::Gmp: {
      std::vector<double> out(n * c);
      std::vector<std::size_t> argmax(n * c);
      kernels::gmp_forward(input.data().data(), out.data(), argmax.data(), n, c, h, w);
      return make_op("gmp", {input}, {n, c, 1, 1}, std::move(out),
                     [ii, n, c, h, w, argmax = std::move(argmax)](
                         std::span<const double> g, GradSink& sink) {
                       if (!sink.wants(ii)) return;
                       kernels::gmp_backward(g.data(), argmax.data(),
                                             sink.grad(ii).data(), n, c, h, w);
                     });
    }
    case PoolKind::ChannelAvg: {
      std::vector<double> out(n * h * w);
      kernels::channel_avg_forward(input.data().data(), out.data(), n, c, h, w);
      return make_op("channel_avg", {input}, {n, 1, h, w}, std::move(out),
                     [ii, n, c, h, w](std::span<const double> g, GradSink& sink) {
                       if (!sink.wants(ii)) return;
                       kernels::channel_avg_backward(g.data(), sink.grad(ii).data(), n, c, h, w);
                     });
    }
    case PoolKind::ChannelMax: {
      std::vector<double> out(n * h * w);
      std::vector<std::size_t> argmax(n * h * w);
      kernels::channel_max_forward(input.data().data(), out.data(), argmax.data(), n, c, h, w);
      return make_op("channel_max", {input}, {n, 1, h, w}, std::move(out),
                     [ii, n, c, h, w, argmax = std::move(argmax)](
                         std::span<const double> g, GradSink& sink) {
                       if (!sink.wants(ii)) return;
                       kernels::channel_max_backward(g.data(), argmax.data(),
                                                     sink.grad(ii).data(), n, c, h, w);
                     });
    }
  }
  throw ContractError("unknown pool kind");
}

Tensor gap(const Tensor& input) { return pool(input, PoolKind::Gap); }
Tensor gmp(const Tensor& input) { return pool(input, PoolKind::Gmp); }
Tensor channel_avg(const Tensor& input) { return pool(input, PoolKind::ChannelAvg); }
Tensor channel_max(const Tensor& input) { return pool(input, PoolKind::ChannelMax); }

// ---------------------------------------------------------------------------
// broadcast_mul
// ---------------------------------------------------------------------------

Tensor broadcast_mul(const Tensor& feature, const Tensor& map) {
  if (feature.rank() != 4) throw DimError("broadcast_mul: feature must be rank 4");
  if (map.rank() != 4) throw DimError("broadcast_mul: map must be rank 4");
  const std::size_t n = feature.extent(0), c = feature.extent(1);
  const std::size_t h = feature.extent(2), w = feature.extent(3);
  const Shape& ms = map.shape();
  const bool channel_map = ms == Shape{n, c, 1, 1};
  const bool spatial_map = ms == Shape{n, 1, h, w};
  if (!channel_map && !spatial_map) {
    throw DimError("broadcast_mul: map " + shape_to_string(ms) +
                   " matches neither " + shape_to_string({n, c, 1, 1}) +
                   " nor " + shape_to_string({n, 1, h, w}));
  }
  std::vector<double> out(feature.size());
  if (channel_map) {
    kernels::bcast_mul_channel_forward(feature.data().data(), map.data().data(),
                                       out.data(), n, c, h, w);
  } else {
    kernels::bcast_mul_spatial_forward(feature.data().data(), map.data().data(),
                                       out.data(), n, c, h, w);
  }
  auto fi = feature.impl(), mi = map.impl();
  return make_op("broadcast_mul", {feature, map}, feature.shape(), std::move(out),
                 [fi, mi, n, c, h, w, channel_map](std::span<const double> g,
                                                   GradSink& sink) {
                   double* gf = sink.wants(fi) ? sink.grad(fi).data() : nullptr;
                   double* gm = sink.wants(mi) ? sink.grad(mi).data() : nullptr;
                   if (!gf && !gm) return;
                   if (channel_map) {
                     kernels::bcast_mul_channel_backward(g.data(), fi->data.data(),
                                                         mi->data.data(), gf, gm,
                                                         n, c, h, w);
                   } else {
                     kernels::bcast_mul_spatial_backward(g.data(), fi->data.data(),
                                                         mi->data.data(), gf, gm,
                                                         n, c, h, w);
                   }
                 });
}

// ---------------------------------------------------------------------------
// grad_check
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& fn,
                  const Tensor& input, double eps) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");

  Tensor x = Tensor::from_data(input.shape(),
                               {input.data().begin(), input.data().end()}, true);
  Tensor loss = fn(x);
  if (loss.size() != 1) throw ContractError("grad_check: fn must return a scalar");
  if (loss.requires_grad()) backward(loss);  // constant fn: gradient is zero
  std::vector<double> analytic(x.size(), 0.0);
  if (x.has_grad()) {
    analytic.assign(x.grad().begin(), x.grad().end());
  }

  double max_err = 0.0;
  NoGradGuard guard;  // numeric probes need no tape
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x.mutable_data()[i];
    x.mutable_data()[i] = saved + eps;
    const double hi = fn(x).item();
    x.mutable_data()[i] = saved - eps;
    const double lo = fn(x).item();
    x.mutable_data()[i] = saved;
    const double numeric = (hi - lo) / (2.0 * eps);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    max_err = std::max(max_err, std::abs(analytic[i] - numeric) / denom);
  }
  return max_err;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState::AdamState(const std::vector<Tensor>& params, AdamConfig cfg)
    : cfg_(cfg) {
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const Tensor& p : params) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

void AdamState::step(const std::vector<Tensor>& params, double lr) {
  if (lr <= 0.0) throw ContractError("adam: lr must be positive");
  if (params.size() != m_.size()) {
    throw ContractError("adam: parameter list does not match state");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].has_grad()) {
      throw ContractError("adam: missing gradient on parameter " + std::to_string(k));
    }
    if (params[k].size() != m_[k].size()) {
      throw ContractError("adam: parameter shape changed since state creation");
    }
  }
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    const auto g = p.grad();
    auto data = p.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr) {
  state.step(params, lr);
}

}  // namespace stdb
