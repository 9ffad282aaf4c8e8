#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "stdb/error.hpp"

namespace stdb {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class GradSink;
struct TensorImpl;
using TensorImplPtr = std::shared_ptr<TensorImpl>;

// One tape node. Leaves have no inputs and no backward function; op results
// keep shared pointers to their inputs, which keeps the graph alive as long
// as any downstream tensor is.
struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // persistent accumulator; meaningful on leaves
  const char* op = "leaf";
  std::vector<TensorImplPtr> inputs;
  std::function<void(std::span<const double>, GradSink&)> backward;

  std::size_t size() const { return data.size(); }
  bool is_leaf() const { return inputs.empty(); }
};

// Dense row-major float64 tensor handle. Copies are shallow; two copies refer
// to the same node. Feature maps use N x C x H x W layout, vectors N x D.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t dim) const;
  std::size_t size() const;  // element count

  bool requires_grad() const;
  void set_requires_grad(bool v);

  std::span<const double> data() const;
  std::span<double> mutable_data();  // leaf parameter updates only
  double item() const;               // value of a one-element tensor
  double at(std::size_t flat_index) const;

  bool has_grad() const;
  std::span<const double> grad() const;  // ContractError when absent
  void zero_grad();                      // allocate and clear the accumulator

  // Copy of the data with no tape attached.
  Tensor detach() const;

  const char* op() const;
  bool is_leaf() const;

  const TensorImplPtr& impl() const { return impl_; }
  explicit Tensor(TensorImplPtr impl) : impl_(std::move(impl)) {}

 private:
  TensorImplPtr impl_;
};

// ---------------------------------------------------------------------------
// Autograd mode
// ---------------------------------------------------------------------------

bool grad_enabled();

// Disables tape recording within a scope (inference, finite differences).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Transient gradient buffers used while a backward pass runs. Op closures ask
// for the buffer of an input and accumulate into it.
class GradSink {
 public:
  bool wants(const TensorImplPtr& node) const {
    return node && node->requires_grad;
  }
  std::span<double> grad(const TensorImplPtr& node);

 private:
  friend void backward(const Tensor& loss);
  std::vector<double>* find(TensorImpl* node);
  std::unordered_map<TensorImpl*, std::vector<double>> buffers_;
};

// Builds an op node. When autograd is off or no input requires grad the
// result is a plain tensor and `backward_fn` is dropped.
Tensor make_op(const char* op, std::vector<Tensor> inputs, Shape shape,
               std::vector<double> data,
               std::function<void(std::span<const double>, GradSink&)> backward_fn);

// Runs reverse-mode accumulation from a scalar loss. Each requires-grad leaf
// reachable from the tape receives +d(loss)/d(leaf) in its persistent grad;
// calling again without zero_grad adds another copy.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

enum class Activation { Sigmoid, Relu, SoftmaxRows };
enum class PoolKind { Gap, Gmp, ChannelAvg, ChannelMax };

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);
Tensor conv2d(const Tensor& input, const Tensor& weight, std::size_t stride,
              std::size_t padding);  // no bias

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);
Tensor linear(const Tensor& input, const Tensor& weight);  // no bias

Tensor activation(const Tensor& input, Activation kind);
Tensor sigmoid(const Tensor& input);
Tensor relu(const Tensor& input);
Tensor softmax_rows(const Tensor& input);

Tensor pool(const Tensor& input, PoolKind kind);
Tensor gap(const Tensor& input);
Tensor gmp(const Tensor& input);
Tensor channel_avg(const Tensor& input);
Tensor channel_max(const Tensor& input);

// map is N x C x 1 x 1 (copied along H, W) or N x 1 x H x W (copied along C).
Tensor broadcast_mul(const Tensor& feature, const Tensor& map);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_cols(const Tensor& a, const Tensor& b);  // N x (Da + Db)

// ---------------------------------------------------------------------------
// Gradient verification
// ---------------------------------------------------------------------------

// Compares the tape gradient of fn(input) against central finite differences.
// Returns max over elements of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
double grad_check(const std::function<Tensor(const Tensor&)>& fn,
                  const Tensor& input, double eps);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers for one fixed parameter list. The list passed to step()
// must match the one used at construction, element for element.
class AdamState {
 public:
  explicit AdamState(const std::vector<Tensor>& params, AdamConfig cfg = {});

  // One bias-corrected Adam update. Gradients are read, never modified.
  void step(const std::vector<Tensor>& params, double lr);

  std::uint64_t step_count() const { return step_count_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t step_count_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

void adam_step(const std::vector<Tensor>& params, AdamState& state, double lr);

}  // namespace stdb
