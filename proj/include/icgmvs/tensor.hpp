#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "icgmvs/errors.hpp"

namespace icgmvs {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl;

// Backward closure of one recorded operation. Receives the operation's output
// (data and accumulated grad) and accumulates into the parents' buffers.
using BackwardFn = std::function<void(const TensorImpl& out)>;

struct GradNode {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::vector<double> grad;  // empty until first accumulation
  std::shared_ptr<GradNode> node;

  std::vector<double>& grad_buffer();
};

// Dense row-major float64 tensor with an optional reverse-mode tape.
//
// Copies are shallow: two Tensor handles may refer to the same storage, which
// is how layers share their parameters with a ParameterStore.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor from(std::initializer_list<double> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutable access is only legal on tensors that are not produced by a recorded op.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t flat) const { return data()[flat]; }

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  bool is_leaf() const;

  // Reverse sweep from a scalar. Gradients accumulate into every reachable
  // tensor with requires_grad; intermediate nodes are released afterwards.
  void backward() const;

  // Same storage copy with no tape history.
  Tensor detach() const;
  Tensor clone() const;

  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<TensorImpl> impl_;
};

// Disables tape recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

namespace detail {

// Builds an op result. Checks finiteness, and records a tape node when any
// parent requires a gradient and recording is enabled.
Tensor make_result(const char* name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, BackwardFn backward);

// Gradient buffer of a parent, or nullptr when it does not take gradients.
std::vector<double>* grad_of(const std::shared_ptr<TensorImpl>& parent);

}  // namespace detail

}  // namespace icgmvs
