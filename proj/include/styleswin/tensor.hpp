#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace styleswin {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& shape);
std::int64_t shape_numel(const Shape& shape);

// Error taxonomy shared by all modules.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CapabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values detected in a forward pass or loss term.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Tensor;
struct AutogradNode;

bool all_finite(const Tensor& t);

// Backward closure: receives dL/d(output) and returns dL/d(input_i) for every
// recorded input (an undefined Tensor means "no contribution").
using BackwardFn = std::function<std::vector<Tensor>(const Tensor& grad_out)>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  bool requires_grad = false;
  std::shared_ptr<TensorImpl> grad;
  std::shared_ptr<AutogradNode> grad_fn;
};

/// Dense row-major N-d array of doubles with an optional gradient slot.
///
/// A Tensor is a shared handle: copies alias the same storage. Values are
/// treated as immutable once an op has consumed them; only optimizers and
/// initializers write through mutable_data(), and only on leaf parameters.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor from(Shape shape, std::vector<double> data);
  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool value = true);
  bool has_grad() const;
  Tensor grad() const;
  void set_grad(const Tensor& grad);
  void zero_grad();

  /// Copy of the values with no autograd history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const AutogradNode* grad_fn() const;
  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

struct AutogradNode {
  std::string name;
  std::vector<Tensor> inputs;
  BackwardFn backward;
  // False when the backward closure is a fused kernel whose result cannot be
  // differentiated again (second-order through this node raises).
  bool higher_order = true;
};

/// Global switch controlling whether ops record autograd history.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool previous_;
};

/// Wraps freshly computed values as an op result, recording a graph node when
/// grad mode is on and any input requires grad.
Tensor make_result(std::string_view name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward,
                   bool higher_order = true);

/// The ordered node list a backward sweep visits: every node appears after
/// all nodes that produced its inputs.
struct Tape {
  std::vector<const AutogradNode*> nodes;
  std::vector<const TensorImpl*> outputs;
};

Tape record_tape(const Tensor& root);

/// Accumulates d(loss)/d(leaf) into the grad slot of every requires_grad leaf
/// reachable from `loss`. `loss` must hold exactly one element.
void backward(const Tensor& loss, bool create_graph = false);

/// Returns d(output)/d(input) for each input without touching grad slots.
/// With create_graph the returned tensors carry history and can be
/// differentiated again (used by the R1 penalty).
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph = false);

}  // namespace styleswin
