#include "styleswin/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "styleswin/ops.hpp"

namespace styleswin {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

std::shared_ptr<TensorImpl> new_impl(Shape shape, std::vector<double> data) {
  for (auto d : shape) {
    if (d <= 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw ShapeError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                     " elements but " + std::to_string(data.size()) + " were supplied");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  return impl;
}

thread_local bool grad_mode_enabled = true;

}  // namespace

Tensor Tensor::from(Shape shape, std::vector<double> data) {
  return Tensor(new_impl(std::move(shape), std::move(data)));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }
Tensor Tensor::ones(Shape shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(Shape shape, double value) {
  auto n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value));
}

Tensor Tensor::scalar(double value) { return from({1}, {value}); }

bool all_finite(const Tensor& t) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->shape;
}

std::int64_t Tensor::dim(std::int64_t axis) const {
  const auto& s = shape();
  auto r = static_cast<std::int64_t>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return shape_numel(shape()); }

std::span<const double> Tensor::data() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data;
}

std::span<double> Tensor::mutable_data() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) {
    throw ShapeError("index rank " + std::to_string(index.size()) + " for shape " + shape_str(s));
  }
  std::int64_t flat = 0;
  std::size_t k = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[k]) throw ShapeError("index out of range for " + shape_str(s));
    flat = flat * s[k] + i;
    ++k;
  }
  return impl_->data[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
  if (!impl_) throw ContractError("use of an undefined tensor");
  if (impl_->grad_fn && !value) {
    throw ContractError("cannot clear requires_grad on a non-leaf tensor");
  }
  impl_->requires_grad = value;
  return *this;
}

bool Tensor::has_grad() const { return impl_ && impl_->grad; }

Tensor Tensor::grad() const {
  if (!impl_ || !impl_->grad) return Tensor();
  return Tensor(impl_->grad);
}

void Tensor::set_grad(const Tensor& grad) {
  if (!impl_) throw ContractError("use of an undefined tensor");
  if (grad.defined() && grad.shape() != shape()) {
    throw ShapeError("grad shape " + shape_str(grad.shape()) + " does not match " +
                     shape_str(shape()));
  }
  impl_->grad = grad.impl_ptr();
}

void Tensor::zero_grad() {
  if (impl_) impl_->grad.reset();
}

Tensor Tensor::detach() const {
  if (!impl_) return Tensor();
  return Tensor(new_impl(impl_->shape, impl_->data));
}

const AutogradNode* Tensor::grad_fn() const { return impl_ ? impl_->grad_fn.get() : nullptr; }

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) { grad_mode_enabled = enabled; }

NoGradGuard::NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
NoGradGuard::~NoGradGuard() { GradMode::set_enabled(previous_); }

EnableGradGuard::EnableGradGuard() : previous_(GradMode::enabled()) {
  GradMode::set_enabled(true);
}
EnableGradGuard::~EnableGradGuard() { GradMode::set_enabled(previous_); }

Tensor make_result(std::string_view name, Shape shape, std::vector<double> data,
                   std::vector<Tensor> inputs, BackwardFn backward, bool higher_order) {
  auto impl = new_impl(std::move(shape), std::move(data));
  if (GradMode::enabled()) {
    bool any = std::any_of(inputs.begin(), inputs.end(),
                           [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      auto node = std::make_shared<AutogradNode>();
      node->name = std::string(name);
      node->inputs = std::move(inputs);
      node->backward = std::move(backward);
      node->higher_order = higher_order;
      impl->requires_grad = true;
      impl->grad_fn = std::move(node);
    }
  }
  return Tensor(std::move(impl));
}

Tape record_tape(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.grad_fn()) return tape;
  std::unordered_set<const TensorImpl*> visited;
  // Iterative post-order DFS: a node is emitted after all of its producers.
  struct Frame {
    const TensorImpl* impl;
    std::size_t next_input;
  };
  std::vector<Frame> stack{{root.impl(), 0}};
  visited.insert(root.impl());
  while (!stack.empty()) {
    auto& frame = stack.back();
    const auto* node = frame.impl->grad_fn.get();
    if (frame.next_input < node->inputs.size()) {
      const auto& in = node->inputs[frame.next_input++];
      const auto* child = in.impl();
      if (child && child->grad_fn && child->requires_grad && !visited.count(child)) {
        visited.insert(child);
        stack.push_back({child, 0});
      }
      continue;
    }
    tape.nodes.push_back(node);
    tape.outputs.push_back(frame.impl);
    stack.pop_back();
  }
  return tape;
}

namespace {

struct SweepResult {
  std::unordered_map<const TensorImpl*, Tensor> leaf_grads;
  std::unordered_map<const TensorImpl*, Tensor> leaf_handles;
};

void accumulate(std::unordered_map<const TensorImpl*, Tensor>& grads, const TensorImpl* key,
                const Tensor& g) {
  auto it = grads.find(key);
  if (it == grads.end()) {
    grads.emplace(key, g);
  } else {
    it->second = add(it->second, g);
  }
}

// Runs one reverse sweep. `keep` lists non-leaf tensors whose grads must be
// retained in the result alongside the leaves.
SweepResult sweep(const Tensor& root, const Tensor& seed, bool create_graph,
                  const std::unordered_set<const TensorImpl*>& keep) {
  SweepResult result;
  std::unordered_map<const TensorImpl*, Tensor> grads;
  grads.emplace(root.impl(), seed);
  if (!root.grad_fn()) {
    result.leaf_grads.emplace(root.impl(), seed);
    result.leaf_handles.emplace(root.impl(), root);
    return result;
  }

  Tape tape = record_tape(root);
  std::unique_ptr<NoGradGuard> no_grad;
  std::unique_ptr<EnableGradGuard> with_grad;
  if (create_graph) {
    with_grad = std::make_unique<EnableGradGuard>();
  } else {
    no_grad = std::make_unique<NoGradGuard>();
  }

  for (std::size_t n = tape.nodes.size(); n-- > 0;) {
    const auto* node = tape.nodes[n];
    const auto* out = tape.outputs[n];
    auto it = grads.find(out);
    if (it == grads.end()) continue;
    Tensor gout = it->second;
    if (!keep.count(out)) grads.erase(it);
    else result.leaf_grads[out] = gout;

    std::vector<Tensor> gins;
    if (create_graph && !node->higher_order) {
      {
        NoGradGuard inner;
        gins = node->backward(gout);
      }
      const std::string op = node->name;
      std::vector<Tensor> deps = node->inputs;
      deps.push_back(gout);
      for (auto& g : gins) {
        if (!g.defined()) continue;
        auto values = std::vector<double>(g.data().begin(), g.data().end());
        g = make_result(op + "_backward", g.shape(), std::move(values), deps,
                        [op](const Tensor&) -> std::vector<Tensor> {
                          throw CapabilityError("second-order differentiation through '" + op +
                                                "' is not supported");
                        });
      }
    } else {
      gins = node->backward(gout);
    }
    if (gins.size() != node->inputs.size()) {
      throw ContractError("backward of '" + node->name + "' returned " +
                          std::to_string(gins.size()) + " grads for " +
                          std::to_string(node->inputs.size()) + " inputs");
    }
    for (std::size_t i = 0; i < gins.size(); ++i) {
      const auto& input = node->inputs[i];
      if (!input.requires_grad() || !gins[i].defined()) continue;
      if (gins[i].shape() != input.shape()) {
        throw ShapeError("backward of '" + node->name + "' produced grad " +
                         shape_str(gins[i].shape()) + " for input " + shape_str(input.shape()));
      }
      const auto* key = input.impl();
      if (input.grad_fn()) {
        accumulate(grads, key, gins[i]);
      } else {
        accumulate(result.leaf_grads, key, gins[i]);
        result.leaf_handles.emplace(key, input);
      }
    }
  }
  for (const auto* k : keep) {
    auto it = grads.find(k);
    if (it != grads.end()) result.leaf_grads[k] = it->second;
  }
  return result;
}

}  // namespace

void backward(const Tensor& loss, bool create_graph) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  auto result = sweep(loss, Tensor::ones(loss.shape()), create_graph, {});
  for (auto& [key, g] : result.leaf_grads) {
    auto handle = result.leaf_handles.at(key);
    Tensor total = g;
    if (handle.has_grad()) {
      if (create_graph) {
        total = add(handle.grad(), g);
      } else {
        NoGradGuard guard;
        total = add(handle.grad(), g);
      }
    }
    handle.set_grad(create_graph ? total : total.detach());
  }
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& inputs,
                         bool create_graph) {
  if (!output.defined()) throw ContractError("grad of an undefined tensor");
  std::unordered_set<const TensorImpl*> keep;
  for (const auto& in : inputs) {
    if (!in.defined()) throw ContractError("grad w.r.t. an undefined tensor");
    keep.insert(in.impl());
  }
  std::vector<Tensor> out;
  out.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const auto& in : inputs) out.push_back(Tensor::zeros(in.shape()));
    return out;
  }
  auto result = sweep(output, Tensor::ones(output.shape()), create_graph, keep);
  for (const auto& in : inputs) {
    auto it = result.leaf_grads.find(in.impl());
    if (it == result.leaf_grads.end()) {
      out.push_back(Tensor::zeros(in.shape()));
    } else {
      out.push_back(create_graph ? it->second : it->second.detach());
    }
  }
  return out;
}

}  // namespace styleswin
