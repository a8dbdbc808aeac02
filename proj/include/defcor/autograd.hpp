#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace defcor::ad {

/// Dense row-major tensor of doubles. Feature maps use {channels, height, width}.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, double fill = 0.0);
  Tensor(std::vector<int> s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  size_t numel() const { return data.size(); }
  int dim(size_t i) const { return shape.at(i); }
  std::string shape_str() const;
};

size_t numel_of(const std::vector<int>& shape);

struct Node;
using BackwardFn = std::function<void(const Tensor& out_grad)>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  // Returns the gradient buffer, allocating zeros on first use.
  Tensor& grad_buffer();
};

/// Handle to a node of the computation graph. Copies share the node.
class Var {
 public:
  Var() = default;

  static Var constant(Tensor t);
  static Var parameter(Tensor t);

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const std::vector<int>& shape() const { return node_->value.shape; }
  size_t numel() const { return node_->value.numel(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  // Gradient accumulated by backward(); zeros if none has reached this node.
  const Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad();
  double item() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  bool defined() const { return node_ != nullptr; }

 private:
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}
  std::shared_ptr<Node> node_;

  friend Var make_result(Tensor, std::span<const Var>, const std::function<BackwardFn(Node&)>&);
};

/// Creates the output node of an operation. `make_backward` is only invoked
/// when some input requires a gradient; it receives the output node and returns
/// the closure that propagates the output gradient into the inputs.
Var make_result(Tensor value, std::span<const Var> inputs, const std::function<BackwardFn(Node&)>& make_backward);

/// Disables graph recording on this thread for its lifetime (inference).
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

/// Reverse pass from a single-element root, seeded with d(root)/d(root) = 1.
void backward(const Var& root);

}  // namespace defcor::ad
