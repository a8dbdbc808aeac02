#include "defcor/autograd.hpp"

#include <numeric>
#include <sstream>
#include <unordered_set>

#include "defcor/error.hpp"

namespace defcor::ad {

size_t numel_of(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative tensor dimension");
    n *= static_cast<size_t>(d);
  }
  return n;
}

Tensor::Tensor(std::vector<int> s, double fill) : shape(std::move(s)), data(numel_of(shape), fill) {}

Tensor::Tensor(std::vector<int> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel_of(shape)) throw ShapeError("tensor data does not match shape " + shape_str());
}

std::string Tensor::shape_str() const {
  std::ostringstream ss;
  ss << '[';
  for (size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
  ss << ']';
  return ss.str();
}

Tensor& Node::grad_buffer() {
  if (grad.data.size() != value.data.size()) grad = Tensor(value.shape, 0.0);
  return grad;
}

Var Var::constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  return Var(std::move(n));
}

Var Var::parameter(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->grad_buffer();
  return Var(std::move(n));
}

void Var::zero_grad() {
  auto& g = node_->grad_buffer();
  std::fill(g.data.begin(), g.data.end(), 0.0);
}

double Var::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + value().shape_str());
  return value().data[0];
}

namespace {
thread_local bool g_grad_enabled = true;
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var make_result(Tensor value, std::span<const Var> inputs, const std::function<BackwardFn(Node&)>& make_backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!g_grad_enabled) return Var(std::move(n));
  for (const auto& in : inputs) n->requires_grad = n->requires_grad || in.requires_grad();
  if (n->requires_grad) {
    for (const auto& in : inputs) n->inputs.push_back(in.node());
    n->backward = make_backward(*n);
  }
  return Var(std::move(n));
}

void backward(const Var& root) {
  if (root.numel() != 1) throw ShapeError("backward() needs a single-element root");
  if (!root.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs before outputs).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().data[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(n->grad_buffer());
  }
  // Release intermediate gradients; leaves (parameters) keep theirs.
  for (Node* n : order) {
    if (n->backward) n->grad = Tensor();
  }
}

}  // namespace defcor::ad
