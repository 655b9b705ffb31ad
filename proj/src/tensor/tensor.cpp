#include "adaptlab/tensor.hpp"

#include <unordered_set>

namespace adaptlab {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<detail::Node>()) {
  for (auto d : shape) ADAPTLAB_REQUIRE(d > 0, "tensor dimensions must be positive");
  ADAPTLAB_REQUIRE(shape_numel(shape) == data.size(),
                   "tensor data length does not match shape " + shape_string(shape));
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return filled(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data, bool requires_grad) {
  return Tensor({rows, cols}, std::move(data), requires_grad);
}

std::size_t Tensor::rows() const {
  ADAPTLAB_REQUIRE(rank() == 2, "rows() needs a rank-2 tensor, got " + shape_string(shape()));
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  ADAPTLAB_REQUIRE(rank() == 2, "cols() needs a rank-2 tensor, got " + shape_string(shape()));
  return node_->shape[1];
}

double Tensor::item() const {
  ADAPTLAB_REQUIRE(numel() == 1, "item() needs a single-element tensor");
  return node_->data[0];
}

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data, node_->requires_grad); }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  ADAPTLAB_REQUIRE(loss.defined() && loss.numel() == 1,
                   "backward() needs a scalar loss, got " +
                       (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order of the graph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

}  // namespace adaptlab
