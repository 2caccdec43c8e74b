#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace moedr {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. Leaf nodes (parameters, constants)
// have no backward_fn; their grad buffers persist across backward calls so
// gradients accumulate until explicitly zeroed.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated lazily by ensure_grad()
  bool requires_grad = false;
  std::string name;  // set for parameters, used in reports
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
  bool is_leaf() const { return !static_cast<bool>(backward_fn); }
};

// Dense 64-bit float tensor. Copies share the underlying node, so a Tensor
// behaves like a handle; values are treated as immutable after construction
// except for in-place parameter updates between forward passes.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  // Leaf with requires_grad set; the node persists so grads accumulate.
  static Tensor param(Shape shape, std::vector<double> values, std::string name);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t dim(int axis) const { return node_->shape[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(node_->value.size()); }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& values_mut() { return node_->value; }  // optimizer / import only
  double value_at(std::int64_t i) const { return node_->value[static_cast<std::size_t>(i)]; }
  double item() const;  // scalar tensors only

  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<double>& grad() const;
  void zero_grad();
  bool all_finite() const;

  const NodePtr& node() const { return node_; }

  // Reverse-mode sweep from a scalar output. Leaf grads accumulate across
  // calls; intermediate grads are reset per sweep.
  void backward() const;

 private:
  NodePtr node_;
};

// Named trainable leaf. The optimizer mutates data() in place between
// forward passes; grad() is filled by Tensor::backward().
struct Parameter {
  Tensor value;

  Parameter() = default;
  explicit Parameter(Tensor t) : value(std::move(t)) {}
  static Parameter create(Shape shape, std::vector<double> values, std::string name) {
    return Parameter(Tensor::param(std::move(shape), std::move(values), std::move(name)));
  }

  const std::string& name() const { return value.node()->name; }
  std::int64_t size() const { return value.size(); }
  const Shape& shape() const { return value.shape(); }
  std::vector<double>& data() { return value.values_mut(); }
  const std::vector<double>& data() const { return value.values(); }
  const std::vector<double>& grad() const { return value.grad(); }
  void zero_grad() { value.zero_grad(); }
};

}  // namespace moedr
