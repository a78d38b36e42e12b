#include "msps/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace msps {

std::string shape_to_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& what, std::vector<std::size_t> expected,
                       std::vector<std::size_t> actual)
    : Error(what + ": expected " + shape_to_string(expected) + ", got " + shape_to_string(actual)),
      expected_(std::move(expected)),
      actual_(std::move(actual)) {}

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, bool requires_grad)
    : storage_(std::make_shared<std::vector<double>>(shape_numel(shape), 0.0)),
      shape_(std::move(shape)),
      requires_grad_(requires_grad) {
  if (shape_.size() > 4) throw Error("tensor rank above 4 is not supported");
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)), requires_grad_(requires_grad) {
  if (shape_.size() > 4) throw Error("tensor rank above 4 is not supported");
  if (shape_numel(shape_) != values.size()) {
    throw ShapeError("tensor data length", shape_, {values.size()});
  }
  storage_ = std::make_shared<std::vector<double>>(std::move(values));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({1}, {value}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw Error("tensor axis out of range");
  return shape_[axis];
}

std::size_t Tensor::numel() const noexcept { return storage_ ? storage_->size() : 0; }

std::span<const double> Tensor::values() const noexcept {
  if (!storage_) return {};
  return {storage_->data(), storage_->size()};
}

std::span<double> Tensor::mutable_values() {
  if (!storage_) throw Error("mutable_values on an undefined tensor");
  if (graph_) throw Error("tensors produced by a recorded operation are immutable");
  return {storage_->data(), storage_->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() requires a single element", {1}, shape_);
  return (*storage_)[0];
}

Tensor Tensor::detach() const {
  Tensor t;
  t.storage_ = storage_;
  t.shape_ = shape_;
  return t;
}

Tensor Tensor::clone(bool requires_grad) const {
  if (!storage_) return {};
  return Tensor(shape_, *storage_, requires_grad);
}

Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) throw ShapeError("reshape", shape_, shape);
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Gradients::of(const Tensor& leaf) const {
  auto it = grads_.find(leaf.storage_.get());
  if (it == grads_.end()) return Tensor(leaf.shape());
  return Tensor(leaf.shape(), it->second);
}

bool Graph::tracks(const Tensor& t) const noexcept {
  if (!t.defined()) return false;
  if (t.graph_ == this) return true;
  return t.graph_ == nullptr && t.requires_grad_;
}

Graph::InputRef Graph::resolve(const Tensor& t) {
  if (t.graph_ == this) return {InputKind::Node, t.node_};
  if (t.graph_ != nullptr) throw Error("tensor belongs to a different graph");
  if (!t.requires_grad_) return {InputKind::Constant, 0};
  const void* key = t.storage_.get();
  auto [it, inserted] = leaf_index_.emplace(key, leaves_.size());
  if (inserted) leaves_.push_back(t.storage_);
  return {InputKind::Leaf, it->second};
}

Tensor Graph::record(Graph* graph, std::string op, std::vector<Tensor> inputs, Tensor output,
                     BackwardFn backward) {
  if (graph == nullptr) return output;
  if (graph->consumed_) throw Error("cannot record into a graph after backward()");
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [&](const Tensor& t) { return graph->tracks(t); });
  if (!any) {
    for (const auto& t : inputs) {
      if (t.graph_ != nullptr && t.graph_ != graph) throw Error("tensor belongs to a different graph");
    }
    return output;
  }
  Node node;
  node.op = std::move(op);
  node.inputs.reserve(inputs.size());
  node.input_sizes.reserve(inputs.size());
  for (const auto& t : inputs) {
    node.inputs.push_back(graph->resolve(t));
    node.input_sizes.push_back(t.numel());
  }
  node.output_size = output.numel();
  node.backward = std::move(backward);
  graph->nodes_.push_back(std::move(node));
  output.graph_ = graph;
  output.node_ = graph->nodes_.size() - 1;
  output.requires_grad_ = false;
  return output;
}

Gradients Graph::backward(const Tensor& loss) {
  if (consumed_) throw Error("backward() called twice on the same graph");
  if (loss.numel() != 1) throw ShapeError("backward() requires a scalar loss", {1}, loss.shape());
  if (loss.graph_ != this) throw Error("loss was not produced by this graph");
  consumed_ = true;

  std::vector<std::vector<double>> node_grads(nodes_.size());
  std::vector<std::vector<double>> leaf_grads(leaves_.size());
  node_grads[loss.node_].assign(1, 1.0);

  for (std::size_t i = loss.node_ + 1; i-- > 0;) {
    if (node_grads[i].empty()) continue;
    Node& node = nodes_[i];
    std::vector<std::span<double>> slots;
    slots.reserve(node.inputs.size());
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const auto& ref = node.inputs[k];
      const std::size_t n = node.input_sizes[k];
      std::vector<double>* buf = nullptr;
      if (ref.kind == InputKind::Node) buf = &node_grads[ref.index];
      if (ref.kind == InputKind::Leaf) buf = &leaf_grads[ref.index];
      if (buf == nullptr) {
        slots.emplace_back();
        continue;
      }
      if (buf->empty()) buf->assign(n, 0.0);
      slots.emplace_back(buf->data(), buf->size());
    }
    node.backward(node_grads[i], GradSink(std::move(slots)));
    node_grads[i].clear();
    node_grads[i].shrink_to_fit();
    node.backward = nullptr;
  }

  Gradients out;
  for (std::size_t l = 0; l < leaves_.size(); ++l) {
    if (leaf_grads[l].empty()) leaf_grads[l].assign(leaves_[l]->size(), 0.0);
    out.grads_.emplace(leaves_[l].get(), std::move(leaf_grads[l]));
  }
  nodes_.clear();
  return out;
}

}  // namespace msps
