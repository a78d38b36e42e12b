#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "msps/error.hpp"

namespace msps {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

class Graph;

/// Dense row-major array of doubles (rank <= 4, image data laid out as
/// batch x channel x height x width).
///
/// A tensor is a cheap handle: copies share storage. Values are treated as
/// immutable once an operation has produced them; only leaves (parameters,
/// inputs being assembled) are written through `mutable_values()`.
/// A tensor produced by a recorded operation remembers its graph node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor full(Shape shape, double value);

  bool defined() const noexcept { return static_cast<bool>(storage_); }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const noexcept;

  std::span<const double> values() const noexcept;
  std::span<double> mutable_values();
  double item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  /// Graph that recorded this tensor, or nullptr.
  const Graph* graph() const noexcept { return graph_; }

  /// Same values, no gradient flag, no graph linkage. Shares storage.
  Tensor detach() const;
  /// Deep copy with its own storage.
  Tensor clone(bool requires_grad = false) const;
  /// Same storage viewed with another shape of equal element count.
  Tensor reshape(Shape shape) const;

  bool shares_storage(const Tensor& other) const noexcept {
    return storage_ == other.storage_;
  }

 private:
  friend class Graph;
  friend class Gradients;

  std::shared_ptr<std::vector<double>> storage_;
  Shape shape_;
  bool requires_grad_ = false;
  const Graph* graph_ = nullptr;
  std::size_t node_ = 0;
};

/// Gradient buffers handed to a node's backward function, one per input.
/// An empty span means that input does not need a gradient.
class GradSink {
 public:
  explicit GradSink(std::vector<std::span<double>> slots) : slots_(std::move(slots)) {}
  std::span<double> operator[](std::size_t input) const { return slots_.at(input); }

 private:
  std::vector<std::span<double>> slots_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSink& sink)>;

/// Result of a backward pass: gradients for every grad-flagged leaf.
class Gradients {
 public:
  /// Gradient of the loss w.r.t. `leaf`; exact zeros when the leaf was not
  /// reachable from the loss.
  Tensor of(const Tensor& leaf) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Graph;
  std::unordered_map<const void*, std::vector<double>> grads_;
};

/// Append-only tape of recorded operations. Each forward op with at least
/// one tracked input appends exactly one node; inputs always precede the
/// node that consumes them, so the tape is acyclic. A graph supports one
/// backward pass.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaves_.size(); }
  bool consumed() const noexcept { return consumed_; }
  const std::string& op_name(std::size_t node) const { return nodes_.at(node).op; }

  /// Reverse-mode sweep from a scalar loss. Consumes the graph.
  Gradients backward(const Tensor& loss);

  /// True when gradients must flow through `t` in this graph.
  bool tracks(const Tensor& t) const noexcept;

  /// Records `output = op(inputs)` when any input is tracked; otherwise
  /// returns `output` untouched. `graph` may be null (no recording).
  static Tensor record(Graph* graph, std::string op, std::vector<Tensor> inputs, Tensor output,
                       BackwardFn backward);

 private:
  enum class InputKind { Constant, Leaf, Node };
  struct InputRef {
    InputKind kind = InputKind::Constant;
    std::size_t index = 0;
  };
  struct Node {
    std::string op;
    std::vector<InputRef> inputs;
    std::vector<std::size_t> input_sizes;
    std::size_t output_size = 0;
    BackwardFn backward;
  };

  InputRef resolve(const Tensor& t);

  std::vector<Node> nodes_;
  std::vector<std::shared_ptr<std::vector<double>>> leaves_;
  std::unordered_map<const void*, std::size_t> leaf_index_;
  bool consumed_ = false;
};

}  // namespace msps
