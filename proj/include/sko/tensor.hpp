#pragma once

// Dense row-major tensors with a reverse-mode tape.
//
// A Tensor is a shared handle onto a node holding shape, values and
// (optionally) a gradient buffer. Operations executed while a Tape is active
// and at least one input requires a gradient are recorded on that tape; all
// other operations produce plain values and keep no reference to their inputs.

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sko {

using Index = std::int64_t;
using Shape = std::vector<Index>;

std::string to_string(const Shape& shape);
Index numel(const Shape& shape);

/// Shape mismatch or invalid axis.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values, division by zero.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the tape (non-scalar loss, repeated backward, stale gradients).
class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

template <typename Scalar>
struct Node {
  Node(Shape s, Buffer<Scalar> v);
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  /// Gradient buffer, zero-initialised on first access.
  Buffer<Scalar>& grad_buffer();

  Shape shape;
  Buffer<Scalar> value;
  Buffer<Scalar> grad;
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
};

}  // namespace detail

template <typename Scalar>
class Tape;

template <typename Scalar>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<detail::Node<Scalar>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor from_buffer(Shape shape, Buffer<Scalar> values, bool requires_grad = false);
  static Tensor from_vector(Shape shape, const std::vector<Scalar>& values,
                            bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), Scalar(0), requires_grad);
  }
  static Tensor ones(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), Scalar(1), requires_grad);
  }
  static Tensor scalar(Scalar value, bool requires_grad = false) {
    return full(Shape{}, value, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  Index rank() const { return static_cast<Index>(node_->shape.size()); }
  /// Axis length; negative axes count from the back.
  Index dim(Index axis) const;
  Index numel() const { return node_->value.size(); }

  const Buffer<Scalar>& values() const { return node_->value; }
  /// Direct mutable access. Only for leaves and untaped values.
  Buffer<Scalar>& mutable_values() { return node_->value; }
  std::span<const Scalar> data() const { return {node_->value.data(), size_t(numel())}; }
  Scalar operator[](Index i) const { return node_->value[i]; }
  Scalar item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag);
  bool has_grad() const { return node_->grad.size() != 0; }
  const Buffer<Scalar>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.resize(0); }

  std::uint64_t id() const { return node_->id; }
  bool is_leaf() const { return !node_->backward; }
  /// Same values, no history.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const NodePtr& node() const { return node_; }

 private:
  NodePtr node_;
};

/// Ordered record of differentiable operations. Constructing a Tape makes it
/// the active tape of the calling thread for this scalar type; destruction
/// restores the previous one. Backward may run once per tape.
template <typename Scalar>
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::shared_ptr<detail::Node<Scalar>> node);
  /// Fills the grad buffer of every leaf reachable from `loss`.
  void backward(const Tensor<Scalar>& loss);

  size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<std::shared_ptr<detail::Node<Scalar>>>& nodes() const { return nodes_; }

 private:
  std::vector<std::shared_ptr<detail::Node<Scalar>>> nodes_;
  Tape* previous_ = nullptr;
  bool consumed_ = false;
};

/// Suspends recording on the current thread for its lifetime.
template <typename Scalar>
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape<Scalar>* saved_;
};

/// Counts live value buffers of one watched shape on the calling thread.
/// Used to audit how many N x N matrices an algorithm keeps alive.
class BufferCensus {
 public:
  explicit BufferCensus(Shape watched);
  ~BufferCensus();
  BufferCensus(const BufferCensus&) = delete;
  BufferCensus& operator=(const BufferCensus&) = delete;

  Index live() const;
  Index peak() const;
  /// Restart peak tracking from the current live count.
  void reset_peak();

  static void on_alloc(const Shape& shape);
  static void on_free(const Shape& shape);
};

/// Enables the post-operation finite-value check on this thread.
class FiniteCheckScope {
 public:
  explicit FiniteCheckScope(bool enabled = true);
  ~FiniteCheckScope();
  FiniteCheckScope(const FiniteCheckScope&) = delete;
  FiniteCheckScope& operator=(const FiniteCheckScope&) = delete;

  static bool enabled();

 private:
  bool saved_;
};

namespace detail {

/// Builds the result node of an operation. The node is recorded on the active
/// tape iff one exists and some parent requires a gradient; otherwise the
/// parents and backward closure are dropped.
template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Buffer<Scalar> value,
                           std::vector<Tensor<Scalar>> parents,
                           std::function<void(Node<Scalar>&)> backward,
                           bool allow_nonfinite = false);

/// True when an op on these inputs would be recorded.
template <typename Scalar>
bool recording(std::initializer_list<const Tensor<Scalar>*> inputs);

}  // namespace detail

}  // namespace sko
