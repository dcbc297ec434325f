#include "sko/tensor.hpp"

#include <atomic>
#include <sstream>
#include <unordered_set>

namespace sko {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d < 0) throw DimensionError("negative axis length in shape " + to_string(shape));
    n *= d;
  }
  return n;
}

namespace {

std::atomic<std::uint64_t> g_next_id{1};

struct CensusState {
  bool active = false;
  Shape watched;
  Index live = 0;
  Index peak = 0;
};
thread_local CensusState t_census;

#ifdef NDEBUG
thread_local bool t_finite_checks = false;
#else
thread_local bool t_finite_checks = true;
#endif

template <typename Scalar>
Tape<Scalar>*& active_tape() {
  thread_local Tape<Scalar>* tape = nullptr;
  return tape;
}

}  // namespace

// ---------------------------------------------------------------- census

BufferCensus::BufferCensus(Shape watched) {
  if (t_census.active) throw std::logic_error("BufferCensus: nested census on one thread");
  t_census = CensusState{true, std::move(watched), 0, 0};
}

BufferCensus::~BufferCensus() { t_census = CensusState{}; }

Index BufferCensus::live() const { return t_census.live; }
Index BufferCensus::peak() const { return t_census.peak; }
void BufferCensus::reset_peak() { t_census.peak = t_census.live; }

void BufferCensus::on_alloc(const Shape& shape) {
  if (t_census.active && shape == t_census.watched) {
    ++t_census.live;
    t_census.peak = std::max(t_census.peak, t_census.live);
  }
}

void BufferCensus::on_free(const Shape& shape) {
  if (t_census.active && shape == t_census.watched) --t_census.live;
}

FiniteCheckScope::FiniteCheckScope(bool enabled) : saved_(t_finite_checks) {
  t_finite_checks = enabled;
}
FiniteCheckScope::~FiniteCheckScope() { t_finite_checks = saved_; }
bool FiniteCheckScope::enabled() { return t_finite_checks; }

// ---------------------------------------------------------------- node

namespace detail {

template <typename Scalar>
Node<Scalar>::Node(Shape s, Buffer<Scalar> v)
    : shape(std::move(s)), value(std::move(v)), id(g_next_id.fetch_add(1)) {
  if (numel(shape) != value.size()) {
    throw DimensionError("tensor data length " + std::to_string(value.size()) +
                         " does not match shape " + to_string(shape));
  }
  BufferCensus::on_alloc(shape);
}

template <typename Scalar>
Node<Scalar>::~Node() {
  BufferCensus::on_free(shape);
}

template <typename Scalar>
Buffer<Scalar>& Node<Scalar>::grad_buffer() {
  if (grad.size() == 0) grad = Buffer<Scalar>::Zero(value.size());
  return grad;
}

template <typename Scalar>
bool recording(std::initializer_list<const Tensor<Scalar>*> inputs) {
  if (!active_tape<Scalar>()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

template <typename Scalar>
Tensor<Scalar> make_result(Shape shape, Buffer<Scalar> value,
                           std::vector<Tensor<Scalar>> parents,
                           std::function<void(Node<Scalar>&)> backward, bool allow_nonfinite) {
  if (t_finite_checks && !allow_nonfinite && !value.allFinite()) {
    bool inputs_finite = true;
    for (const auto& p : parents) inputs_finite = inputs_finite && p.values().allFinite();
    if (inputs_finite)
      throw NumericError("non-finite value produced from finite inputs, shape " +
                         to_string(shape));
  }
  auto node = std::make_shared<Node<Scalar>>(std::move(shape), std::move(value));
  Tape<Scalar>* tape = active_tape<Scalar>();
  bool needs_grad = false;
  if (tape) {
    for (const auto& p : parents) needs_grad = needs_grad || p.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
    tape->record(node);
  }
  return Tensor<Scalar>(std::move(node));
}

}  // namespace detail

// ---------------------------------------------------------------- tensor

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_buffer(Shape shape, Buffer<Scalar> values, bool requires_grad) {
  auto node = std::make_shared<detail::Node<Scalar>>(std::move(shape), std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_vector(Shape shape, const std::vector<Scalar>& values,
                                           bool requires_grad) {
  Buffer<Scalar> buf = Eigen::Map<const Buffer<Scalar>>(values.data(), Index(values.size()));
  return from_buffer(std::move(shape), std::move(buf), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value, bool requires_grad) {
  const Index n = sko::numel(shape);
  return from_buffer(std::move(shape), Buffer<Scalar>::Constant(n, value), requires_grad);
}

template <typename Scalar>
Index Tensor<Scalar>::dim(Index axis) const {
  const Index r = rank();
  const Index a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  return node_->shape[size_t(a)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <typename Scalar>
void Tensor<Scalar>::set_requires_grad(bool flag) {
  if (!is_leaf()) throw AutodiffError("set_requires_grad on a non-leaf tensor");
  node_->requires_grad = flag;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::detach() const {
  return from_buffer(shape(), values(), false);
}

// ---------------------------------------------------------------- tape

template <typename Scalar>
Tape<Scalar>::Tape() : previous_(active_tape<Scalar>()) {
  active_tape<Scalar>() = this;
}

template <typename Scalar>
Tape<Scalar>::~Tape() {
  active_tape<Scalar>() = previous_;
}

template <typename Scalar>
Tape<Scalar>* Tape<Scalar>::active() {
  return active_tape<Scalar>();
}

template <typename Scalar>
void Tape<Scalar>::record(std::shared_ptr<detail::Node<Scalar>> node) {
  if (consumed_) throw AutodiffError("recording on a tape that already ran backward");
  nodes_.push_back(std::move(node));
}

template <typename Scalar>
void Tape<Scalar>::backward(const Tensor<Scalar>& loss) {
  if (loss.numel() != 1)
    throw AutodiffError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  if (consumed_) throw AutodiffError("backward() called twice on the same tape");
  if (!loss.requires_grad() || loss.is_leaf())
    throw AutodiffError("loss is not reachable from any parameter on this tape");

  // Leaves must start from a clean gradient: accumulation across backward
  // passes is rejected rather than silently summed.
  std::unordered_set<const detail::Node<Scalar>*> leaves;
  for (const auto& n : nodes_)
    for (const auto& p : n->parents)
      if (p->requires_grad && !p->backward) leaves.insert(p.get());
  for (const auto* leaf : leaves)
    if (leaf->grad.size() != 0)
      throw AutodiffError("leaf gradient not zeroed before backward (node " +
                          std::to_string(leaf->id) + ")");

  consumed_ = true;
  loss.node()->grad_buffer().setConstant(Scalar(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node<Scalar>& node = **it;
    if (node.grad.size() == 0) continue;
    node.backward(node);
  }
}

template <typename Scalar>
NoGradScope<Scalar>::NoGradScope() : saved_(active_tape<Scalar>()) {
  active_tape<Scalar>() = nullptr;
}

template <typename Scalar>
NoGradScope<Scalar>::~NoGradScope() {
  active_tape<Scalar>() = saved_;
}

#define SKO_INSTANTIATE(T)                                                                  \
  template struct detail::Node<T>;                                                          \
  template class Tensor<T>;                                                                 \
  template class Tape<T>;                                                                   \
  template class NoGradScope<T>;                                                            \
  template bool detail::recording<T>(std::initializer_list<const Tensor<T>*>);              \
  template Tensor<T> detail::make_result<T>(Shape, Buffer<T>, std::vector<Tensor<T>>,       \
                                            std::function<void(detail::Node<T>&)>, bool);

SKO_INSTANTIATE(float)
SKO_INSTANTIATE(double)

#undef SKO_INSTANTIATE

}  // namespace sko
