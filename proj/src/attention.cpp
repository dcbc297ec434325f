#include "sko/attention.hpp"

#include "sko/ops.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace sko {

std::string to_string(Mechanism m) { return m == Mechanism::Sko ? "sko" : "baseline"; }

Mechanism parse_mechanism(std::string_view text) {
  if (text == "sko") return Mechanism::Sko;
  if (text == "baseline") return Mechanism::Baseline;
  throw std::invalid_argument("unknown attention mechanism '" + std::string(text) +
                              "' (expected sko or baseline)");
}

namespace {

void check_heads(Index d_model, Index heads) {
  if (heads <= 0 || d_model <= 0 || d_model % heads != 0)
    throw std::invalid_argument("attention: D = " + std::to_string(d_model) +
                                " is not divisible by H = " + std::to_string(heads));
}

template <typename Scalar>
void check_input(const Tensor<Scalar>& x, Index d_model) {
  if (x.rank() != 3 || x.dim(2) != d_model)
    throw DimensionError("attention: expected input [B, N, " + std::to_string(d_model) + "], got " +
                         to_string(x.shape()));
  if (x.dim(1) == 0) throw DimensionError("attention: empty sequence (N = 0)");
}

template <typename Scalar>
Tensor<Scalar> projection(Index d, double stddev, Rng& rng) {
  return normal_tensor<Scalar>(Shape{d, d}, stddev, rng, true);
}

template <typename Scalar>
Tensor<Scalar> position_counts(Index n) {
  Buffer<Scalar> m(n);
  for (Index i = 0; i < n; ++i) m[i] = Scalar(i + 1);
  return Tensor<Scalar>::from_buffer(Shape{n}, std::move(m));
}

}  // namespace

// ------------------------------------------------------------------- SKO

template <typename Scalar>
SkoAttentionLayer<Scalar> SkoAttentionLayer<Scalar>::create(const AttentionSpec& spec, Rng& rng) {
  check_heads(spec.d_model, spec.heads);
  if (Index(spec.degrees.size()) != spec.heads)
    throw std::invalid_argument("attention: " + std::to_string(spec.degrees.size()) +
                                " kernel degrees for " + std::to_string(spec.heads) + " heads");
  SkoAttentionLayer l;
  l.d_model = spec.d_model;
  l.heads = spec.heads;
  l.w_q = projection<Scalar>(spec.d_model, spec.init_std, rng);
  l.w_k = projection<Scalar>(spec.d_model, spec.init_std, rng);
  l.w_v = projection<Scalar>(spec.d_model, spec.init_std, rng);
  l.kernel = KernelParams<Scalar>::create(spec.q, spec.degrees, spec.learn_degrees, spec.kernel_init);
  l.rms_gain = Tensor<Scalar>::ones(Shape{spec.d_model}, true);
  l.w_o = projection<Scalar>(spec.d_model, spec.init_std, rng);
  l.rms_eps = Scalar(spec.rms_eps);
  return l;
}

template <typename Scalar>
void SkoAttentionLayer<Scalar>::validate() const {
  check_heads(d_model, heads);
  if (kernel.heads() != heads)
    throw std::invalid_argument("attention: kernel has " + std::to_string(kernel.heads()) +
                                " degrees for " + std::to_string(heads) + " heads");
  kernel.validate();
}

template <typename Scalar>
std::vector<NamedParam<Scalar>> SkoAttentionLayer<Scalar>::parameters(const std::string& prefix) const {
  std::vector<NamedParam<Scalar>> p{
      {prefix + "w_q", w_q, true},
      {prefix + "w_k", w_k, true},
      {prefix + "w_v", w_v, true},
      {prefix + "kernel_weights", kernel.weights, false},
      {prefix + "rms_gain", rms_gain, false},
      {prefix + "w_o", w_o, true},
  };
  if (kernel.learn_degrees()) p.push_back({prefix + "kernel_degrees", kernel.degrees, false});
  return p;
}

template <typename Scalar>
Tensor<Scalar> sko_aggregate(const Tensor<Scalar>& x, const SkoAttentionLayer<Scalar>& layer) {
  check_input(x, layer.d_model);
  const Index H = layer.heads;
  const Index N = x.dim(1);
  const auto q = l2_normalize_rows(split_heads(matmul(x, layer.w_q), H));
  const auto k = l2_normalize_rows(split_heads(matmul(x, layer.w_k), H));
  const auto v = split_heads(matmul(x, layer.w_v), H);
  auto weights = tril_mask(eval_kernel(matmul(q, transpose(k)), layer.kernel), Scalar(0));
  return merge_heads(divide_rows(matmul(weights, v), position_counts<Scalar>(N)));
}

template <typename Scalar>
Tensor<Scalar> sko_project(const Tensor<Scalar>& o_raw, const SkoAttentionLayer<Scalar>& layer) {
  return matmul(rmsnorm(o_raw, layer.rms_gain, layer.rms_eps), layer.w_o);
}

template <typename Scalar>
Tensor<Scalar> sko_forward(const Tensor<Scalar>& x, const SkoAttentionLayer<Scalar>& layer) {
  return sko_project(sko_aggregate(x, layer), layer);
}

// -------------------------------------------------------------- baseline

template <typename Scalar>
BaselineAttentionLayer<Scalar> BaselineAttentionLayer<Scalar>::create(const AttentionSpec& spec,
                                                                      Rng& rng) {
  check_heads(spec.d_model, spec.heads);
  BaselineAttentionLayer l;
  l.d_model = spec.d_model;
  l.heads = spec.heads;
  l.w_q = projection<Scalar>(spec.d_model, spec.init_std, rng);
  l.w_k = projection<Scalar>(spec.d_model, spec.init_std, rng);
  l.w_v = projection<Scalar>(spec.d_model, spec.init_std, rng);
  l.w_o = projection<Scalar>(spec.d_model, spec.init_std, rng);
  return l;
}

template <typename Scalar>
Scalar BaselineAttentionLayer<Scalar>::scale() const {
  return Scalar(1) / std::sqrt(Scalar(head_dim()));
}

template <typename Scalar>
void BaselineAttentionLayer<Scalar>::validate() const {
  check_heads(d_model, heads);
}

template <typename Scalar>
std::vector<NamedParam<Scalar>> BaselineAttentionLayer<Scalar>::parameters(
    const std::string& prefix) const {
  return {{prefix + "w_q", w_q, true},
          {prefix + "w_k", w_k, true},
          {prefix + "w_v", w_v, true},
          {prefix + "w_o", w_o, true}};
}

template <typename Scalar>
Tensor<Scalar> baseline_forward(const Tensor<Scalar>& x, const BaselineAttentionLayer<Scalar>& layer) {
  check_input(x, layer.d_model);
  const Index H = layer.heads;
  const auto q = split_heads(matmul(x, layer.w_q), H);
  const auto k = split_heads(matmul(x, layer.w_k), H);
  const auto v = split_heads(matmul(x, layer.w_v), H);
  const auto scores = scale(matmul(q, transpose(k)), layer.scale());
  const auto probs =
      softmax_rows(tril_mask(scores, -std::numeric_limits<Scalar>::infinity()));
  return matmul(merge_heads(matmul(probs, v)), layer.w_o);
}

// ------------------------------------------------------------- interface

template <typename Scalar>
AttentionLayer<Scalar> AttentionLayer<Scalar>::create(Mechanism mechanism, const AttentionSpec& spec,
                                                      Rng& rng) {
  if (mechanism == Mechanism::Sko) return AttentionLayer(SkoAttentionLayer<Scalar>::create(spec, rng));
  return AttentionLayer(BaselineAttentionLayer<Scalar>::create(spec, rng));
}

template <typename Scalar>
Tensor<Scalar> AttentionLayer<Scalar>::forward(const Tensor<Scalar>& x) const {
  if (const auto* s = sko()) return sko_forward(x, *s);
  return baseline_forward(x, *baseline());
}

template <typename Scalar>
std::vector<NamedParam<Scalar>> AttentionLayer<Scalar>::parameters(const std::string& prefix) const {
  return std::visit([&](const auto& l) { return l.parameters(prefix); }, impl_);
}

// -------------------------------------------------------- density check

template <typename Scalar>
DensityReport density_invariance_check(const SkoAttentionLayer<Scalar>& layer,
                                       const Tensor<Scalar>& x, double alpha) {
  if (!(alpha > 0)) throw std::invalid_argument("density_invariance_check: alpha must be > 0");
  NoGradScope<Scalar> no_grad;
  const auto o_raw = sko_aggregate(x, layer);
  const auto reference = sko_project(o_raw, layer);
  const auto scaled = sko_project(scale(o_raw, Scalar(alpha)), layer);

  DensityReport r;
  r.alpha = alpha;
  const Buffer<double> ref = reference.values().template cast<double>();
  const Buffer<double> diff = (scaled.values().template cast<double>() - ref).abs();
  r.max_abs_diff = diff.size() ? diff.maxCoeff() : 0.0;
  const double ref_max = ref.size() ? ref.abs().maxCoeff() : 0.0;
  r.max_rel_diff = ref_max > 0 ? r.max_abs_diff / ref_max : r.max_abs_diff;

  const Index D = o_raw.dim(-1);
  const Index rows = o_raw.numel() / D;
  double min_ms = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < rows; ++i)
    min_ms = std::min(min_ms, o_raw.values().segment(i * D, D).template cast<double>().square().mean());
  r.predicted_rel_bound = double(layer.rms_eps) / (2 * alpha * alpha * min_ms);
  return r;
}

#define SKO_INSTANTIATE(T)                                                                       \
  template struct SkoAttentionLayer<T>;                                                          \
  template struct BaselineAttentionLayer<T>;                                                     \
  template class AttentionLayer<T>;                                                              \
  template Tensor<T> sko_aggregate(const Tensor<T>&, const SkoAttentionLayer<T>&);               \
  template Tensor<T> sko_project(const Tensor<T>&, const SkoAttentionLayer<T>&);                 \
  template Tensor<T> sko_forward(const Tensor<T>&, const SkoAttentionLayer<T>&);                 \
  template Tensor<T> baseline_forward(const Tensor<T>&, const BaselineAttentionLayer<T>&);       \
  template DensityReport density_invariance_check(const SkoAttentionLayer<T>&, const Tensor<T>&, \
                                                  double);

SKO_INSTANTIATE(float)
SKO_INSTANTIATE(double)

#undef SKO_INSTANTIATE

}  // namespace sko
