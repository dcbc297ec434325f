#include "sko/optim.hpp"

#include <cmath>
#include <numbers>

namespace sko {

double cosine_lr(Index step, Index total, double lr_base, double lr_min) {
  if (total <= 0) return lr_base;
  const double t = static_cast<double>(std::clamp<Index>(step, 0, total)) / double(total);
  return lr_min + 0.5 * (lr_base - lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

template <typename Scalar>
AdamW<Scalar>::AdamW(std::vector<NamedParam<Scalar>> params, AdamWOptions options)
    : params_(std::move(params)), options_(options) {
  for (const auto& p : params_) {
    const Index n = p.tensor.numel();
    moments_[p.name] = Moments{Buffer<Scalar>::Zero(n), Buffer<Scalar>::Zero(n)};
  }
}

template <typename Scalar>
void AdamW<Scalar>::step(double lr) {
  for (const auto& p : params_)
    if (p.tensor.has_grad() && !p.tensor.grad().allFinite())
      throw NumericError("non-finite gradient in parameter " + p.name);

  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const Scalar c1 = Scalar(1.0 - std::pow(b1, double(steps_)));
  const Scalar c2 = Scalar(1.0 - std::pow(b2, double(steps_)));
  const Scalar lr_s = Scalar(lr), eps = Scalar(options_.eps);
  for (const auto& p : params_) {
    auto tensor = p.tensor;
    auto& value = tensor.mutable_values();
    auto& mom = moments_.at(p.name);
    if (p.decay && options_.weight_decay != 0) value *= Scalar(1.0 - lr * options_.weight_decay);
    if (p.tensor.has_grad()) {
      const auto& g = p.tensor.grad();
      mom.m = Scalar(b1) * mom.m + Scalar(1 - b1) * g;
      mom.v = Scalar(b2) * mom.v + Scalar(1 - b2) * g.square();
    } else {
      mom.m *= Scalar(b1);
      mom.v *= Scalar(b2);
    }
    value -= lr_s * (mom.m / c1) / ((mom.v / c2).sqrt() + eps);
  }
}

template <typename Scalar>
double global_grad_norm(const std::vector<NamedParam<Scalar>>& params) {
  double sq = 0;
  for (const auto& p : params)
    if (p.tensor.has_grad()) sq += p.tensor.grad().template cast<double>().square().sum();
  return std::sqrt(sq);
}

template <typename Scalar>
double clip_grad_norm(const std::vector<NamedParam<Scalar>>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0 && norm > max_norm) {
    const Scalar factor = Scalar(max_norm / norm);
    for (const auto& p : params)
      if (p.tensor.has_grad()) p.tensor.node()->grad *= factor;
  }
  return norm;
}

template <typename Scalar>
void zero_grads(const std::vector<NamedParam<Scalar>>& params) {
  for (auto p : params) p.tensor.zero_grad();
}

#define SKO_INSTANTIATE(S)                                                              \
  template class AdamW<S>;                                                              \
  template double global_grad_norm<S>(const std::vector<NamedParam<S>>&);               \
  template double clip_grad_norm<S>(const std::vector<NamedParam<S>>&, double);         \
  template void zero_grads<S>(const std::vector<NamedParam<S>>&);

SKO_INSTANTIATE(float)
SKO_INSTANTIATE(double)

#undef SKO_INSTANTIATE

}  // namespace sko
