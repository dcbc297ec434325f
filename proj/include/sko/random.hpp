#pragma once

#include "sko/tensor.hpp"

#include <random>

namespace sko {

using Rng = std::mt19937_64;

template <typename Scalar>
Tensor<Scalar> normal_tensor(Shape shape, double stddev, Rng& rng, bool requires_grad = false) {
  std::normal_distribution<double> dist(0.0, stddev);
  Buffer<Scalar> values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = Scalar(dist(rng));
  return Tensor<Scalar>::from_buffer(std::move(shape), std::move(values), requires_grad);
}

template <typename Scalar>
Tensor<Scalar> uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Buffer<Scalar> values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = Scalar(dist(rng));
  return Tensor<Scalar>::from_buffer(std::move(shape), std::move(values));
}

}  // namespace sko
