#pragma once

// Localized spherical kernel
//
//   phi(x) = sum_{k=0}^{K} w_k * gamma_k(n) * R_k(x),   x in [-1, 1]
//
// where R_k are ultraspherical polynomials normalised to R_k(1) = 1 for
// lambda = (q - 1) / 2, produced by the three-term recurrence
//
//   R_0 = 1, R_1 = x,
//   R_k = c1(k) x R_{k-1} - c2(k) R_{k-2},
//   c1 = 2(k + lambda - 1) / (k + 2 lambda - 1),  c2 = (k - 1) / (k + 2 lambda - 1)
//
// and gamma_k(n) = clamp(n - k + 1, 0, 1) truncates the expansion at a
// fractional degree n.

#include "sko/tensor.hpp"

#include <iosfwd>
#include <vector>

namespace sko {

struct RecurrenceCoeffs {
  double c1;
  double c2;
};

/// Throws std::invalid_argument for k < 2 or lambda <= 0.
RecurrenceCoeffs recurrence_coeffs(int k, double lambda);

/// Continuous truncation gate in [0, 1].
double gate(int k, double n);

inline double lambda_for(int q) { return (q - 1) / 2.0; }

/// Cosine similarities further than this outside [-1, 1] are rejected.
inline constexpr double kCosineTolerance = 1e-4;

template <typename Scalar>
struct KernelParams {
  int q = 2;
  int max_degree = 0;       // K = ceil(max_h n_h)
  Tensor<Scalar> degrees;   // [H]
  Tensor<Scalar> weights;   // [H, K + 1]

  /// Weights start at `weight_init`; degrees are trainable only if `learn_degrees`.
  static KernelParams create(int q, const std::vector<double>& degrees, bool learn_degrees = false,
                             double weight_init = 1.0);

  double lambda() const { return lambda_for(q); }
  Index heads() const { return degrees.numel(); }
  bool learn_degrees() const { return degrees.requires_grad(); }
  void validate() const;
  /// Keeps trainable degrees inside [0, K] so the recurrence length stays fixed.
  void clamp_degrees();
};

/// W[:, k] * gamma_k(n) as an [H] tensor, differentiable in W and n.
template <typename Scalar>
Tensor<Scalar> gated_weights(const KernelParams<Scalar>& params, int k);

/// R_0 .. R_K evaluated elementwise. Inputs are clamped to [-1, 1]; values
/// beyond the cosine tolerance throw std::domain_error.
template <typename Scalar>
std::vector<Tensor<Scalar>> eval_polynomials(const Tensor<Scalar>& x, double lambda, int K);

/// phi applied to x[..., H, N, M], head h using degrees[h] and weights[h, :].
/// Without an active tape only R_{k-1}, R_{k-2} and the running sum are kept
/// alive; `x` is clamped in place when this call holds its only reference.
template <typename Scalar>
Tensor<Scalar> eval_kernel(Tensor<Scalar> x, const KernelParams<Scalar>& params);

struct ProfilePoint {
  double x;
  double phi;
};

/// phi of one head on a uniform grid over [-1, 1].
template <typename Scalar>
std::vector<ProfilePoint> kernel_profile(const KernelParams<Scalar>& params, Index head,
                                         Index grid_size);

/// "x,phi" header, one row per point, 17 significant digits.
void write_profile_csv(std::ostream& os, const std::vector<ProfilePoint>& profile);

}  // namespace sko
