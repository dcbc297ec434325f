#pragma once

// Causal multi-head attention layers sharing one interface: the spherical
// kernel operator and standard softmax attention.
//
// Spherical kernel operator, per head h on x[B, N, D]:
//   Q~, K~   = rows of x W_Q, x W_K split into heads and L2-normalised
//   S        = Q~ K~^T                              (cosine similarities)
//   A        = Tril(phi_h(S))                       (masked entries are 0)
//   O_raw    = concat_h((A V_h) ./ M),  M = [1, 2, ..., N]^T
//   O        = RMSNorm(O_raw) W_O

#include "sko/random.hpp"
#include "sko/tensor.hpp"
#include "sko/ultraspherical.hpp"

#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace sko {

enum class Mechanism { Sko, Baseline };

std::string to_string(Mechanism m);
/// Accepts "sko" or "baseline"; throws std::invalid_argument otherwise.
Mechanism parse_mechanism(std::string_view text);

template <typename Scalar>
struct NamedParam {
  std::string name;
  Tensor<Scalar> tensor;
  bool decay = true;
};

struct AttentionSpec {
  Index d_model = 64;
  Index heads = 4;
  int q = 16;
  std::vector<double> degrees{2, 3, 4, 5};
  bool learn_degrees = false;
  double kernel_init = 1.0;
  double rms_eps = 1e-6;
  double init_std = 0.02;
};

template <typename Scalar>
struct SkoAttentionLayer {
  Index d_model = 0;
  Index heads = 0;
  Tensor<Scalar> w_q, w_k, w_v, w_o;  // [D, D], applied as x W
  KernelParams<Scalar> kernel;
  Tensor<Scalar> rms_gain;  // [D]
  Scalar rms_eps = Scalar(1e-6);

  static SkoAttentionLayer create(const AttentionSpec& spec, Rng& rng);
  Index head_dim() const { return d_model / heads; }
  void validate() const;
  std::vector<NamedParam<Scalar>> parameters(const std::string& prefix) const;
};

template <typename Scalar>
struct BaselineAttentionLayer {
  Index d_model = 0;
  Index heads = 0;
  Tensor<Scalar> w_q, w_k, w_v, w_o;

  static BaselineAttentionLayer create(const AttentionSpec& spec, Rng& rng);
  Index head_dim() const { return d_model / heads; }
  Scalar scale() const;
  void validate() const;
  std::vector<NamedParam<Scalar>> parameters(const std::string& prefix) const;
};

/// O_raw: the 1/M-normalised kernel aggregate before RMSNorm, shape [B, N, D].
template <typename Scalar>
Tensor<Scalar> sko_aggregate(const Tensor<Scalar>& x, const SkoAttentionLayer<Scalar>& layer);

/// RMSNorm(O_raw) W_O
template <typename Scalar>
Tensor<Scalar> sko_project(const Tensor<Scalar>& o_raw, const SkoAttentionLayer<Scalar>& layer);

template <typename Scalar>
Tensor<Scalar> sko_forward(const Tensor<Scalar>& x, const SkoAttentionLayer<Scalar>& layer);

template <typename Scalar>
Tensor<Scalar> baseline_forward(const Tensor<Scalar>& x, const BaselineAttentionLayer<Scalar>& layer);

/// Either mechanism behind one call surface.
template <typename Scalar>
class AttentionLayer {
 public:
  AttentionLayer() = default;
  explicit AttentionLayer(SkoAttentionLayer<Scalar> layer) : impl_(std::move(layer)) {}
  explicit AttentionLayer(BaselineAttentionLayer<Scalar> layer) : impl_(std::move(layer)) {}

  static AttentionLayer create(Mechanism mechanism, const AttentionSpec& spec, Rng& rng);

  Mechanism mechanism() const {
    return std::holds_alternative<SkoAttentionLayer<Scalar>>(impl_) ? Mechanism::Sko
                                                                     : Mechanism::Baseline;
  }
  Tensor<Scalar> forward(const Tensor<Scalar>& x) const;
  std::vector<NamedParam<Scalar>> parameters(const std::string& prefix) const;

  const SkoAttentionLayer<Scalar>* sko() const { return std::get_if<SkoAttentionLayer<Scalar>>(&impl_); }
  SkoAttentionLayer<Scalar>* sko() { return std::get_if<SkoAttentionLayer<Scalar>>(&impl_); }
  const BaselineAttentionLayer<Scalar>* baseline() const {
    return std::get_if<BaselineAttentionLayer<Scalar>>(&impl_);
  }

 private:
  std::variant<SkoAttentionLayer<Scalar>, BaselineAttentionLayer<Scalar>> impl_;
};

struct DensityReport {
  double alpha = 1;
  double max_abs_diff = 0;
  /// max |O(alpha) - O(1)| / max |O(1)|
  double max_rel_diff = 0;
  /// First-order size of the eps term: eps / (2 alpha^2 min_row mean(O_raw^2)).
  double predicted_rel_bound = 0;
};

/// Compares RMSNorm(alpha * O_raw) W_O with RMSNorm(O_raw) W_O for the layer's
/// own aggregate of x. Throws std::invalid_argument unless alpha > 0.
template <typename Scalar>
DensityReport density_invariance_check(const SkoAttentionLayer<Scalar>& layer,
                                       const Tensor<Scalar>& x, double alpha);

}  // namespace sko
