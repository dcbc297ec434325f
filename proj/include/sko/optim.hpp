#pragma once

#include "sko/attention.hpp"
#include "sko/tensor.hpp"

#include <map>
#include <string>
#include <vector>

namespace sko {

/// lr_min + (lr_base - lr_min) (1 + cos(pi step / total)) / 2, no warmup.
/// Returns lr_base when total == 0.
double cosine_lr(Index step, Index total, double lr_base, double lr_min);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

/// AdamW with decoupled weight decay (applied before the moment update) and
/// bias-corrected moments. Parameters flagged `decay = false` are not decayed.
template <typename Scalar>
class AdamW {
 public:
  struct Moments {
    Buffer<Scalar> m;
    Buffer<Scalar> v;
  };

  AdamW(std::vector<NamedParam<Scalar>> params, AdamWOptions options);

  /// Uses each parameter's current gradient; a missing gradient counts as zero.
  /// Throws NumericError naming the first parameter with a non-finite gradient.
  void step(double lr);

  Index steps() const { return steps_; }
  void set_steps(Index steps) { steps_ = steps; }
  const AdamWOptions& options() const { return options_; }
  const std::vector<NamedParam<Scalar>>& params() const { return params_; }
  std::map<std::string, Moments>& moments() { return moments_; }
  const std::map<std::string, Moments>& moments() const { return moments_; }

 private:
  std::vector<NamedParam<Scalar>> params_;
  AdamWOptions options_;
  std::map<std::string, Moments> moments_;
  Index steps_ = 0;
};

/// L2 norm over all gradients.
template <typename Scalar>
double global_grad_norm(const std::vector<NamedParam<Scalar>>& params);

/// Rescales gradients so their global norm is at most max_norm; returns the
/// norm before clipping.
template <typename Scalar>
double clip_grad_norm(const std::vector<NamedParam<Scalar>>& params, double max_norm);

template <typename Scalar>
void zero_grads(const std::vector<NamedParam<Scalar>>& params);

}  // namespace sko
