#pragma once

// Central finite-difference checks of tape gradients.

#include "sko/attention.hpp"
#include "sko/model.hpp"
#include "sko/tensor.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace sko {

struct GradCheckOptions {
  double step = 1e-4;
  /// Elements whose analytic and numeric gradients are both below this
  /// magnitude are checked in absolute terms only.
  double grad_floor = 1e-8;
};

struct GradCheckEntry {
  std::string name;
  Index elements = 0;
  double max_abs_error = 0;
  double max_rel_error = 0;
  double max_abs_grad = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;

  double max_rel_error() const;
  bool passed(double rel_tolerance) const { return max_rel_error() < rel_tolerance; }
};

/// Compares d loss / d p from one backward pass with the central difference
/// (8 (f(p + h) - f(p - h)) - (f(p + 2h) - f(p - 2h))) / 12h for every element
/// of every parameter. `loss` must rebuild the graph on each call.
GradCheckReport gradcheck(const std::function<Tensor<double>()>& loss,
                          const std::vector<NamedParam<double>>& params,
                          const GradCheckOptions& options = {});

/// One entry per differentiable op on random inputs of at most 4 x 4.
GradCheckReport gradcheck_ops(std::uint64_t seed, const GradCheckOptions& options = {});

/// A full spherical-kernel layer with learnable degrees at fractional values.
GradCheckReport gradcheck_sko_layer(std::uint64_t seed, const GradCheckOptions& options = {});

/// Every parameter of a language model built from `config` on a random batch.
GradCheckReport gradcheck_model(const ModelConfig& config, std::uint64_t seed,
                                const GradCheckOptions& options = {});

/// Micro configuration used for end-to-end checks: vocab 16, D 8, N 4, H 2, L 1.
ModelConfig micro_config(Mechanism mechanism = Mechanism::Sko);

/// "parameter,elements,max_abs_error,max_rel_error" CSV.
void write_gradcheck_csv(std::ostream& os, const GradCheckReport& report);

}  // namespace sko
