#pragma once

// Side-by-side validation curves of a baseline run and a spherical-kernel run.

#include "sko/trainer.hpp"

#include <iosfwd>
#include <optional>
#include <vector>

namespace sko {

struct ComparisonRow {
  Index step = 0;
  double baseline_val_loss = 0;
  double baseline_val_ppl = 0;
  double sko_val_loss = 0;
  double sko_val_ppl = 0;
  double delta_loss = 0;  // sko - baseline
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  Index reference_step = 0;                // baseline step used as threshold
  double reference_loss = 0;               // baseline val loss there
  std::optional<Index> sko_reaches_reference;  // earliest step where sko is below it
};

/// Reference values of the original large-scale run at step 5000.
inline constexpr double kReferenceBaselineLoss = 5.9608;
inline constexpr double kReferenceSkoLoss = 5.7364;

/// Merges on step. Throws std::invalid_argument if the step grids differ or
/// are empty. The threshold is the baseline's loss at the last eval step not
/// after `reference_step`.
Comparison compare_runs(const std::vector<MetricsRow>& baseline, const std::vector<MetricsRow>& sko,
                        Index reference_step = 1000);

/// "step,baseline_val_loss,baseline_val_ppl,sko_val_loss,sko_val_ppl,delta_loss"
void write_comparison_csv(std::ostream& os, const Comparison& cmp);
/// Whitespace-separated columns with a '#' header, for gnuplot.
void write_comparison_dat(std::ostream& os, const Comparison& cmp);
/// Final losses, threshold step and the reference footer.
void write_comparison_summary(std::ostream& os, const Comparison& cmp);

}  // namespace sko
