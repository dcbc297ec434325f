#include "sko/compare.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>

namespace sko {

Comparison compare_runs(const std::vector<MetricsRow>& baseline, const std::vector<MetricsRow>& sko,
                        Index reference_step) {
  if (baseline.empty() || sko.empty()) throw std::invalid_argument("compare: a run has no eval rows");
  if (baseline.size() != sko.size())
    throw std::invalid_argument("compare: step grids differ (" + std::to_string(baseline.size()) +
                                " vs " + std::to_string(sko.size()) + " rows)");
  Comparison cmp;
  for (size_t i = 0; i < baseline.size(); ++i) {
    if (baseline[i].step != sko[i].step)
      throw std::invalid_argument("compare: step grids differ at row " + std::to_string(i) + " (" +
                                  std::to_string(baseline[i].step) + " vs " + std::to_string(sko[i].step) + ")");
    ComparisonRow r;
    r.step = baseline[i].step;
    r.baseline_val_loss = baseline[i].val_loss;
    r.baseline_val_ppl = baseline[i].val_ppl;
    r.sko_val_loss = sko[i].val_loss;
    r.sko_val_ppl = sko[i].val_ppl;
    r.delta_loss = sko[i].val_loss - baseline[i].val_loss;
    cmp.rows.push_back(r);
  }
  const ComparisonRow* ref = &cmp.rows.front();
  for (const auto& r : cmp.rows)
    if (r.step <= reference_step) ref = &r;
  cmp.reference_step = ref->step;
  cmp.reference_loss = ref->baseline_val_loss;
  for (const auto& r : cmp.rows)
    if (r.sko_val_loss <= cmp.reference_loss) {
      cmp.sko_reaches_reference = r.step;
      break;
    }
  return cmp;
}

void write_comparison_csv(std::ostream& os, const Comparison& cmp) {
  os << "step,baseline_val_loss,baseline_val_ppl,sko_val_loss,sko_val_ppl,delta_loss\n";
  char line[256];
  for (const auto& r : cmp.rows) {
    std::snprintf(line, sizeof line, "%lld,%.6f,%.4f,%.6f,%.4f,%.6f\n", static_cast<long long>(r.step),
                  r.baseline_val_loss, r.baseline_val_ppl, r.sko_val_loss, r.sko_val_ppl, r.delta_loss);
    os << line;
  }
}

void write_comparison_dat(std::ostream& os, const Comparison& cmp) {
  os << "# step baseline_val_loss sko_val_loss delta_loss\n";
  char line[160];
  for (const auto& r : cmp.rows) {
    std::snprintf(line, sizeof line, "%lld %.6f %.6f %.6f\n", static_cast<long long>(r.step),
                  r.baseline_val_loss, r.sko_val_loss, r.delta_loss);
    os << line;
  }
}

void write_comparison_summary(std::ostream& os, const Comparison& cmp) {
  const auto& last = cmp.rows.back();
  char line[256];
  std::snprintf(line, sizeof line, "final step %lld: baseline %.4f (ppl %.2f), sko %.4f (ppl %.2f), delta %+.4f\n",
                static_cast<long long>(last.step), last.baseline_val_loss, last.baseline_val_ppl,
                last.sko_val_loss, last.sko_val_ppl, last.delta_loss);
  os << line;
  std::snprintf(line, sizeof line, "baseline loss at step %lld: %.4f\n",
                static_cast<long long>(cmp.reference_step), cmp.reference_loss);
  os << line;
  if (cmp.sko_reaches_reference)
    os << "sko first reaches it at step " << *cmp.sko_reaches_reference << "\n";
  else
    os << "sko never reaches it on this grid\n";
  std::snprintf(line, sizeof line,
                "# reference (original large-scale run, step 5000, not reproducible here): "
                "baseline %.4f, sko %.4f\n",
                kReferenceBaselineLoss, kReferenceSkoLoss);
  os << line;
}

}  // namespace sko
