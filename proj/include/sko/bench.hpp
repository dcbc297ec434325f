#pragma once

// Timing sweeps of the attention layers and an audit of how many N x N
// buffers the kernel recurrence keeps alive.

#include "sko/attention.hpp"
#include "sko/trainer.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace sko {

enum class SweepAxis { N, D, Degree };

std::string to_string(SweepAxis axis);
/// Accepts "N", "D" or "n_max".
SweepAxis parse_sweep_axis(std::string_view text);

struct BenchSpec {
  Mechanism mechanism = Mechanism::Sko;
  SweepAxis axis = SweepAxis::N;
  std::vector<Index> values{64, 128, 256, 512};
  Index batch = 1;
  Index seq_len = 256;  // N when not swept
  Index d_model = 32;   // D when not swept
  Index heads = 2;
  int n_max = 4;        // every head's degree when not swept
  int q = 16;
  int repetitions = 5;
  int warmups = 2;
  double min_sample_seconds = 0.05;
  bool backward = true;
  Precision precision = Precision::F64;
  std::uint64_t seed = 0;
};

struct TimingPoint {
  Index value = 0;
  Index inner_loops = 1;      // calls per timed sample
  double forward_s = 0;       // median seconds per forward
  double forward_backward_s = 0;  // median seconds per forward + backward (0 if skipped)
};

struct LinearFit {
  double slope = 0;
  double intercept = 0;
  double r2 = 0;
};

/// Ordinary least squares y ~ a + b x.
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct BenchReport {
  BenchSpec spec;
  std::vector<TimingPoint> points;
  LinearFit loglog_forward;     // log t vs log value
  LinearFit loglog_forward_backward;
  LinearFit affine_forward;     // t vs value
  LinearFit affine_forward_backward;
  int threads = 1;
};

/// Median of `repetitions` samples after `warmups` discarded ones. A sample
/// times enough back-to-back calls to last at least min_sample_seconds.
BenchReport time_scaling(const BenchSpec& spec);

struct MemoryProbe {
  Index seq_len = 0;
  int n_max = 0;
  bool training = false;
  /// N x N buffers alive besides the input similarities: the peak during an
  /// inference call, or those held by the tape after a recorded call.
  Index retained_buffers = 0;
  Index buffer_bytes = 0;  // bytes of one [B, H, N, N] buffer
};

/// Evaluates the kernel of `heads` heads with every degree = n_max on a
/// random [1, heads, N, N] similarity tensor and counts live buffers.
MemoryProbe memory_probe(Index seq_len, int n_max, bool training, Index heads = 2,
                         Precision precision = Precision::F64);

void write_bench_csv(std::ostream& os, const BenchReport& report);
void write_bench_summary(std::ostream& os, const BenchReport& report);
void write_memory_csv(std::ostream& os, const std::vector<MemoryProbe>& probes);

}  // namespace sko
