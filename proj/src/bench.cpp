#include "sko/bench.hpp"

#include "sko/ops.hpp"
#include "sko/random.hpp"
#include "sko/ultraspherical.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

namespace sko {

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::N: return "N";
    case SweepAxis::D: return "D";
    case SweepAxis::Degree: return "n_max";
  }
  return "?";
}

SweepAxis parse_sweep_axis(std::string_view text) {
  if (text == "N") return SweepAxis::N;
  if (text == "D") return SweepAxis::D;
  if (text == "n_max") return SweepAxis::Degree;
  throw std::invalid_argument("unknown sweep axis '" + std::string(text) + "' (expected N, D or n_max)");
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: need >= 2 points");
  const double n = double(x.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0;
  f.intercept = my - f.slope * mx;
  double sse = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    sse += r * r;
  }
  f.r2 = syy > 0 ? 1 - sse / syy : 1;
  return f;
}

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double timed(F&& f, Index loops) {
  const auto t0 = Clock::now();
  for (Index i = 0; i < loops; ++i) f();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Median per-call seconds; grows the inner loop until a sample is long enough.
template <typename F>
double measure(F&& f, const BenchSpec& spec, Index& loops) {
  for (int i = 0; i < spec.warmups; ++i) f();
  loops = 1;
  while (timed(f, loops) < spec.min_sample_seconds && loops < (Index(1) << 20)) loops *= 2;
  std::vector<double> samples;
  for (int r = 0; r < spec.repetitions; ++r) samples.push_back(timed(f, loops) / double(loops));
  return median(samples);
}

template <typename Scalar>
TimingPoint time_point(const BenchSpec& spec, Index value) {
  AttentionSpec a;
  a.heads = spec.heads;
  a.q = spec.q;
  a.d_model = spec.axis == SweepAxis::D ? value : spec.d_model;
  const Index N = spec.axis == SweepAxis::N ? value : spec.seq_len;
  const int n_max = spec.axis == SweepAxis::Degree ? int(value) : spec.n_max;
  a.degrees.assign(size_t(spec.heads), double(n_max));
  Rng rng(spec.seed);
  const auto layer = AttentionLayer<Scalar>::create(spec.mechanism, a, rng);
  auto x = normal_tensor<Scalar>(Shape{spec.batch, N, a.d_model}, 1.0, rng, true);
  const auto params = layer.parameters("");

  TimingPoint p;
  p.value = value;
  p.forward_s = measure(
      [&] {
        NoGradScope<Scalar> no_grad;
        auto y = layer.forward(x);
      },
      spec, p.inner_loops);
  if (spec.backward) {
    Index loops = 1;
    p.forward_backward_s = measure(
        [&] {
          Tape<Scalar> tape;
          tape.backward(sum(layer.forward(x)));
          x.zero_grad();
          for (auto q : params) q.tensor.zero_grad();
        },
        spec, loops);
  }
  return p;
}

template <typename Scalar>
MemoryProbe probe(Index N, int n_max, bool training, Index heads) {
  const Shape shape{1, heads, N, N};
  auto params = KernelParams<Scalar>::create(16, std::vector<double>(size_t(heads), double(n_max)));
  Rng rng(0);
  MemoryProbe m;
  m.seq_len = N;
  m.n_max = n_max;
  m.training = training;
  m.buffer_bytes = numel(shape) * Index(sizeof(Scalar));
  BufferCensus census(shape);
  auto x = uniform_tensor<Scalar>(shape, -1, 1, rng);
  if (training) {
    Tape<Scalar> tape;
    x.set_requires_grad(true);
    auto phi = eval_kernel(x, params);
    m.retained_buffers = census.live() - 1;
  } else {
    auto phi = eval_kernel(std::move(x), params);
    m.retained_buffers = census.peak() - 1;
  }
  return m;
}

}  // namespace

BenchReport time_scaling(const BenchSpec& spec) {
  if (spec.values.size() < 2) throw std::invalid_argument("bench: a sweep needs at least two values");
  if (spec.repetitions < 5) throw std::invalid_argument("bench: repetitions must be >= 5");
  BenchReport r;
  r.spec = spec;
  for (Index v : spec.values)
    r.points.push_back(spec.precision == Precision::F32 ? time_point<float>(spec, v)
                                                         : time_point<double>(spec, v));
  std::vector<double> lx, lf, lb, x, f, b;
  for (const auto& p : r.points) {
    x.push_back(double(p.value));
    f.push_back(p.forward_s);
    b.push_back(p.forward_backward_s);
    lx.push_back(std::log(double(p.value)));
    lf.push_back(std::log(p.forward_s));
    lb.push_back(p.forward_backward_s > 0 ? std::log(p.forward_backward_s) : 0.0);
  }
  r.loglog_forward = fit_line(lx, lf);
  r.affine_forward = fit_line(x, f);
  if (spec.backward) {
    r.loglog_forward_backward = fit_line(lx, lb);
    r.affine_forward_backward = fit_line(x, b);
  }
  return r;
}

MemoryProbe memory_probe(Index seq_len, int n_max, bool training, Index heads, Precision precision) {
  return precision == Precision::F32 ? probe<float>(seq_len, n_max, training, heads)
                                     : probe<double>(seq_len, n_max, training, heads);
}

void write_bench_csv(std::ostream& os, const BenchReport& r) {
  os << "mechanism,axis,value,batch,N,D,H,n_max,repetitions,inner_loops,forward_s,forward_backward_s\n";
  char line[256];
  for (const auto& p : r.points) {
    const auto& s = r.spec;
    const Index N = s.axis == SweepAxis::N ? p.value : s.seq_len;
    const Index D = s.axis == SweepAxis::D ? p.value : s.d_model;
    const Index n = s.axis == SweepAxis::Degree ? p.value : s.n_max;
    std::snprintf(line, sizeof line, "%s,%s,%lld,%lld,%lld,%lld,%lld,%lld,%d,%lld,%.9g,%.9g\n",
                  to_string(s.mechanism).c_str(), to_string(s.axis).c_str(), (long long)p.value,
                  (long long)s.batch, (long long)N, (long long)D, (long long)s.heads, (long long)n,
                  s.repetitions, (long long)p.inner_loops, p.forward_s, p.forward_backward_s);
    os << line;
  }
}

void write_bench_summary(std::ostream& os, const BenchReport& r) {
  char line[256];
  std::snprintf(line, sizeof line, "%s sweep over %s (%s, %d threads, median of %d after %d warmups)\n",
                to_string(r.spec.mechanism).c_str(), to_string(r.spec.axis).c_str(),
                to_string(r.spec.precision).c_str(), r.threads, r.spec.repetitions, r.spec.warmups);
  os << line;
  std::snprintf(line, sizeof line, "  forward:          log-log slope %.3f (R^2 %.4f), affine R^2 %.4f\n",
                r.loglog_forward.slope, r.loglog_forward.r2, r.affine_forward.r2);
  os << line;
  if (r.spec.backward) {
    std::snprintf(line, sizeof line, "  forward+backward: log-log slope %.3f (R^2 %.4f), affine R^2 %.4f\n",
                  r.loglog_forward_backward.slope, r.loglog_forward_backward.r2,
                  r.affine_forward_backward.r2);
    os << line;
  }
}

void write_memory_csv(std::ostream& os, const std::vector<MemoryProbe>& probes) {
  os << "N,n_max,mode,retained_buffers,buffer_bytes\n";
  for (const auto& p : probes)
    os << p.seq_len << ',' << p.n_max << ',' << (p.training ? "training" : "inference") << ','
       << p.retained_buffers << ',' << p.buffer_bytes << '\n';
}

}  // namespace sko
