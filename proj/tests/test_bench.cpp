#include "sko/bench.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace sko;

TEST_CASE("line fit") {
  const auto f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
  CHECK(f.slope == doctest::Approx(2));
  CHECK(f.intercept == doctest::Approx(1));
  CHECK(f.r2 == doctest::Approx(1));
  CHECK_THROWS_AS(fit_line({1}, {1}), std::invalid_argument);
}

TEST_CASE("sweep axis names") {
  CHECK(parse_sweep_axis("N") == SweepAxis::N);
  CHECK(parse_sweep_axis("n_max") == SweepAxis::Degree);
  CHECK(to_string(SweepAxis::D) == "D");
  CHECK_THROWS_AS(parse_sweep_axis("H"), std::invalid_argument);
}

TEST_CASE("spec preconditions") {
  BenchSpec s;
  s.values = {64};
  CHECK_THROWS_AS(time_scaling(s), std::invalid_argument);
  s.values = {16, 32};
  s.repetitions = 4;
  CHECK_THROWS_AS(time_scaling(s), std::invalid_argument);
}

TEST_CASE("small sweep produces a report and csv") {
  BenchSpec s;
  s.values = {8, 16};
  s.seq_len = 8;
  s.d_model = 8;
  s.min_sample_seconds = 1e-3;
  const auto r = time_scaling(s);
  REQUIRE(r.points.size() == 2);
  for (const auto& p : r.points) {
    CHECK(p.forward_s > 0);
    CHECK(p.forward_backward_s > 0);
    CHECK(p.inner_loops >= 1);
  }
  std::ostringstream os;
  write_bench_csv(os, r);
  CHECK([&] { const auto t = os.str(); return std::count(t.begin(), t.end(), '\n'); }() == 3);
}

TEST_CASE("memory audit") {
  for (int n : {2, 4, 8, 16}) CHECK(memory_probe(32, n, false).retained_buffers <= 3);
  const auto t5 = memory_probe(32, 5, true).retained_buffers;
  const auto t10 = memory_probe(32, 10, true).retained_buffers;
  CHECK(t10 > t5);
  CHECK(std::abs(double(t10) - 2.0 * double(t5)) <= 1.0);
  CHECK(memory_probe(64, 4, false).buffer_bytes == 4 * memory_probe(32, 4, false).buffer_bytes);
}
