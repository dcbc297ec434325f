#include "sko/ops.hpp"
#include "sko/random.hpp"
#include "sko/tensor.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace sko;
using T = Tensor<double>;

TEST_CASE("construction and shape queries") {
  const auto t = T::from_vector({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rank() == 2);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(-1) == 3);
  CHECK(t.numel() == 6);
  CHECK(t[4] == 5);
  CHECK(to_string(t.shape()) == "[2, 3]");
  CHECK(T::scalar(2.5).item() == 2.5);
  CHECK_THROWS_AS(T::from_vector({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(t.item(), DimensionError);
  CHECK_THROWS_AS(t.dim(2), DimensionError);
}

TEST_CASE("untaped operations keep no history") {
  auto w = T::from_vector({3}, {1, 2, 3}, true);
  const auto y = sum(mul(w, w));
  CHECK(y.is_leaf());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("sum(w * x) gives grad x") {
  auto w = T::from_vector({3}, {0.5, -1, 2}, true);
  const auto x = T::from_vector({3}, {4, 5, 6});
  Tape<double> tape;
  tape.backward(sum(mul(w, x)));
  CHECK(w.grad()[0] == 4);
  CHECK(w.grad()[1] == 5);
  CHECK(w.grad()[2] == 6);
}

TEST_CASE("sum(x^2) at [1, 2, 3] gives [2, 4, 6]") {
  auto x = T::from_vector({3}, {1, 2, 3}, true);
  Tape<double> tape;
  tape.backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == 2);
  CHECK(x.grad()[1] == 4);
  CHECK(x.grad()[2] == 6);
}

TEST_CASE("shared subexpressions accumulate gradient") {
  auto x = T::from_vector({2}, {3, -1}, true);
  Tape<double> tape;
  const auto y = add(x, x);
  tape.backward(sum(mul(y, x)));  // 2 x^2
  CHECK(x.grad()[0] == doctest::Approx(12));
  CHECK(x.grad()[1] == doctest::Approx(-4));
}

TEST_CASE("tape misuse is rejected") {
  auto x = T::from_vector({2}, {1, 2}, true);
  SUBCASE("non-scalar loss") {
    Tape<double> tape;
    CHECK_THROWS_AS(tape.backward(mul(x, x)), AutodiffError);
  }
  SUBCASE("second backward") {
    Tape<double> tape;
    const auto loss = sum(mul(x, x));
    tape.backward(loss);
    CHECK(tape.consumed());
    CHECK_THROWS_AS(tape.backward(loss), AutodiffError);
  }
  SUBCASE("stale leaf gradient") {
    {
      Tape<double> tape;
      tape.backward(sum(x));
    }
    Tape<double> tape;
    CHECK_THROWS_AS(tape.backward(sum(x)), AutodiffError);
    x.zero_grad();
  }
}

TEST_CASE("no-grad scope suspends recording") {
  auto x = T::from_vector({2}, {1, 2}, true);
  Tape<double> tape;
  {
    NoGradScope<double> off;
    const auto y = mul(x, x);
    CHECK(y.is_leaf());
  }
  const auto z = mul(x, x);
  CHECK_FALSE(z.is_leaf());
  CHECK(tape.size() == 1);
}

TEST_CASE("detach drops history") {
  auto x = T::from_vector({2}, {1, 2}, true);
  Tape<double> tape;
  const auto y = mul(x, x).detach();
  CHECK(y.is_leaf());
  CHECK_FALSE(y.requires_grad());
  CHECK(y[1] == 4);
}

TEST_CASE("buffer census counts live buffers of one shape") {
  BufferCensus census({5, 5});
  CHECK(census.live() == 0);
  {
    auto a = T::zeros({5, 5});
    auto b = T::ones({5, 5});
    auto c = T::zeros({4, 5});
    CHECK(census.live() == 2);
  }
  CHECK(census.live() == 0);
  CHECK(census.peak() == 2);
  census.reset_peak();
  CHECK(census.peak() == 0);
}

TEST_CASE("finite check flags overflow when enabled") {
  FiniteCheckScope on(true);
  const auto big = T::from_vector({2}, {1, 1e308});
  CHECK_THROWS_AS(scale(big, 10.0), NumericError);
  // non-finite inputs propagate without a second report
  const auto x = T::from_vector({2}, {1, std::numeric_limits<double>::quiet_NaN()});
  CHECK(std::isnan(scale(x, 2.0)[1]));
  FiniteCheckScope off(false);
  CHECK(std::isinf(scale(big, 10.0)[1]));
}

TEST_CASE("float and double instantiate the same graph") {
  auto x = Tensor<float>::from_vector({2}, {1.5f, -2.f}, true);
  Tape<float> tape;
  tape.backward(sum(mul(x, x)));
  CHECK(x.grad()[0] == 3.f);
  CHECK(x.grad()[1] == -4.f);
}
