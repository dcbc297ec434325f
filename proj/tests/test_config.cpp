#include "sko/config.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace sko;

TEST_CASE("key-value parsing") {
  const auto kv = parse_key_values("# comment\n\nmodel.D = 32\n  train.lr_base=0.001  \n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("model.D") == "32");
  CHECK(kv.at("train.lr_base") == "0.001");
  CHECK_THROWS_AS(parse_key_values("model.D 32\n"), ConfigError);
  CHECK(format_key_values(kv) == "model.D = 32\ntrain.lr_base = 0.001\n");
}

TEST_CASE("overrides") {
  KeyValues kv{{"model.D", "32"}};
  apply_override(kv, "model.D=16");
  apply_override(kv, "train.dataset = x.txt");
  CHECK(kv.at("model.D") == "16");
  CHECK(kv.at("train.dataset") == "x.txt");
  CHECK_THROWS_AS(apply_override(kv, "novalue"), ConfigError);
}

TEST_CASE("resolution applies every key and validates") {
  const auto rc = resolve_config({{"model.D", "32"},
                                  {"model.H", "2"},
                                  {"model.degrees", "2.5,3"},
                                  {"model.mechanism", "baseline"},
                                  {"train.betas", "0.8,0.99"},
                                  {"train.precision", "f32"},
                                  {"train.total_steps", "10"},
                                  {"train.eval_interval", "5"}});
  CHECK(rc.model.d_model == 32);
  CHECK(rc.model.degrees == std::vector<double>{2.5, 3});
  CHECK(rc.model.mechanism == Mechanism::Baseline);
  CHECK(rc.train.beta1 == 0.8);
  CHECK(rc.train.beta2 == 0.99);
  CHECK(rc.train.precision == Precision::F32);
}

TEST_CASE("resolution errors name the key") {
  auto message = [](const KeyValues& kv) {
    try {
      resolve_config(kv);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message({{"model.bogus", "1"}}).find("model.bogus") != std::string::npos);
  CHECK(message({{"model.D", "abc"}}).find("model.D") != std::string::npos);
  CHECK(message({{"model.mechanism", "rnn"}}).find("rnn") != std::string::npos);
  CHECK_FALSE(message({{"model.H", "3"}}).empty());
  CHECK_FALSE(message({{"train.val_fraction", "1.5"}}).empty());
}

TEST_CASE("resolved config round-trips") {
  RunConfig rc;
  rc.model.degrees = {2.5, 1.0 / 3.0, 4, 5};
  rc.train.lr_base = 0.1 + 0.2;
  const auto kv = to_key_values(rc);
  const auto back = resolve_config(kv);
  CHECK(to_key_values(back) == kv);
  CHECK(back.model.degrees[1] == 1.0 / 3.0);
  CHECK(back.train.lr_base == 0.1 + 0.2);
  CHECK(model_from_key_values(kv).degrees == rc.model.degrees);
}

TEST_CASE("mechanism is the only difference between matched configs") {
  RunConfig a, b;
  b.model.mechanism = Mechanism::Baseline;
  const auto ka = to_key_values(a), kb = to_key_values(b);
  int diffs = 0;
  for (const auto& [k, v] : ka)
    if (kb.at(k) != v) {
      ++diffs;
      CHECK(k == "model.mechanism");
    }
  CHECK(diffs == 1);
}

TEST_CASE("double formatting") {
  for (double v : {0.0, 1.0, 6e-4, 1e-5, 0.1 + 0.2, 1e300, -2.5})
    CHECK(parse_double(format_double(v), "k") == v);
  CHECK(parse_double(format_double(6e-4), "k") == 6e-4);
  CHECK_THROWS_AS(parse_double("1.0x", "k"), ConfigError);
}
