#include "sko/checkpoint.hpp"
#include "sko/gradcheck.hpp"
#include "sko/trainer.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <unistd.h>

using namespace sko;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("sko_train_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::vector<std::int32_t> ramp(Index n, std::int32_t vocab) {
  std::vector<std::int32_t> t(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i) t[size_t(i)] = std::int32_t((i * 7 + i / 5) % vocab);
  return t;
}

TrainConfig tiny_train(Index steps, Index interval) {
  TrainConfig t;
  t.total_steps = steps;
  t.eval_interval = interval;
  t.batch_size = 2;
  t.eval_batches = 2;
  t.lr_base = 1e-2;
  t.lr_min = 1e-3;
  return t;
}

}  // namespace

TEST_CASE("precision names") {
  CHECK(parse_precision("f32") == Precision::F32);
  CHECK(parse_precision("f64") == Precision::F64);
  CHECK(to_string(Precision::F32) == "f32");
  CHECK_THROWS_AS(parse_precision("f16"), std::invalid_argument);
}

TEST_CASE("train config validation") {
  TrainConfig t;
  CHECK_NOTHROW(t.validate());
  t.lr_min = 1.0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.batch_size = 0;
  CHECK_THROWS_AS(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.total_steps = 0;
  CHECK_NOTHROW(t.validate());
}

TEST_CASE("split") {
  const auto d = split_tokens(ramp(1000, 16), 0.1);
  CHECK(d.train_size() == 900);
  CHECK(d.val_size() == 100);
  CHECK(d.disjoint());
  const auto s = shared_split(ramp(100, 16));
  CHECK_FALSE(s.disjoint());
  CHECK(s.train_size() == 100);
  CHECK_THROWS_AS(split_tokens(ramp(10, 16), 1.0), std::invalid_argument);
}

TEST_CASE("batch sampling is a pure function of (seed, step)") {
  const auto d = split_tokens(ramp(1000, 16), 0.1);
  const auto a = sample_train_batch(d, 4, 8, 1, 5);
  const auto b = sample_train_batch(d, 4, 8, 1, 5);
  const auto c = sample_train_batch(d, 4, 8, 1, 6);
  CHECK(a.starts == b.starts);
  CHECK(a.inputs.ids == b.inputs.ids);
  CHECK(a.starts != c.starts);
  for (size_t i = 0; i < a.starts.size(); ++i) {
    CHECK(a.starts[i] >= d.train_begin);
    CHECK(a.starts[i] + 9 <= d.train_end);
    for (Index j = 0; j < 8; ++j) {
      CHECK(a.inputs.ids[i * 8 + size_t(j)] == d.tokens[size_t(a.starts[i] + j)]);
      CHECK(a.targets[i * 8 + size_t(j)] == d.tokens[size_t(a.starts[i] + j + 1)]);
    }
  }
}

TEST_CASE("validation batches stay inside the validation range") {
  const auto d = split_tokens(ramp(1000, 16), 0.1);
  const auto vb = validation_batches(d, 3, 2, 8);
  CHECK(vb.size() == 3);
  CHECK(validation_overlap(d, vb, 8) == 0);
  CHECK(vb.front().starts == validation_batches(d, 3, 2, 8).front().starts);
  const auto s = shared_split(ramp(100, 16));
  CHECK(validation_overlap(s, validation_batches(s, 2, 2, 8), 8) > 0);
}

TEST_CASE("metrics csv round-trip") {
  std::vector<MetricsRow> rows{{10, 2.5, 2.25, std::exp(2.25), 1e-3, 0.5}, {20, 2.0, 1.5, std::exp(1.5), 5e-4, 1.0}};
  std::ostringstream os;
  write_metrics_csv(os, rows);
  CHECK(os.str().rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
  TempDir dir("csv");
  write_metrics_csv(dir.path / "m.csv", rows);
  const auto back = read_metrics_csv(dir.path / "m.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].step == 20);
  CHECK(back[1].val_loss == 1.5);
  CHECK(back[0].lr == 1e-3);
}

TEST_CASE("training writes the documented files") {
  TempDir dir("files");
  LanguageModel<double> model(micro_config());
  const auto data = split_tokens(ramp(400, 16), 0.25);
  TrainOptions opts;
  opts.out_dir = dir.path;
  const auto r = train(model, tiny_train(6, 3), data, opts);
  CHECK(r.final_step == 6);
  CHECK(r.step_losses.size() == 6);
  REQUIRE(r.rows.size() == 2);
  CHECK(r.rows[0].step == 3);
  CHECK(r.rows[1].step == 6);
  for (const auto& row : r.rows) CHECK(std::abs(row.val_ppl - std::exp(row.val_loss)) < 1e-12 * row.val_ppl);
  CHECK(fs::exists(dir.path / "metrics.csv"));
  CHECK(fs::exists(dir.path / "final.ckpt"));
  CHECK(fs::exists(dir.path / "checkpoints" / "step_3.ckpt"));
  CHECK(read_metrics_csv(dir.path / "metrics.csv").size() == 2);
}

TEST_CASE("zero steps writes a header-only csv and the initial model") {
  TempDir dir("zero");
  LanguageModel<double> model(micro_config());
  TrainOptions opts;
  opts.out_dir = dir.path;
  const auto r = train(model, tiny_train(0, 3), split_tokens(ramp(400, 16), 0.25), opts);
  CHECK(r.rows.empty());
  std::ifstream is(dir.path / "metrics.csv");
  std::string all((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  CHECK(all == std::string(kMetricsHeader) + "\n");
  CHECK(fs::exists(dir.path / "final.ckpt"));
}

TEST_CASE("shared splits need explicit permission") {
  LanguageModel<double> model(micro_config());
  CHECK_THROWS_AS(train(model, tiny_train(2, 1), shared_split(ramp(200, 16))), std::logic_error);
  TrainOptions opts;
  opts.allow_shared_split = true;
  CHECK_NOTHROW(train(model, tiny_train(2, 1), shared_split(ramp(200, 16)), opts));
}

TEST_CASE("resuming reproduces an uninterrupted run bit for bit") {
  const auto data = split_tokens(ramp(600, 16), 0.2);
  const auto cfg = tiny_train(8, 4);
  TempDir full_dir("full"), part_dir("part"), resumed_dir("resumed");

  LanguageModel<double> full(micro_config());
  TrainOptions o1;
  o1.out_dir = full_dir.path;
  const auto r1 = train(full, cfg, data, o1);

  LanguageModel<double> part(micro_config());
  TrainOptions o2;
  o2.out_dir = part_dir.path;
  o2.stop_after = 4;
  train(part, cfg, data, o2);

  LanguageModel<double> resumed(micro_config());
  TrainOptions o3;
  o3.out_dir = resumed_dir.path;
  o3.resume_from = part_dir.path / "checkpoints" / "step_4.ckpt";
  const auto r3 = train(resumed, cfg, data, o3);

  REQUIRE(r1.rows.size() == r3.rows.size());
  for (size_t i = 0; i < r1.rows.size(); ++i) {
    CHECK(r1.rows[i].train_loss == r3.rows[i].train_loss);
    CHECK(r1.rows[i].val_loss == r3.rows[i].val_loss);
  }
  const auto pa = full.parameters(), pb = resumed.parameters();
  for (size_t i = 0; i < pa.size(); ++i) CHECK((pa[i].tensor.values() == pb[i].tensor.values()).all());
}

TEST_CASE("a diverging run aborts with a diagnostic") {
  TempDir dir("nan");
  LanguageModel<double> model(micro_config());
  for (auto& p : model.parameters())
    if (p.name == "blocks.0.mlp.fc_b") p.tensor.mutable_values().setConstant(std::nan(""));
  TrainOptions opts;
  opts.out_dir = dir.path;
  CHECK_THROWS_AS(train(model, tiny_train(2, 1), split_tokens(ramp(200, 16), 0.25), opts), TrainingAborted);
  CHECK(fs::exists(dir.path / "abort_diagnostic.txt"));
}

TEST_CASE("evaluate is side-effect free") {
  LanguageModel<double> model(micro_config());
  const auto data = split_tokens(ramp(400, 16), 0.25);
  const auto vb = validation_batches(data, 2, 2, 4);
  const double a = evaluate(model, vb);
  CHECK(a == evaluate(model, vb));
  CHECK(std::abs(a - std::log(16.0)) < 0.05 * std::log(16.0));
}
