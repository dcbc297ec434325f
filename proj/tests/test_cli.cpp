#include "sko/config.hpp"
#include "sko/trainer.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

using namespace sko;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::path("cli_test_runs");

struct Run {
  int code;
  std::string output;
};

Run run(const std::string& binary, const std::string& args) {
  fs::create_directories(kRoot);
  const fs::path log = kRoot / "last_output.txt";
  const std::string cmd = "\"" + binary + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

Run cli(const std::string& args) { return run(SKO_CLI, args); }

std::string read_file(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string out(const std::string& name) {
  const auto p = kRoot / name;
  fs::remove_all(p);
  return p.string();
}

const std::string kDemo = std::string("-c ") + SKO_SOURCE_DIR + "/configs/demo.cfg --set train.dataset=" +
                          SKO_SOURCE_DIR + "/data/sample.txt ";
// Shrunk so the whole CLI suite stays fast.
const std::string kSmall = kDemo +
                           "--set model.D=16 --set model.N=16 --set model.H=2 --set model.L=1 "
                           "--set model.degrees=2,3 --set train.batch_size=2 --set train.eval_batches=2 "
                           "--set train.precision=f64 --set train.total_steps=6 --set train.eval_interval=2 ";

std::vector<MetricsRow> without_time(std::vector<MetricsRow> rows) {
  for (auto& r : rows) r.wall_time = 0;
  return rows;
}

bool same(const std::vector<MetricsRow>& a, const std::vector<MetricsRow>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i].step != b[i].step || a[i].train_loss != b[i].train_loss || a[i].val_loss != b[i].val_loss ||
        a[i].val_ppl != b[i].val_ppl || a[i].lr != b[i].lr)
      return false;
  return true;
}

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(cli("--help").code == 0);
  CHECK(cli("").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("train --no-such-flag").code == 2);
}

TEST_CASE("selftest passes and lists its suites") {
  const auto r = cli("selftest");
  CHECK(r.code == 0);
  const auto list = cli("selftest --list");
  CHECK(std::count(list.output.begin(), list.output.end(), '\n') >= 5);
  CHECK(cli("selftest --suite nonexistent").code == 2);
}

TEST_CASE("fault-injected recurrence fails the polynomial suite") {
  const auto r = run(SKO_MUTANT_CLI, "selftest --suite ultraspherical");
  CHECK(r.code == 1);
  CHECK(r.output.find("[FAIL] ultraspherical") != std::string::npos);
}

TEST_CASE("train writes one row per evaluation and is deterministic") {
  const auto a = out("train_a"), b = out("train_b");
  REQUIRE(cli("train " + kSmall + "-o " + a).code == 0);
  REQUIRE(cli("train " + kSmall + "-o " + b).code == 0);
  const auto ra = read_metrics_csv(fs::path(a) / "metrics.csv");
  CHECK(ra.size() == 3);
  CHECK(same(without_time(ra), without_time(read_metrics_csv(fs::path(b) / "metrics.csv"))));
  CHECK(fs::exists(fs::path(a) / "final.ckpt"));

  SUBCASE("resolved config reproduces the run") {
    const auto c = out("train_c");
    REQUIRE(cli("train -c " + a + "/resolved.cfg -o " + c).code == 0);
    CHECK(same(without_time(ra), without_time(read_metrics_csv(fs::path(c) / "metrics.csv"))));
    CHECK(read_file(fs::path(a) / "resolved.cfg") == read_file(fs::path(c) / "resolved.cfg"));
  }
  SUBCASE("resume from a checkpoint") {
    const auto c = out("train_resume");
    REQUIRE(cli("train " + kSmall + "-o " + c + " --resume " + a + "/checkpoints/step_2.ckpt").code == 0);
    CHECK(same(without_time(ra), without_time(read_metrics_csv(fs::path(c) / "metrics.csv"))));
  }
  SUBCASE("eval and generate read the checkpoint") {
    const auto e = out("eval");
    REQUIRE(cli("eval --checkpoint " + a + "/final.ckpt -o " + e).code == 0);
    const auto csv = read_file(fs::path(e) / "eval.csv");
    CHECK(csv.rfind("checkpoint,val_loss,val_ppl\n", 0) == 0);
    const auto g = out("gen");
    REQUIRE(cli("generate --checkpoint " + a + "/final.ckpt --prompt Hello --steps 5 -o " + g).code == 0);
    const auto text = read_file(fs::path(g) / "generation.txt");
    CHECK(text.rfind("Hello", 0) == 0);
    CHECK(text.size() == 10);
    const auto g2 = out("gen2");
    REQUIRE(cli("generate --checkpoint " + a + "/final.ckpt --prompt Hello --steps 5 -o " + g2).code == 0);
    CHECK(read_file(fs::path(g2) / "generation.txt") == text);
  }
  SUBCASE("compare merges two metrics files") {
    const auto c = out("compare");
    REQUIRE(cli("compare --baseline " + a + "/metrics.csv --sko " + b + "/metrics.csv -o " + c).code == 0);
    const auto table = read_file(fs::path(c) / "table1.csv");
    CHECK(table.rfind("step,baseline_val_loss,baseline_val_ppl,sko_val_loss,sko_val_ppl,delta_loss\n", 0) == 0);
    CHECK(std::count(table.begin(), table.end(), '\n') == 4);
    CHECK(table.find(",0.000000\n") != std::string::npos);
  }
}

TEST_CASE("matched mechanisms differ in one resolved key") {
  const auto a = out("mech_sko"), b = out("mech_base");
  REQUIRE(cli("train " + kSmall + "--set train.total_steps=0 -o " + a).code == 0);
  REQUIRE(cli("train " + kSmall + "--set train.total_steps=0 --set model.mechanism=baseline -o " + b).code == 0);
  const auto ka = read_key_values(fs::path(a) / "resolved.cfg");
  const auto kb = read_key_values(fs::path(b) / "resolved.cfg");
  int diffs = 0;
  for (const auto& [k, v] : ka)
    if (kb.at(k) != v) {
      ++diffs;
      CHECK(k == "model.mechanism");
    }
  CHECK(diffs == 1);
  CHECK(read_file(fs::path(a) / "metrics.csv") == std::string(kMetricsHeader) + "\n");
}

TEST_CASE("exit codes for configuration and numeric failures") {
  CHECK(cli("train " + kSmall + "--set train.bogus=1 -o " + out("bad_key")).code == 2);
  CHECK(cli("train " + kSmall + "--set model.H=3 -o " + out("bad_heads")).code == 2);
  CHECK(cli("train " + kSmall + "--set train.dataset=/nonexistent.txt -o " + out("no_corpus")).code == 2);
  CHECK(cli("train " + kSmall + "--set model.vocab_size=16 -o " + out("small_vocab")).code == 2);
  CHECK(cli("train -c /nonexistent.cfg -o " + out("no_cfg")).code == 2);
  const auto nan_dir = out("nan");
  const auto r = cli("train " + kSmall + "--set model.init_std=1e300 --set train.precision=f32 -o " + nan_dir);
  CHECK(r.code == 3);
  CHECK(fs::exists(fs::path(nan_dir) / "abort_diagnostic.txt"));
}

TEST_CASE("kernel-dump") {
  const auto d = out("dump");
  REQUIRE(cli("kernel-dump --set model.degrees=0,2,3,4 --set model.kernel_init=0.5 --head 0 --grid 9 -o " + d).code == 0);
  std::ifstream is(fs::path(d) / "kernel_head0.csv");
  std::string line;
  std::getline(is, line);
  CHECK(line == "x,phi");
  int rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    CHECK(std::stod(line.substr(line.find(',') + 1)) == doctest::Approx(0.5));
  }
  CHECK(rows == 9);
  CHECK(cli("kernel-dump --head 7 -o " + out("dump_bad")).code == 2);
}

TEST_CASE("gradcheck and bench") {
  const auto g = out("grad");
  REQUIRE(cli("gradcheck --scale layer -o " + g).code == 0);
  CHECK(read_file(fs::path(g) / "gradcheck.csv").rfind("parameter,", 0) == 0);
  CHECK(cli("gradcheck --scale galaxy -o " + out("grad_bad")).code == 2);
  const auto b = out("bench");
  REQUIRE(cli("bench --values 8,16 --mechanism sko --set bench.N=8 --set bench.D=8 --set bench.min_sample_seconds=0.001 "
              "--set bench.memory=false -o " + b).code == 0);
  CHECK(fs::exists(fs::path(b) / "bench_sko_N.csv"));
  CHECK(cli("bench --values 8 -o " + out("bench_bad")).code == 2);
}
