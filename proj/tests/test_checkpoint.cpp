#include "sko/checkpoint.hpp"
#include "sko/gradcheck.hpp"
#include "sko/serialize.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

using namespace sko;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("sko_ckpt_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("tensor blobs round-trip and convert precision") {
  const auto t = Tensor<double>::from_vector({2, 3}, {1, -2.5, 3e-300, 4, 5, 6});
  std::stringstream ss;
  write_tensor(ss, t);
  const auto bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "SKOT");
  CHECK(bytes.size() == 4 + 4 + 1 + 4 + 2 * 8 + 6 * 8);
  const auto back = read_tensor<double>(ss);
  CHECK(back.shape() == t.shape());
  CHECK((back.values() == t.values()).all());
  std::stringstream s2(bytes);
  const auto f = read_tensor<float>(s2);
  CHECK(f[1] == -2.5f);
}

TEST_CASE("malformed blobs are rejected") {
  std::stringstream bad_magic("XXXX");
  CHECK_THROWS_AS(read_tensor<double>(bad_magic), FormatError);
  std::stringstream ss;
  write_tensor(ss, Tensor<double>::ones({4}));
  const auto truncated = ss.str().substr(0, ss.str().size() - 3);
  std::stringstream tr(truncated);
  CHECK_THROWS_AS(read_tensor<double>(tr), FormatError);
  auto wrong_version = ss.str();
  wrong_version[4] = 9;
  std::stringstream wv(wrong_version);
  CHECK_THROWS_AS(read_tensor<double>(wv), FormatError);
}

TEST_CASE("model checkpoints round-trip") {
  ModelConfig c = micro_config();
  c.seed = 3;
  LanguageModel<double> model(c);
  const auto path = temp_file("m.ckpt");
  save_model(path, model);
  const auto ckpt = read_checkpoint<double>(path);
  CHECK(ckpt.header.at("model.D") == "8");
  const auto restored = load_model(ckpt);
  const auto pa = model.parameters(), pb = restored.parameters();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK((pa[i].tensor.values() == pb[i].tensor.values()).all());
  }
  const auto f = read_checkpoint<float>(path);
  CHECK(f.tensors.size() == ckpt.tensors.size());
  fs::remove_all(path.parent_path());
}

TEST_CASE("parameter loading checks names and shapes") {
  LanguageModel<double> model(micro_config());
  auto ckpt = model_checkpoint(model);
  ckpt.tensors.erase("final_gain");
  CHECK_THROWS_AS(load_parameters(model, ckpt), FormatError);
  ckpt = model_checkpoint(model);
  ckpt.tensors["final_gain"] = Tensor<double>::ones({3});
  CHECK_THROWS_AS(load_parameters(model, ckpt), FormatError);
  ckpt = model_checkpoint(model);
  ckpt.tensors["extra"] = Tensor<double>::ones({1});
  CHECK_NOTHROW(load_parameters(model, ckpt));
}

TEST_CASE("checkpoint file errors") {
  CHECK_THROWS_AS(read_checkpoint<double>("/nonexistent/x.ckpt"), FormatError);
  const auto path = temp_file("bad.ckpt");
  std::ofstream(path) << "SKOC";
  CHECK_THROWS_AS(read_checkpoint<double>(path), FormatError);
  fs::remove_all(path.parent_path());
}
