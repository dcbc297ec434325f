#include "sko/tokenizer.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

using namespace sko;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("sko_tok_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// GPT-2 maps space to U+0120 in its byte-level alphabet.
const char* kSpace = "\xC4\xA0";

void write_bpe(const fs::path& dir) {
  std::ofstream(dir / "encoder.json") << R"({"a": 0, "b": 1, "c": 2, ")" << kSpace
                                      << R"(": 3, "ab": 4, "abc": 5, ")" << kSpace << R"(a": 6})";
  std::ofstream(dir / "merges.txt") << "#version: 0.2\na b\nab c\n" << kSpace << " a\n";
}

}  // namespace

TEST_CASE("byte scheme") {
  const auto tok = Tokenizer::bytes();
  CHECK(tok.vocab_size() == 256);
  CHECK(tok.scheme() == "byte");
  CHECK(tok.encode("abc") == std::vector<std::int32_t>{97, 98, 99});
  const std::string text = "h\xC3\xA9llo\n\t";
  CHECK(tok.decode(tok.encode(text)) == text);
  const std::vector<std::int32_t> bad{256};
  CHECK_THROWS_AS(tok.decode(bad), std::out_of_range);
}

TEST_CASE("GPT-2 pre-tokenisation") {
  const auto parts = gpt2_pretokenize("Hello world's  2024 tests!");
  const std::vector<std::string> expect{"Hello", " world", "'s", " ", " 2024", " tests", "!"};
  CHECK(parts == expect);
}

TEST_CASE("bpe from files") {
  TempDir dir;
  write_bpe(dir.path);
  const auto tok = Tokenizer::from_bpe_files(dir.path / "encoder.json", dir.path / "merges.txt");
  CHECK(tok.scheme() == "bpe");
  CHECK(tok.vocab_size() == 7);
  CHECK(tok.encode("abc") == std::vector<std::int32_t>{5});
  CHECK(tok.encode("abc a") == std::vector<std::int32_t>{5, 6});
  CHECK(tok.encode("ba") == std::vector<std::int32_t>{1, 0});
  CHECK(tok.decode(tok.encode("abc ab cab")) == "abc ab cab");
  CHECK_THROWS(tok.encode("z"));
  const auto via_scheme = Tokenizer::from_scheme("bpe", (dir.path / "encoder.json").string(),
                                                 (dir.path / "merges.txt").string());
  CHECK(via_scheme.encode("abc") == tok.encode("abc"));
}

TEST_CASE("scheme selection errors") {
  CHECK_THROWS_AS(Tokenizer::from_scheme("bpe"), std::invalid_argument);
  CHECK_THROWS_AS(Tokenizer::from_scheme("wordpiece"), std::invalid_argument);
  CHECK_THROWS_AS(Tokenizer::from_bpe_files("/nonexistent/a.json", "/nonexistent/m.txt"), std::runtime_error);
}

TEST_CASE("corpus loading") {
  TempDir dir;
  const auto file = dir.path / "c.txt";
  std::ofstream(file) << "some text\n";
  const auto a = tokenize_corpus(file, Tokenizer::bytes());
  CHECK(a.size() == 10);
  CHECK(a == tokenize_corpus(file, Tokenizer::bytes()));
  std::ofstream(dir.path / "empty.txt");
  CHECK_THROWS_AS(tokenize_corpus(dir.path / "empty.txt", Tokenizer::bytes()), std::runtime_error);
  CHECK_THROWS_AS(tokenize_corpus(dir.path / "missing.txt", Tokenizer::bytes()), std::runtime_error);
}

TEST_CASE("bundled corpus") {
  const auto tokens = tokenize_corpus(fs::path(SKO_SOURCE_DIR) / "data" / "sample.txt", Tokenizer::bytes());
  CHECK(tokens.size() > 90000);
}
