#pragma once

// Byte-level tokenisation, and GPT-2 style byte-pair encoding loaded from an
// (encoder.json, merges.txt) file pair.

#include "sko/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sko {

class Tokenizer {
 public:
  /// Identity over bytes; vocabulary of 256.
  static Tokenizer bytes();
  static Tokenizer from_bpe_files(const std::filesystem::path& vocab_json,
                                  const std::filesystem::path& merges_txt);
  /// "byte" or "bpe"; the BPE variant needs both file paths.
  static Tokenizer from_scheme(std::string_view scheme, const std::string& vocab_file = {},
                               const std::string& merges_file = {});

  std::vector<std::int32_t> encode(std::string_view text) const;
  std::string decode(std::span<const std::int32_t> ids) const;
  Index vocab_size() const;
  const std::string& scheme() const { return scheme_; }

 private:
  struct Bpe;
  std::string scheme_ = "byte";
  std::shared_ptr<const Bpe> bpe_;
};

/// Splits text into the pre-tokens a GPT-2 encoder merges independently.
std::vector<std::string> gpt2_pretokenize(std::string_view text);

/// Reads and encodes a whole file; throws std::runtime_error if it is missing or empty.
std::vector<std::int32_t> tokenize_corpus(const std::filesystem::path& path, const Tokenizer& tokenizer);

}  // namespace sko
