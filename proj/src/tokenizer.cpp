#include "sko/tokenizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace sko {

namespace {

// GPT-2's reversible byte -> printable code point table.
std::vector<char32_t> byte_to_codepoint() {
  std::vector<char32_t> table(256, 0);
  std::vector<bool> direct(256, false);
  for (int b = '!'; b <= '~'; ++b) direct[size_t(b)] = true;
  for (int b = 0xA1; b <= 0xAC; ++b) direct[size_t(b)] = true;
  for (int b = 0xAE; b <= 0xFF; ++b) direct[size_t(b)] = true;
  char32_t next = 256;
  for (int b = 0; b < 256; ++b) table[size_t(b)] = direct[size_t(b)] ? char32_t(b) : next++;
  return table;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(char(cp));
  } else if (cp < 0x800) {
    out.push_back(char(0xC0 | (cp >> 6)));
    out.push_back(char(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(char(0xE0 | (cp >> 12)));
    out.push_back(char(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(char(0x80 | (cp & 0x3F)));
  }
}

// Splits a UTF-8 string into its code point substrings.
std::vector<std::string> utf8_symbols(std::string_view s) {
  std::vector<std::string> out;
  for (size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    const size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xE ? 3 : 4;
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

bool is_space(unsigned char c) { return std::isspace(c) != 0; }
bool is_digit(unsigned char c) { return std::isdigit(c) != 0; }
// Non-ASCII bytes are treated as letters.
bool is_letter(unsigned char c) { return std::isalpha(c) != 0 || c >= 0x80; }

}  // namespace

std::vector<std::string> gpt2_pretokenize(std::string_view text) {
  std::vector<std::string> out;
  const size_t n = text.size();
  auto at = [&](size_t i) { return static_cast<unsigned char>(text[i]); };
  size_t i = 0;
  while (i < n) {
    if (text[i] == '\'') {
      bool matched = false;
      for (std::string_view suffix : {"re", "ve", "ll", "s", "t", "m", "d"}) {
        if (text.substr(i + 1, suffix.size()) == suffix) {
          out.emplace_back(text.substr(i, suffix.size() + 1));
          i += suffix.size() + 1;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    size_t start = i;
    size_t j = i;
    if (at(j) == ' ' && j + 1 < n && !is_space(at(j + 1))) ++j;
    if (j < n && is_letter(at(j))) {
      while (j < n && is_letter(at(j))) ++j;
    } else if (j < n && is_digit(at(j))) {
      while (j < n && is_digit(at(j))) ++j;
    } else if (j < n && !is_space(at(j))) {
      while (j < n && !is_space(at(j)) && !is_letter(at(j)) && !is_digit(at(j))) ++j;
    } else {
      // Whitespace run; leave its last character to prefix a following word.
      j = i;
      while (j < n && is_space(at(j))) ++j;
      if (j < n && j - i > 1) --j;
    }
    out.emplace_back(text.substr(start, j - start));
    i = j;
  }
  return out;
}

struct Tokenizer::Bpe {
  std::unordered_map<std::string, std::int32_t> encoder;
  std::vector<std::string> decoder;
  std::map<std::pair<std::string, std::string>, int> ranks;
  std::vector<std::string> byte_symbol;               // byte -> UTF-8 of its code point
  std::unordered_map<std::string, unsigned char> symbol_byte;

  std::vector<std::string> merge(std::vector<std::string> word) const {
    while (word.size() > 1) {
      int best = std::numeric_limits<int>::max();
      size_t at = 0;
      for (size_t i = 0; i + 1 < word.size(); ++i) {
        auto it = ranks.find({word[i], word[i + 1]});
        if (it != ranks.end() && it->second < best) {
          best = it->second;
          at = i;
        }
      }
      if (best == std::numeric_limits<int>::max()) break;
      const std::string a = word[at], b = word[at + 1];
      std::vector<std::string> merged;
      for (size_t i = 0; i < word.size();) {
        if (i + 1 < word.size() && word[i] == a && word[i + 1] == b) {
          merged.push_back(a + b);
          i += 2;
        } else {
          merged.push_back(word[i++]);
        }
      }
      word = std::move(merged);
    }
    return word;
  }
};

Tokenizer Tokenizer::bytes() { return Tokenizer{}; }

Tokenizer Tokenizer::from_bpe_files(const std::filesystem::path& vocab_json,
                                    const std::filesystem::path& merges_txt) {
  std::ifstream vf(vocab_json);
  if (!vf) throw std::runtime_error("tokenizer: cannot open vocabulary " + vocab_json.string());
  std::ifstream mf(merges_txt);
  if (!mf) throw std::runtime_error("tokenizer: cannot open merges " + merges_txt.string());

  auto bpe = std::make_shared<Bpe>();
  const auto vocab = nlohmann::json::parse(vf);
  for (auto it = vocab.begin(); it != vocab.end(); ++it) {
    const auto id = it.value().get<std::int32_t>();
    if (id < 0) throw std::runtime_error("tokenizer: negative token id in vocabulary");
    bpe->encoder[it.key()] = id;
    if (size_t(id) >= bpe->decoder.size()) bpe->decoder.resize(size_t(id) + 1);
    bpe->decoder[size_t(id)] = it.key();
  }
  std::string line;
  int rank = 0;
  while (std::getline(mf, line)) {
    if (line.empty() || line.starts_with("#version")) continue;
    std::istringstream ls(line);
    std::string a, b;
    if (!(ls >> a >> b)) throw std::runtime_error("tokenizer: malformed merge line '" + line + "'");
    bpe->ranks.emplace(std::make_pair(a, b), rank++);
  }
  const auto table = byte_to_codepoint();
  bpe->byte_symbol.resize(256);
  for (int b = 0; b < 256; ++b) {
    std::string s;
    append_utf8(s, table[size_t(b)]);
    bpe->byte_symbol[size_t(b)] = s;
    bpe->symbol_byte[s] = static_cast<unsigned char>(b);
  }
  Tokenizer t;
  t.scheme_ = "bpe";
  t.bpe_ = std::move(bpe);
  return t;
}

Tokenizer Tokenizer::from_scheme(std::string_view scheme, const std::string& vocab_file,
                                 const std::string& merges_file) {
  if (scheme == "byte") return bytes();
  if (scheme == "bpe") {
    if (vocab_file.empty() || merges_file.empty())
      throw std::invalid_argument("tokenizer: bpe needs both a vocabulary and a merges file");
    return from_bpe_files(vocab_file, merges_file);
  }
  throw std::invalid_argument("tokenizer: unknown scheme '" + std::string(scheme) + "'");
}

std::vector<std::int32_t> Tokenizer::encode(std::string_view text) const {
  std::vector<std::int32_t> ids;
  if (!bpe_) {
    ids.reserve(text.size());
    for (char c : text) ids.push_back(static_cast<unsigned char>(c));
    return ids;
  }
  for (const auto& piece : gpt2_pretokenize(text)) {
    std::vector<std::string> word;
    for (char c : piece) word.push_back(bpe_->byte_symbol[static_cast<unsigned char>(c)]);
    for (const auto& sym : bpe_->merge(std::move(word))) {
      auto it = bpe_->encoder.find(sym);
      if (it == bpe_->encoder.end())
        throw std::runtime_error("tokenizer: symbol '" + sym + "' missing from vocabulary");
      ids.push_back(it->second);
    }
  }
  return ids;
}

std::string Tokenizer::decode(std::span<const std::int32_t> ids) const {
  std::string out;
  if (!bpe_) {
    for (auto id : ids) {
      if (id < 0 || id > 255) throw std::out_of_range("tokenizer: byte id out of range");
      out.push_back(static_cast<char>(id));
    }
    return out;
  }
  for (auto id : ids) {
    if (id < 0 || size_t(id) >= bpe_->decoder.size())
      throw std::out_of_range("tokenizer: token id out of range");
    for (const auto& sym : utf8_symbols(bpe_->decoder[size_t(id)])) {
      auto it = bpe_->symbol_byte.find(sym);
      if (it == bpe_->symbol_byte.end()) throw std::runtime_error("tokenizer: undecodable symbol");
      out.push_back(static_cast<char>(it->second));
    }
  }
  return out;
}

Index Tokenizer::vocab_size() const { return bpe_ ? Index(bpe_->decoder.size()) : 256; }

std::vector<std::int32_t> tokenize_corpus(const std::filesystem::path& path, const Tokenizer& tokenizer) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("corpus not readable: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  if (text.empty()) throw std::runtime_error("corpus is empty: " + path.string());
  return tokenizer.encode(text);
}

}  // namespace sko
