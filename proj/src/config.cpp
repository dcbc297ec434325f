#include "sko/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace sko {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::int64_t parse_int(std::string_view text, std::string_view key) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config: " + std::string(key) + " expects an integer, got '" +
                      std::string(text) + "'");
  return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view key) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config: " + std::string(key) + " expects a non-negative integer, got '" +
                      std::string(text) + "'");
  return v;
}

bool parse_bool(std::string_view text, std::string_view key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("config: " + std::string(key) + " expects true or false, got '" +
                    std::string(text) + "'");
}

std::vector<double> parse_list(std::string_view text, std::string_view key) {
  std::vector<double> out;
  while (!text.empty()) {
    const auto comma = text.find(',');
    out.push_back(parse_double(trim(text.substr(0, comma)), key));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  if (out.empty()) throw ConfigError("config: " + std::string(key) + " expects a list");
  return out;
}

std::string format_list(const std::vector<double>& v) {
  std::string s;
  for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SKO_INT_FIELD(key, member)                                                           \
  {                                                                                          \
    key, Field {                                                                             \
      [](RunConfig& c, std::string_view v) { c.member = parse_int(v, key); },                \
          [](const RunConfig& c) { return std::to_string(c.member); }                        \
    }                                                                                        \
  }
#define SKO_UINT_FIELD(key, member)                                                          \
  {                                                                                          \
    key, Field {                                                                             \
      [](RunConfig& c, std::string_view v) { c.member = parse_uint(v, key); },               \
          [](const RunConfig& c) { return std::to_string(c.member); }                        \
    }                                                                                        \
  }
#define SKO_REAL_FIELD(key, member)                                                          \
  {                                                                                          \
    key, Field {                                                                             \
      [](RunConfig& c, std::string_view v) { c.member = parse_double(v, key); },             \
          [](const RunConfig& c) { return format_double(c.member); }                         \
    }                                                                                        \
  }
#define SKO_BOOL_FIELD(key, member)                                                          \
  {                                                                                          \
    key, Field {                                                                             \
      [](RunConfig& c, std::string_view v) { c.member = parse_bool(v, key); },               \
          [](const RunConfig& c) { return format_bool(c.member); }                           \
    }                                                                                        \
  }
#define SKO_TEXT_FIELD(key, member)                                                          \
  {                                                                                          \
    key, Field {                                                                             \
      [](RunConfig& c, std::string_view v) { c.member = std::string(v); },                   \
          [](const RunConfig& c) { return c.member; }                                        \
    }                                                                                        \
  }

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = {
      SKO_INT_FIELD("model.vocab_size", model.vocab_size),
      SKO_INT_FIELD("model.D", model.d_model),
      SKO_INT_FIELD("model.N", model.seq_len),
      SKO_INT_FIELD("model.H", model.heads),
      SKO_INT_FIELD("model.L", model.layers),
      {"model.q", Field{[](RunConfig& c, std::string_view v) {
                          c.model.q = static_cast<int>(parse_int(v, "model.q"));
                        },
                        [](const RunConfig& c) { return std::to_string(c.model.q); }}},
      {"model.degrees", Field{[](RunConfig& c, std::string_view v) {
                                c.model.degrees = parse_list(v, "model.degrees");
                              },
                              [](const RunConfig& c) { return format_list(c.model.degrees); }}},
      {"model.mechanism", Field{[](RunConfig& c, std::string_view v) {
                                  try {
                                    c.model.mechanism = parse_mechanism(v);
                                  } catch (const std::invalid_argument& e) {
                                    throw ConfigError(std::string("config: ") + e.what());
                                  }
                                },
                                [](const RunConfig& c) { return to_string(c.model.mechanism); }}},
      SKO_BOOL_FIELD("model.tie_embeddings", model.tie_embeddings),
      SKO_INT_FIELD("model.mlp_ratio", model.mlp_ratio),
      SKO_REAL_FIELD("model.rms_eps", model.rms_eps),
      SKO_UINT_FIELD("model.seed", model.seed),
      SKO_BOOL_FIELD("model.learn_degrees", model.learn_degrees),
      SKO_REAL_FIELD("model.kernel_init", model.kernel_init),
      SKO_REAL_FIELD("model.init_std", model.init_std),
      SKO_REAL_FIELD("train.lr_base", train.lr_base),
      SKO_REAL_FIELD("train.lr_min", train.lr_min),
      SKO_REAL_FIELD("train.weight_decay", train.weight_decay),
      {"train.betas", Field{[](RunConfig& c, std::string_view v) {
                              const auto b = parse_list(v, "train.betas");
                              if (b.size() != 2) throw ConfigError("config: train.betas expects two values");
                              c.train.beta1 = b[0];
                              c.train.beta2 = b[1];
                            },
                            [](const RunConfig& c) {
                              return format_list({c.train.beta1, c.train.beta2});
                            }}},
      SKO_REAL_FIELD("train.adam_eps", train.adam_eps),
      SKO_INT_FIELD("train.total_steps", train.total_steps),
      SKO_INT_FIELD("train.eval_interval", train.eval_interval),
      SKO_INT_FIELD("train.batch_size", train.batch_size),
      SKO_REAL_FIELD("train.grad_clip", train.grad_clip),
      SKO_UINT_FIELD("train.seed", train.seed),
      SKO_TEXT_FIELD("train.dataset", train.dataset),
      SKO_REAL_FIELD("train.val_fraction", train.val_fraction),
      SKO_TEXT_FIELD("train.tokenizer", train.tokenizer),
      SKO_TEXT_FIELD("train.vocab_file", train.vocab_file),
      SKO_TEXT_FIELD("train.merges_file", train.merges_file),
      SKO_INT_FIELD("train.eval_batches", train.eval_batches),
      {"train.precision", Field{[](RunConfig& c, std::string_view v) {
                                  try {
                                    c.train.precision = parse_precision(v);
                                  } catch (const std::invalid_argument& e) {
                                    throw ConfigError(std::string("config: ") + e.what());
                                  }
                                },
                                [](const RunConfig& c) { return to_string(c.train.precision); }}},
  };
  return table;
}

#undef SKO_INT_FIELD
#undef SKO_UINT_FIELD
#undef SKO_REAL_FIELD
#undef SKO_BOOL_FIELD
#undef SKO_TEXT_FIELD

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text, std::string_view key) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    throw ConfigError("config: " + std::string(key) + " expects a number, got '" +
                      std::string(text) + "'");
  return v;
}

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
    const auto key = trim(body.substr(0, eq));
    if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + " has an empty key");
    kv[std::string(key)] = std::string(trim(body.substr(eq + 1)));
  }
  return kv;
}

KeyValues read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_key_values(const KeyValues& kv) {
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

void apply_override(KeyValues& kv, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("config: override '" + std::string(assignment) + "' is not key=value");
  const auto key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("config: override has an empty key");
  kv[std::string(key)] = std::string(trim(assignment.substr(eq + 1)));
}

RunConfig resolve_config(const KeyValues& kv) {
  RunConfig c;
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(c, value);
  }
  try {
    c.model.validate();
    c.train.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

KeyValues to_key_values(const RunConfig& config) {
  KeyValues kv;
  for (const auto& [key, field] : fields()) kv[key] = field.get(config);
  return kv;
}

KeyValues model_key_values(const ModelConfig& config) {
  RunConfig c;
  c.model = config;
  KeyValues kv;
  for (const auto& [key, field] : fields())
    if (key.starts_with("model.")) kv[key] = field.get(c);
  return kv;
}

ModelConfig model_from_key_values(const KeyValues& kv) {
  RunConfig c;
  const auto& table = fields();
  for (const auto& [key, value] : kv) {
    if (!key.starts_with("model.")) continue;
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(c, value);
  }
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c.model;
}

}  // namespace sko
