#pragma once

// Flat "key = value" configuration text. Lines starting with '#' and blank
// lines are ignored. Keys are dotted: model.* and train.*.

#include "sko/model.hpp"
#include "sko/trainer.hpp"

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sko {

using KeyValues = std::map<std::string, std::string>;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

KeyValues parse_key_values(std::string_view text);
KeyValues read_key_values(const std::filesystem::path& path);
/// Sorted "key = value" lines.
std::string format_key_values(const KeyValues& kv);

/// Applies a "key=value" override.
void apply_override(KeyValues& kv, std::string_view assignment);

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Starts from defaults and applies every key; unknown keys and malformed
/// values throw ConfigError. The result is validated.
RunConfig resolve_config(const KeyValues& kv);
/// Every model.* and train.* key, with round-trip number formatting.
KeyValues to_key_values(const RunConfig& config);
KeyValues model_key_values(const ModelConfig& config);
/// Reads model.* keys only; other keys are ignored.
ModelConfig model_from_key_values(const KeyValues& kv);

/// Shortest representation that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view key);

}  // namespace sko
