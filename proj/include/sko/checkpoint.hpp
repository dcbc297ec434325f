#pragma once

// Checkpoint files, little-endian:
//   "SKOC" | u32 version | u64 header length | header text ("key = value" lines)
//   | u64 tensor count | per tensor, sorted by name: u32 name length | name | tensor blob

#include "sko/config.hpp"
#include "sko/model.hpp"
#include "sko/tensor.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace sko {

inline constexpr std::uint32_t kCheckpointVersion = 1;

template <typename Scalar>
struct Checkpoint {
  KeyValues header;
  std::map<std::string, Tensor<Scalar>> tensors;
};

/// Written to a sibling temporary file first, then renamed into place.
template <typename Scalar>
void write_checkpoint(const std::filesystem::path& path, const Checkpoint<Scalar>& ckpt);

/// Throws FormatError on a bad magic, unsupported version or truncated file.
template <typename Scalar>
Checkpoint<Scalar> read_checkpoint(const std::filesystem::path& path);

/// Model configuration in the header, parameters under their own names.
template <typename Scalar>
Checkpoint<Scalar> model_checkpoint(const LanguageModel<Scalar>& model);

/// Copies every parameter tensor of `ckpt` into `model`; missing names or
/// shape mismatches throw FormatError. Extra tensors are ignored.
template <typename Scalar>
void load_parameters(LanguageModel<Scalar>& model, const Checkpoint<Scalar>& ckpt);

/// Rebuilds a model from a checkpoint's header and tensors.
template <typename Scalar>
LanguageModel<Scalar> load_model(const Checkpoint<Scalar>& ckpt);

template <typename Scalar>
void save_model(const std::filesystem::path& path, const LanguageModel<Scalar>& model) {
  write_checkpoint(path, model_checkpoint(model));
}

}  // namespace sko
