#include "sko/checkpoint.hpp"

#include "sko/serialize.hpp"

#include <cstring>
#include <fstream>

namespace sko {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'O', 'C'};

}  // namespace

template <typename Scalar>
void write_checkpoint(const std::filesystem::path& path, const Checkpoint<Scalar>& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    io::write_bytes(os, kMagic, 4);
    io::write_u32(os, kCheckpointVersion);
    const std::string header = format_key_values(ckpt.header);
    io::write_u64(os, header.size());
    io::write_bytes(os, header.data(), header.size());
    io::write_u64(os, ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
      io::write_u32(os, static_cast<std::uint32_t>(name.size()));
      io::write_bytes(os, name.data(), name.size());
      write_tensor(os, tensor);
    }
    os.flush();
    if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename Scalar>
Checkpoint<Scalar> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("checkpoint: cannot open " + path.string());
  char magic[4];
  io::read_bytes(is, magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic in " + path.string());
  const auto version = io::read_u32(is);
  if (version != kCheckpointVersion)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const auto header_len = io::read_u64(is);
  if (header_len > (std::uint64_t(1) << 32)) throw FormatError("checkpoint: header too large");
  std::string header(header_len, '\0');
  io::read_bytes(is, header.data(), header.size());

  Checkpoint<Scalar> ckpt;
  ckpt.header = parse_key_values(header);
  const auto count = io::read_u64(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = io::read_u32(is);
    std::string name(len, '\0');
    io::read_bytes(is, name.data(), name.size());
    ckpt.tensors.emplace(std::move(name), read_tensor<Scalar>(is));
  }
  return ckpt;
}

template <typename Scalar>
Checkpoint<Scalar> model_checkpoint(const LanguageModel<Scalar>& model) {
  Checkpoint<Scalar> ckpt;
  ckpt.header = model_key_values(model.config());
  for (const auto& p : model.parameters()) ckpt.tensors.emplace(p.name, p.tensor.detach());
  return ckpt;
}

template <typename Scalar>
void load_parameters(LanguageModel<Scalar>& model, const Checkpoint<Scalar>& ckpt) {
  for (auto& p : model.parameters()) {
    auto it = ckpt.tensors.find(p.name);
    if (it == ckpt.tensors.end()) throw FormatError("checkpoint: missing tensor " + p.name);
    if (it->second.shape() != p.tensor.shape())
      throw FormatError("checkpoint: tensor " + p.name + " has shape " + to_string(it->second.shape()) +
                        ", model expects " + to_string(p.tensor.shape()));
    p.tensor.mutable_values() = it->second.values();
  }
}

template <typename Scalar>
LanguageModel<Scalar> load_model(const Checkpoint<Scalar>& ckpt) {
  LanguageModel<Scalar> model(model_from_key_values(ckpt.header));
  load_parameters(model, ckpt);
  return model;
}

#define SKO_INSTANTIATE(S)                                                                   \
  template void write_checkpoint<S>(const std::filesystem::path&, const Checkpoint<S>&);     \
  template Checkpoint<S> read_checkpoint<S>(const std::filesystem::path&);                   \
  template Checkpoint<S> model_checkpoint<S>(const LanguageModel<S>&);                       \
  template void load_parameters<S>(LanguageModel<S>&, const Checkpoint<S>&);                 \
  template LanguageModel<S> load_model<S>(const Checkpoint<S>&);

SKO_INSTANTIATE(float)
SKO_INSTANTIATE(double)

#undef SKO_INSTANTIATE

}  // namespace sko
