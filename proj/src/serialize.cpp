#include "sko/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>

namespace sko {

namespace io {

namespace {

template <typename U>
void write_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  write_bytes(os, buf, sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  read_bytes(is, buf, sizeof(U));
  U v = 0;
  for (size_t i = 0; i < sizeof(U); ++i) v |= U(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_bytes(std::ostream& os, const void* data, size_t n) {
  os.write(static_cast<const char*>(data), std::streamsize(n));
  if (!os) throw FormatError("write failed");
}

void read_bytes(std::istream& is, void* data, size_t n) {
  is.read(static_cast<char*>(data), std::streamsize(n));
  if (!is || size_t(is.gcount()) != n) throw FormatError("unexpected end of stream");
}

void write_u8(std::ostream& os, std::uint8_t v) { write_bytes(os, &v, 1); }
void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
std::uint8_t read_u8(std::istream& is) {
  std::uint8_t v;
  read_bytes(is, &v, 1);
  return v;
}
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }

}  // namespace io

namespace {

template <typename F, typename U>
void write_values(std::ostream& os, const F* data, Index n) {
  for (Index i = 0; i < n; ++i) {
    if constexpr (sizeof(U) == 4)
      io::write_u32(os, std::bit_cast<U>(data[i]));
    else
      io::write_u64(os, std::bit_cast<U>(data[i]));
  }
}

}  // namespace

template <typename Scalar>
void write_tensor(std::ostream& os, const Tensor<Scalar>& t) {
  io::write_bytes(os, "SKOT", 4);
  io::write_u32(os, kTensorFormatVersion);
  io::write_u8(os, static_cast<std::uint8_t>(dtype_of<Scalar>()));
  io::write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.shape()) io::write_u64(os, static_cast<std::uint64_t>(d));
  if constexpr (std::is_same_v<Scalar, float>)
    write_values<float, std::uint32_t>(os, t.values().data(), t.numel());
  else
    write_values<double, std::uint64_t>(os, t.values().data(), t.numel());
}

template <typename Scalar>
Tensor<Scalar> read_tensor(std::istream& is) {
  char magic[4];
  io::read_bytes(is, magic, 4);
  if (std::memcmp(magic, "SKOT", 4) != 0) throw FormatError("bad tensor magic");
  const auto version = io::read_u32(is);
  if (version != kTensorFormatVersion)
    throw FormatError("unsupported tensor format version " + std::to_string(version));
  const auto tag = io::read_u8(is);
  if (tag > 1) throw FormatError("unknown dtype tag " + std::to_string(tag));
  const auto rank = io::read_u32(is);
  if (rank > 16) throw FormatError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = static_cast<Index>(io::read_u64(is));
  const Index n = numel(shape);
  Buffer<Scalar> values(n);
  for (Index i = 0; i < n; ++i) {
    if (tag == 0)
      values[i] = static_cast<Scalar>(std::bit_cast<float>(io::read_u32(is)));
    else
      values[i] = static_cast<Scalar>(std::bit_cast<double>(io::read_u64(is)));
  }
  return Tensor<Scalar>::from_buffer(std::move(shape), std::move(values));
}

template void write_tensor(std::ostream&, const Tensor<float>&);
template void write_tensor(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor(std::istream&);
template Tensor<double> read_tensor(std::istream&);

}  // namespace sko
