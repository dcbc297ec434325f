#pragma once

// Binary tensor blobs, little-endian:
//   "SKOT" | u32 version | u8 dtype (0 = f32, 1 = f64) | u32 rank | u64 dims[rank] | raw data

#include "sko/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>

namespace sko {

inline constexpr std::uint32_t kTensorFormatVersion = 1;

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename Scalar>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

template <typename Scalar>
void write_tensor(std::ostream& os, const Tensor<Scalar>& t);

/// Reads one blob; f32/f64 payloads are converted to Scalar.
template <typename Scalar>
Tensor<Scalar> read_tensor(std::istream& is);

namespace io {

void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
void write_bytes(std::ostream& os, const void* data, size_t n);
void read_bytes(std::istream& is, void* data, size_t n);

}  // namespace io

}  // namespace sko
