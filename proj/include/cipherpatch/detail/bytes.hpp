#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "cipherpatch/errors.hpp"

// Little-endian stream helpers shared by the binary file formats. Readers
// track a byte offset so format errors can say where parsing stopped.
namespace cipherpatch::detail {

inline void write_u16_le(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                        static_cast<unsigned char>((v >> 8) & 0xFF),
                        static_cast<unsigned char>((v >> 16) & 0xFF),
                        static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint16_t read_u16_le(std::istream& in, std::size_t& offset) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) {
    throw FormatError("truncated file at offset " + std::to_string(offset));
  }
  offset += 2;
  return static_cast<std::uint16_t>(static_cast<std::uint16_t>(b[0]) |
                                    (static_cast<std::uint16_t>(b[1]) << 8));
}

inline std::uint32_t read_u32_le(std::istream& in, std::size_t& offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) {
    throw FormatError("truncated file at offset " + std::to_string(offset));
  }
  offset += 4;
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_f32_le(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  write_u32_le(out, bits);
}

inline float read_f32_le(std::istream& in, std::size_t& offset) {
  const std::uint32_t bits = read_u32_le(in, offset);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace cipherpatch::detail
