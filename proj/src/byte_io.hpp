#pragma once

// Little-endian helpers shared by the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "xlid/errors.hpp"

namespace xlid::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_f32(std::ostream& out, float v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline void write_bytes(std::ostream& out, const std::string& s) {
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T read_pod(std::istream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw Error(ErrorCode::MalformedHeader, "truncated " + what);
  return v;
}

inline std::string read_string(std::istream& in, std::size_t n, const std::string& what) {
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw Error(ErrorCode::MalformedHeader, "truncated " + what);
  return s;
}

}  // namespace xlid::detail
