#pragma once

// Little-endian scalar I/O for the binary file formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "mft/errors.hpp"

namespace mft::io {

template <class T>
  requires std::is_arithmetic_v<T>
void put(std::ostream& out, T value) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  }
  out.write(buf, sizeof(T));
}

template <class T>
  requires std::is_arithmetic_v<T>
T get(std::istream& in) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw InputError("unexpected end of binary stream");
  }
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= U(buf[i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in, std::size_t max_len = 1 << 20) {
  const auto n = get<std::uint32_t>(in);
  if (n > max_len) throw InputError("string field too long");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), n)) throw InputError("unexpected end of binary stream");
  return s;
}

}  // namespace mft::io
