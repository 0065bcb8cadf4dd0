#pragma once

// Little-endian array I/O shared by the file formats.

#include <algorithm>
#include <array>
#include <bit>
#include <cstddef>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "fwigan/errors.hpp"

namespace fwigan::detail {

template <class T>
void write_le(std::ostream& out, std::span<const T> values) {
  static_assert(std::is_arithmetic_v<T>);
  std::vector<char> bytes(values.size() * sizeof(T));
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::array<char, sizeof(T)> b{};
    std::memcpy(b.data(), &values[i], sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::ranges::reverse(b);
    std::memcpy(bytes.data() + i * sizeof(T), b.data(), sizeof(T));
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInput("write failed");
}

template <class T>
std::vector<T> decode_le(std::span<const char> bytes) {
  std::vector<T> out(bytes.size() / sizeof(T));
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::array<char, sizeof(T)> b{};
    std::memcpy(b.data(), bytes.data() + i * sizeof(T), sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::ranges::reverse(b);
    std::memcpy(&out[i], b.data(), sizeof(T));
  }
  return out;
}

inline std::vector<char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<char> bytes(size);
  in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (!in) throw InvalidInput("cannot read " + path.string());
  return bytes;
}

inline std::ofstream open_for_write(const std::filesystem::path& path, bool binary) {
  std::ofstream out(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path.string());
  return out;
}

}  // namespace fwigan::detail
