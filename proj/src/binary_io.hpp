#pragma once

// Little-endian primitives shared by the trajectory and checkpoint containers.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>

namespace latf::detail {

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &value, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&value, bytes, sizeof(T));
  }
  return value;
}

template <typename T>
void write_le(std::ostream& out, T value) {
  value = to_little_endian(value);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

inline void write_le_doubles(std::ostream& out, std::span<const double> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (double v : values) write_le(out, v);
  }
}

/// Reads with offset tracking so corrupt files report where they broke.
class LittleEndianReader {
 public:
  LittleEndianReader(std::istream& in, std::string what) : in_(in), what_(std::move(what)) {}

  template <typename T>
  T read() {
    T value{};
    read_bytes(reinterpret_cast<char*>(&value), sizeof(T));
    return to_little_endian(value);
  }

  void read_doubles(std::span<double> out) {
    read_bytes(reinterpret_cast<char*>(out.data()), out.size_bytes());
    if constexpr (std::endian::native == std::endian::big) {
      for (double& v : out) v = to_little_endian(v);
    }
  }

  std::string read_string(std::size_t n) {
    std::string s(n, '\0');
    read_bytes(s.data(), n);
    return s;
  }

  std::uint64_t offset() const { return offset_; }

  [[noreturn]] void fail(const std::string& reason) const {
    throw std::runtime_error(what_ + ": " + reason + " at byte offset " + std::to_string(offset_));
  }

 private:
  void read_bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      offset_ += got;
      fail("truncated file (wanted " + std::to_string(n) + " bytes, got " + std::to_string(got) + ")");
    }
    offset_ += n;
  }

  std::istream& in_;
  std::string what_;
  std::uint64_t offset_ = 0;
};

}  // namespace latf::detail
