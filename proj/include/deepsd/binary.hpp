#pragma once

// Little-endian primitive (de)serialisation shared by the binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deepsd/errors.hpp"

namespace deepsd::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
  }
  out.insert(out.end(), raw, raw + sizeof(T));
}

inline void put_magic(std::vector<std::uint8_t>& out, std::string_view magic) {
  out.insert(out.end(), magic.begin(), magic.end());
}

/// Bounds-checked cursor over a byte buffer; overruns raise kTruncated.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  void expect_magic(std::string_view magic) {
    need(magic.size());
    const std::string_view got(reinterpret_cast<const char*>(bytes_.data() + pos_), magic.size());
    if (got != magic) {
      throw ParseError(ParseError::Kind::kBadMagic,
                       what_ + ": bad magic '" + printable(got) + "', expected '" +
                           std::string(magic) + "'");
    }
    pos_ += magic.size();
  }

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(raw[i], raw[sizeof(T) - 1 - i]);
    }
    T value;
    std::memcpy(&value, raw, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(ParseError::Kind::kTruncated,
                       what_ + ": truncated at byte " + std::to_string(pos_) + " (need " +
                           std::to_string(n) + ", have " + std::to_string(bytes_.size() - pos_) +
                           ")");
    }
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  const std::string& what() const noexcept { return what_; }

 private:
  static std::string printable(std::string_view s) {
    std::string out;
    for (char c : s) out += (c >= 32 && c < 127) ? c : '?';
    return out;
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace deepsd::binary
