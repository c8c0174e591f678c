#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "trajdiff/core.hpp"

namespace trajdiff::io {

// Container layout shared by checkpoints and datasets:
//   8-byte magic | u32 version | payload ... | u32 crc32(magic..payload)
// Scalars are written in host byte order (little-endian on supported hosts).

inline std::uint32_t crc32_of(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

class BinaryWriter {
 public:
  BinaryWriter(std::string_view magic, std::uint32_t version) {
    if (magic.size() != 8) throw ContractError("container magic must be 8 bytes");
    buf_.append(magic);
    put(version);
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }

  template <typename T>
  void put_span(std::span<const T> v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }

  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }

  /// Appends the checksum and writes the container to `path`.
  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open '" + path + "' for writing");
    const std::uint32_t crc = crc32_of(buf_);
    out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
    if (!out) throw FormatError("write failed for '" + path + "'");
  }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  BinaryReader(const std::string& path, std::string_view magic, std::uint32_t version) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open '" + path + "'");
    buf_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    if (buf_.size() < magic.size() + 2 * sizeof(std::uint32_t)) {
      throw FormatError("'" + path + "' is truncated (checksum missing)");
    }
    std::uint32_t stored = 0;
    std::memcpy(&stored, buf_.data() + buf_.size() - sizeof(stored), sizeof(stored));
    buf_.resize(buf_.size() - sizeof(stored));
    if (crc32_of(buf_) != stored) throw FormatError("checksum mismatch in '" + path + "'");
    if (std::string_view(buf_).substr(0, magic.size()) != magic) {
      throw FormatError("'" + path + "' is not a " + std::string(magic) + " container");
    }
    pos_ = magic.size();
    const auto v = get<std::uint32_t>();
    if (v != version) {
      throw FormatError("'" + path + "' has format version " + std::to_string(v) + ", expected " +
                        std::to_string(version));
    }
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  template <typename T>
  void get_span(std::span<T> out) {
    need(out.size_bytes());
    std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  [[nodiscard]] bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("container payload ends early");
  }

  std::string buf_;
  std::size_t pos_ = 0;
};

}  // namespace trajdiff::io
