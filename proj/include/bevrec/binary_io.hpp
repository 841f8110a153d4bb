#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bevrec::io {

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

/// Appends little-endian fields to a growing buffer.
class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f64(double v);

  std::span<const std::byte> bytes() const { return buffer_; }

 private:
  void put_le(std::uint64_t v, int width);
  std::vector<std::byte> buffer_;
};

/// Reads little-endian fields; any read past the end throws FormatError naming
/// `what`.
class ByteReader {
 public:
  ByteReader(std::span<const std::byte> bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  /// Throws FormatError unless the next bytes equal `tag`.
  void expect_magic(std::string_view tag);
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();

  std::size_t remaining() const { return bytes_.size() - pos_; }
  /// Throws FormatError if unread bytes are left.
  void expect_end() const;

 private:
  std::uint64_t get_le(int width);
  std::span<const std::byte> bytes_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace bevrec::io
