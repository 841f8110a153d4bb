#include "bevrec/binary_io.hpp"

#include <bit>
#include <fstream>

#include "bevrec/errors.hpp"

namespace bevrec::io {

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open " + path.string());
  const auto size = static_cast<std::size_t>(in.tellg());
  std::vector<std::byte> bytes(size);
  in.seekg(0);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size)))
    throw IoError("cannot read " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("cannot write " + path.string());
}

void ByteWriter::magic(std::string_view tag) {
  for (char c : tag) buffer_.push_back(static_cast<std::byte>(c));
}

void ByteWriter::put_le(std::uint64_t v, int width) {
  for (int i = 0; i < width; ++i) buffer_.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xFFu));
}

void ByteWriter::u16(std::uint16_t v) { put_le(v, 2); }
void ByteWriter::u32(std::uint32_t v) { put_le(v, 4); }
void ByteWriter::u64(std::uint64_t v) { put_le(v, 8); }
void ByteWriter::f64(double v) { put_le(std::bit_cast<std::uint64_t>(v), 8); }

void ByteReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size()) throw FormatError(what_ + ": truncated header");
  for (std::size_t i = 0; i < tag.size(); ++i) {
    if (bytes_[pos_ + i] != static_cast<std::byte>(tag[i]))
      throw FormatError(what_ + ": bad magic, expected \"" + std::string(tag) + "\"");
  }
  pos_ += tag.size();
}

std::uint64_t ByteReader::get_le(int width) {
  if (remaining() < static_cast<std::size_t>(width)) throw FormatError(what_ + ": truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i)
    v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(bytes_[pos_ + i])) << (8 * i);
  pos_ += static_cast<std::size_t>(width);
  return v;
}

std::uint16_t ByteReader::u16() { return static_cast<std::uint16_t>(get_le(2)); }
std::uint32_t ByteReader::u32() { return static_cast<std::uint32_t>(get_le(4)); }
std::uint64_t ByteReader::u64() { return get_le(8); }
double ByteReader::f64() { return std::bit_cast<double>(get_le(8)); }

void ByteReader::expect_end() const {
  if (remaining() != 0) throw FormatError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
}

}  // namespace bevrec::io
