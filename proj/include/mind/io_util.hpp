#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <string_view>

#include "mind/errors.hpp"

namespace mind::io {

// Explicit little-endian serialization, independent of host byte order.
struct ByteWriter {
  std::string buf;

  void u8(std::uint8_t v) { buf.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
};

struct ByteReader {
  std::string_view buf;
  std::size_t pos = 0;
  std::string context;  // named in truncation diagnostics

  explicit ByteReader(std::string_view b, std::string ctx = "stream")
      : buf(b), context(std::move(ctx)) {}

  std::size_t remaining() const { return buf.size() - pos; }
  bool eof() const { return pos == buf.size(); }

  void need(std::size_t n) const {
    if (remaining() < n)
      throw FormatError("truncated " + context + ": needed " +
                        std::to_string(n) + " more bytes at offset " +
                        std::to_string(pos));
  }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(buf[pos++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(buf[pos++]))
           << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(buf[pos++]))
           << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s(buf.substr(pos, n));
    pos += n;
    return s;
  }
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

// FNV-1a over raw bytes; used for dataset provenance hashes.
std::uint64_t fnv1a64(std::string_view bytes);

// Exact round-trip formatting for doubles ("%.17g").
std::string format_double(double v);

}  // namespace mind::io
