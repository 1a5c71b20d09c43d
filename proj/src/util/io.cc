// SPDX-License-Identifier: Apache-2.0

#include "util/io.h"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "util/common.h"

namespace twopass {

struct BinWriter::Impl {
  std::ofstream os;
  std::string path;
};

BinWriter::BinWriter(const std::string& path) : impl_(new Impl) {
  impl_->path = path;
  impl_->os.open(path, std::ios::binary | std::ios::trunc);
  check_config(impl_->os.good(), "cannot open for writing: " + path);
}

BinWriter::~BinWriter() {
  close();
  delete impl_;
}

void BinWriter::close() {
  if (impl_->os.is_open()) impl_->os.close();
}

void BinWriter::u8(uint8_t v) { bytes(&v, 1); }

void BinWriter::u32(uint32_t v) {
  uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                  static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
  bytes(b, 4);
}

void BinWriter::u64(uint64_t v) {
  uint8_t b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<uint8_t>(v >> (8 * i));
  bytes(b, 8);
}

void BinWriter::i8(int8_t v) { bytes(&v, 1); }

void BinWriter::f32(float v) { u32(std::bit_cast<uint32_t>(v)); }

void BinWriter::f64(double v) { u64(std::bit_cast<uint64_t>(v)); }

void BinWriter::bytes(const void* p, size_t n) {
  impl_->os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  check(impl_->os.good(), "write failed: " + impl_->path);
}

void BinWriter::str(const std::string& s) {
  u32(static_cast<uint32_t>(s.size()));
  if (!s.empty()) bytes(s.data(), s.size());
}

struct BinReader::Impl {
  std::ifstream is;
  std::string path;
};

BinReader::BinReader(const std::string& path) : impl_(new Impl) {
  impl_->path = path;
  impl_->is.open(path, std::ios::binary);
  check_config(impl_->is.good(), "cannot open for reading: " + path);
}

BinReader::~BinReader() { delete impl_; }

void BinReader::bytes(void* p, size_t n) {
  impl_->is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  check(impl_->is.gcount() == static_cast<std::streamsize>(n),
        "truncated file: " + impl_->path);
}

uint8_t BinReader::u8() {
  uint8_t v;
  bytes(&v, 1);
  return v;
}

uint32_t BinReader::u32() {
  uint8_t b[4];
  bytes(b, 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint64_t BinReader::u64() {
  uint8_t b[8];
  bytes(b, 8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

int8_t BinReader::i8() {
  int8_t v;
  bytes(&v, 1);
  return v;
}

float BinReader::f32() { return std::bit_cast<float>(u32()); }

double BinReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinReader::str() {
  uint32_t n = u32();
  check(n < (1u << 30), "unreasonable string length in " + impl_->path);
  std::string s(n, '\0');
  if (n > 0) bytes(s.data(), n);
  return s;
}

bool BinReader::eof() const {
  return impl_->is.peek() == std::char_traits<char>::eof();
}

std::string read_text_file(const std::string& path) {
  std::ifstream is(path);
  check_config(is.good(), "cannot open for reading: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  check_config(os.good(), "cannot open for writing: " + path);
  os << text;
  check(os.good(), "write failed: " + path);
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace twopass
