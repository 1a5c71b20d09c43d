// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace twopass {

// Little-endian binary writer/reader used by the dataset archive and the
// checkpoint container. Byte order is explicit so files are portable.
class BinWriter {
 public:
  explicit BinWriter(const std::string& path);
  ~BinWriter();

  void u8(uint8_t v);
  void u32(uint32_t v);
  void u64(uint64_t v);
  void i8(int8_t v);
  void f32(float v);
  void f64(double v);
  void bytes(const void* p, size_t n);
  void str(const std::string& s);  // u32 length + raw bytes
  void close();

 private:
  struct Impl;
  Impl* impl_;
};

class BinReader {
 public:
  explicit BinReader(const std::string& path);
  ~BinReader();

  uint8_t u8();
  uint32_t u32();
  uint64_t u64();
  int8_t i8();
  float f32();
  double f64();
  void bytes(void* p, size_t n);
  std::string str();
  bool eof() const;

 private:
  struct Impl;
  Impl* impl_;
};

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// Formats a double with enough digits to round-trip bit-exactly.
std::string format_double(double v);

}  // namespace twopass

