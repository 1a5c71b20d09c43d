// SPDX-License-Identifier: Apache-2.0

#include "rnnt/vocab.h"

#include "util/common.h"

namespace twopass {
namespace rnnt {

const std::string& Vocab::str(int id) const {
  check(id >= 0 && id < size(), "token id out of range");
  return tokens[id];
}

int Vocab::id_of(const std::string& s) const {
  for (int i = 0; i < size(); ++i)
    if (tokens[i] == s) return i;
  return -1;
}

uint64_t Vocab::hash() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const char* p, size_t n) {
    for (size_t i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(p[i]);
      h *= 1099511628211ull;
    }
  };
  for (const std::string& t : tokens) {
    mix(t.data(), t.size());
    mix("\x1f", 1);
  }
  char ids[2] = {static_cast<char>(blank_id), static_cast<char>(eos_id)};
  mix(ids, 2);
  return h;
}

void Vocab::validate() const {
  check(blank_id != eos_id, "blank and eos ids must differ");
  check(blank_id >= 0 && blank_id < size(), "blank id out of range");
  check(eos_id >= 0 && eos_id < size(), "eos id out of range");
}

}  // namespace rnnt
}  // namespace twopass
