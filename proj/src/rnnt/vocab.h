// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace twopass {
namespace rnnt {

// Token inventory shared by both passes. Ids are dense; blank and the
// end-of-query token `</s>` are ordinary entries.
struct Vocab {
  std::vector<std::string> tokens;
  int blank_id = 0;
  int eos_id = 1;

  int size() const { return static_cast<int>(tokens.size()); }
  const std::string& str(int id) const;
  int id_of(const std::string& s) const;  // -1 if absent
  uint64_t hash() const;                  // FNV-1a over tokens and special ids
  void validate() const;
};

}  // namespace rnnt
}  // namespace twopass
