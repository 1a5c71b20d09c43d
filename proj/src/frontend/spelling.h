// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

namespace twopass {
namespace frontend {

// Many-to-one spelling normalization: each variant maps to one canonical
// form, and canonical forms map to themselves.
struct SpellingMap {
  std::map<std::string, std::string> to_canonical;

  void add(const std::string& variant, const std::string& canonical);
  // Pairs formatted "variant:canonical".
  static SpellingMap from_pairs(const std::vector<std::string>& pairs);
};

std::vector<std::string> normalize_transcript(const std::vector<std::string>& tokens,
                                              const SpellingMap& map);

}  // namespace frontend
}  // namespace twopass
