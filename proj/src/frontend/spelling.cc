// SPDX-License-Identifier: Apache-2.0

#include "frontend/spelling.h"

#include "util/common.h"

namespace twopass {
namespace frontend {

void SpellingMap::add(const std::string& variant, const std::string& canonical) {
  auto it = to_canonical.find(variant);
  check(it == to_canonical.end() || it->second == canonical,
        "spelling variant '" + variant + "' already maps elsewhere");
  to_canonical[variant] = canonical;
  to_canonical[canonical] = canonical;
}

SpellingMap SpellingMap::from_pairs(const std::vector<std::string>& pairs) {
  SpellingMap m;
  for (const std::string& p : pairs) {
    size_t colon = p.find(':');
    check_config(colon != std::string::npos && colon > 0 && colon + 1 < p.size(),
                 "spelling pair must look like variant:canonical, got: " + p);
    m.add(p.substr(0, colon), p.substr(colon + 1));
  }
  return m;
}

std::vector<std::string> normalize_transcript(const std::vector<std::string>& tokens,
                                              const SpellingMap& map) {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const std::string& t : tokens) {
    auto it = map.to_canonical.find(t);
    out.push_back(it == map.to_canonical.end() ? t : it->second);
  }
  return out;
}

}  // namespace frontend
}  // namespace twopass
