#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "driftprobe/embedded_data.hpp"
#include "driftprobe/error.hpp"
#include "driftprobe/util/hash.hpp"

// Versioned stimulus banks, lexicons and prompts shipped under data/.
namespace driftprobe::data {

inline std::string_view file(std::string_view name) {
  for (const auto& f : embedded::files) {
    if (f.name == name) return f.content;
  }
  throw NotFoundError("no shipped data file named " + std::string(name));
}

struct FileHash {
  std::string name;
  std::string sha256;
};

// Content hash of every shipped data file, sorted by name.
inline std::vector<FileHash> manifest() {
  std::vector<FileHash> out;
  out.reserve(embedded::files.size());
  for (const auto& f : embedded::files) {
    out.push_back({std::string(f.name), util::sha256_hex(f.content)});
  }
  return out;
}

// Single hash over the three fingerprint lexicons; recorded alongside every
// fingerprint result.
inline std::string lexicon_hash() {
  util::Sha256 h;
  for (std::string_view name :
       {"lexicons/commit.txt", "lexicons/experiential.txt", "lexicons/hedge.txt"}) {
    h.update(name).update("\n").update(file(name));
  }
  return h.hex();
}

}  // namespace driftprobe::data
