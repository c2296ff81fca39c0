#include "cnce/stable_hash.hpp"

namespace cnce {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

StableHash& StableHash::add(std::uint64_t value) {
  absorb(value);
  ++fields_;
  return *this;
}

StableHash& StableHash::add(std::string_view text) {
  absorb(static_cast<std::uint64_t>(text.size()));
  std::uint64_t word = 0;
  int shift = 0;
  for (unsigned char c : text) {
    word |= static_cast<std::uint64_t>(c) << shift;
    shift += 8;
    if (shift == 64) {
      absorb(word);
      word = 0;
      shift = 0;
    }
  }
  if (shift != 0) absorb(word);
  ++fields_;
  return *this;
}

std::uint64_t StableHash::finish() const { return splitmix64(state_ ^ fields_); }

}  // namespace cnce
