#pragma once

#include <cstdint>
#include <string_view>

namespace cnce {

/// SplitMix64 finaliser.
std::uint64_t splitmix64(std::uint64_t z);

/// Order-sensitive hash of a tuple of integers and strings.
///
/// Canonical encoding: the state starts at 0x243F6A8885A308D3 and absorbs 64-bit
/// words as state = splitmix64(state ^ word). An integer is one word. A string
/// absorbs its byte length, then its bytes packed little-endian into 8-byte
/// words, the last word zero-padded. `finish()` returns splitmix64(state ^ count),
/// where count is the number of fields absorbed. See docs/seeding.md.
class StableHash {
 public:
  StableHash& add(std::uint64_t value);
  StableHash& add(std::string_view text);
  std::uint64_t finish() const;

 private:
  void absorb(std::uint64_t word) { state_ = splitmix64(state_ ^ word); }

  std::uint64_t state_ = 0x243F6A8885A308D3ULL;
  std::uint64_t fields_ = 0;
};

}  // namespace cnce
