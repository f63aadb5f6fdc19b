#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace tsbc::rng {

using Counter = std::array<std::uint64_t, 4>;
using Key = std::array<std::uint64_t, 2>;

// Philox4x64-10 block function (Salmon et al., Random123).
Counter philox4x64(Counter ctr, Key key);

std::uint64_t splitmix64(std::uint64_t x);

// Order-sensitive mixing of a sequence of words into one 64-bit tag.
std::uint64_t mix(std::initializer_list<std::uint64_t> words);

// FNV-1a; used to turn role labels ("rm", "acm", ...) into stream words.
std::uint64_t label(std::string_view s);

// Maps the top 52 bits of a word to the open interval (0, 1).
inline double to_open_unit(std::uint64_t w) {
  return (static_cast<double>(w >> 12) + 0.5) * 0x1.0p-52;
}

// Counter-based generator: every output is addressed by (key, counter),
// so draws do not depend on evaluation order.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream) : key_{seed, stream} {}

  Counter block(std::uint64_t a, std::uint64_t b) const {
    return philox4x64({a, b, 0, 0}, key_);
  }

  // Independent +-1 draw addressed by index.
  double rademacher(std::uint64_t i) const;

 private:
  Key key_;
};

}  // namespace tsbc::rng
