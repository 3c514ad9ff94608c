#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <string>
#include <string_view>

namespace trishare {

// Deterministic pseudorandom generator: ChaCha20 keystream in counter mode.
// A stream is identified by (seed, label); the label separates independent
// streams (per party, purpose, node). Single-threaded, one instance per stream.
class Prg {
  public:
    Prg(uint64_t seed, std::string_view label);

    uint64_t next_u64();
    // Uniform in [0, bound) via rejection sampling.
    uint64_t next_below(uint64_t bound);
    // Uniform in [0, 2^bits), bits <= 128.
    unsigned __int128 next_bits128(int bits);
    void fill_bytes(uint8_t* out, size_t n);

  private:
    void refill();

    std::array<uint32_t, 16> state_;
    std::array<uint8_t, 64> block_;
    size_t pos_ = 64;
};

// FNV-1a, used for stream labels and plan fingerprints. Labels are public
// structure, not adversarial input.
uint64_t fnv1a(std::string_view s);
uint64_t fnv1a_extend(uint64_t h, std::string_view s);

}  // namespace trishare
