#include "prg.hpp"

#include <cstring>

namespace trishare {

namespace {

inline uint32_t rotl32(uint32_t x, int n) { return (x << n) | (x >> (32 - n)); }

inline void quarter_round(uint32_t& a, uint32_t& b, uint32_t& c, uint32_t& d) {
    a += b; d ^= a; d = rotl32(d, 16);
    c += d; b ^= c; b = rotl32(b, 12);
    a += b; d ^= a; d = rotl32(d, 8);
    c += d; b ^= c; b = rotl32(b, 7);
}

void chacha20_block(const std::array<uint32_t, 16>& in, std::array<uint8_t, 64>& out) {
    std::array<uint32_t, 16> x = in;
    for (int round = 0; round < 10; ++round) {
        quarter_round(x[0], x[4], x[8], x[12]);
        quarter_round(x[1], x[5], x[9], x[13]);
        quarter_round(x[2], x[6], x[10], x[14]);
        quarter_round(x[3], x[7], x[11], x[15]);
        quarter_round(x[0], x[5], x[10], x[15]);
        quarter_round(x[1], x[6], x[11], x[12]);
        quarter_round(x[2], x[7], x[8], x[13]);
        quarter_round(x[3], x[4], x[9], x[14]);
    }
    for (int i = 0; i < 16; ++i) {
        uint32_t v = x[i] + in[i];
        out[4 * i + 0] = static_cast<uint8_t>(v);
        out[4 * i + 1] = static_cast<uint8_t>(v >> 8);
        out[4 * i + 2] = static_cast<uint8_t>(v >> 16);
        out[4 * i + 3] = static_cast<uint8_t>(v >> 24);
    }
}

uint64_t splitmix64(uint64_t& s) {
    uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t fnv1a(std::string_view s) { return fnv1a_extend(0xcbf29ce484222325ULL, s); }

uint64_t fnv1a_extend(uint64_t h, std::string_view s) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Prg::Prg(uint64_t seed, std::string_view label) {
    // "expand 32-byte k"
    state_[0] = 0x61707865;
    state_[1] = 0x3320646e;
    state_[2] = 0x79622d32;
    state_[3] = 0x6b206574;
    uint64_t s = seed;
    for (int i = 0; i < 4; ++i) {
        uint64_t w = splitmix64(s);
        state_[4 + 2 * i] = static_cast<uint32_t>(w);
        state_[5 + 2 * i] = static_cast<uint32_t>(w >> 32);
    }
    state_[12] = 0;  // block counter
    uint64_t lbl = fnv1a(label);
    uint64_t lbl2 = fnv1a_extend(lbl, "#2");
    state_[13] = static_cast<uint32_t>(lbl);
    state_[14] = static_cast<uint32_t>(lbl >> 32);
    state_[15] = static_cast<uint32_t>(lbl2);
}

void Prg::refill() {
    chacha20_block(state_, block_);
    state_[12] += 1;
    pos_ = 0;
}

void Prg::fill_bytes(uint8_t* out, size_t n) {
    while (n > 0) {
        if (pos_ == 64) refill();
        size_t take = std::min(n, static_cast<size_t>(64 - pos_));
        std::memcpy(out, block_.data() + pos_, take);
        pos_ += take;
        out += take;
        n -= take;
    }
}

uint64_t Prg::next_u64() {
    uint8_t buf[8];
    fill_bytes(buf, 8);
    uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | buf[i];
    return v;
}

uint64_t Prg::next_below(uint64_t bound) {
    // Largest multiple of bound representable in 64 bits.
    uint64_t limit = bound * (UINT64_MAX / bound);
    uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % bound;
}

unsigned __int128 Prg::next_bits128(int bits) {
    unsigned __int128 v = next_u64();
    if (bits > 64) v |= static_cast<unsigned __int128>(next_u64()) << 64;
    if (bits < 128) v &= ((static_cast<unsigned __int128>(1) << bits) - 1);
    return v;
}

}  // namespace trishare
