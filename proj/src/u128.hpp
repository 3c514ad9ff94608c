#pragma once

#include <cstdint>

namespace trishare {

using u128 = unsigned __int128;

inline constexpr uint64_t lo64(u128 v) { return static_cast<uint64_t>(v); }
inline constexpr uint64_t hi64(u128 v) { return static_cast<uint64_t>(v >> 64); }
inline constexpr u128 make_u128(uint64_t hi, uint64_t lo) {
    return (static_cast<u128>(hi) << 64) | lo;
}

// x^-1 mod m for coprime x, m. m < 2^63.
inline uint64_t inv_mod(uint64_t x, uint64_t m) {
    int64_t t = 0, new_t = 1;
    int64_t r = static_cast<int64_t>(m), new_r = static_cast<int64_t>(x % m);
    while (new_r != 0) {
        int64_t q = r / new_r;
        int64_t tmp = t - q * new_t;
        t = new_t;
        new_t = tmp;
        tmp = r - q * new_r;
        r = new_r;
        new_r = tmp;
    }
    if (t < 0) t += static_cast<int64_t>(m);
    return static_cast<uint64_t>(t);
}

}  // namespace trishare
