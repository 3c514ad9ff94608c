#pragma once

#include "ring.hpp"

namespace trishare {

// Fixed-point encoding: a real v is represented as round(v * 2^f) mod m.
// bound_bits caps encoded magnitudes (|v * 2^f| < 2^b); stat_security is the
// statistical masking margin used by the interactive truncation protocol.
struct FixedPointConfig {
    int fractional_bits = 16;
    int bound_bits = 32;
    int stat_security = 30;

    void validate(Backend backend) const;
};

// Library default, sized for generic small-value tensor work on either
// backend: one multiplication before truncation stays within 2^32 bounds.
inline FixedPointConfig default_fixed_point() { return {16, 32, 30}; }

// Profiles for neural-network inference, where pre-activation sums and
// polynomial activation terms need integer headroom 2^(b-2f) well above 1.
FixedPointConfig nn_fixed_point(Backend backend);

// round(v * 2^f) mod m, elementwise. OverflowBound if any |v| >= 2^(b-f).
RingTensor encode(const RealTensor& values, const FixedPointConfig& cfg, Backend backend);
RingTensor encode_scalar(double v, const FixedPointConfig& cfg, Backend backend);

// Inverse map at an explicit scale exponent (f after truncation, 2f right
// after a multiplication). Elements in [m - 2^b, m) decode as negative.
// Inputs outside [0, 2^b) u [m - 2^b, m) violate the encoding precondition
// and decode to unspecified values.
RealTensor decode(const RingTensor& t, const FixedPointConfig& cfg, int scale_exp);
inline RealTensor decode(const RingTensor& t, const FixedPointConfig& cfg) {
    return decode(t, cfg, cfg.fractional_bits);
}

// Ring modulus as a 128-bit integer; 0 means 2^64 for Int64 (handled by
// callers through wraparound, exposed for Crt bound checks).
u128 ring_modulus(Backend backend);
int ring_modulus_bits(Backend backend);

}  // namespace trishare
