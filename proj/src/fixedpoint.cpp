#include "fixedpoint.hpp"

#include <cmath>

namespace trishare {

u128 ring_modulus(Backend backend) {
    if (backend == Backend::Int64) return static_cast<u128>(1) << 64;
    return int100_params().modulus_product;
}

int ring_modulus_bits(Backend backend) {
    if (backend == Backend::Int64) return 64;
    u128 m = int100_params().modulus_product;
    int bits = 0;
    while (m > 1) {
        m >>= 1;
        ++bits;
    }
    return bits;  // floor(log2 M)
}

void FixedPointConfig::validate(Backend backend) const {
    int f = fractional_bits, b = bound_bits, kappa = stat_security;
    if (f < 0 || b <= 0 || kappa <= 0)
        fail(ErrorCode::BadConfig, "fixed point parameters must be positive");
    if (2 * f > b) fail(ErrorCode::BadConfig, "2f <= b required (one mul before truncation)");
    if (b > 62) fail(ErrorCode::BadConfig, "bound_bits above 62 unsupported");
    int cap = ring_modulus_bits(backend);
    if (b + kappa + 1 > cap)
        fail(ErrorCode::BadConfig, "b + kappa + 1 exceeds ring capacity of " + std::to_string(cap));
}

FixedPointConfig nn_fixed_point(Backend backend) {
    // Int64: headroom 2^(38-26) = 4096 covers conv sums and Horner terms while
    // keeping b + kappa + 1 = 64. Crt has room for full precision.
    if (backend == Backend::Int64) return {13, 38, 25};
    return {16, 60, 30};
}

RingTensor encode(const RealTensor& values, const FixedPointConfig& cfg, Backend backend) {
    cfg.validate(backend);
    double limit = std::ldexp(1.0, cfg.bound_bits - cfg.fractional_bits);
    double scale = std::ldexp(1.0, cfg.fractional_bits);
    RingTensor out(backend, values.shape);
    const auto& moduli = int100_params().moduli;
    size_t wpe = out.wpe();
    for (size_t i = 0; i < values.data.size(); ++i) {
        double v = values.data[i];
        if (!(std::fabs(v) < limit))
            fail(ErrorCode::OverflowBound,
                 "value " + std::to_string(v) + " outside encodable range +-2^" +
                     std::to_string(cfg.bound_bits - cfg.fractional_bits));
        int64_t x = std::llround(v * scale);
        if (backend == Backend::Int64) {
            out.mutable_words()[i] = static_cast<uint64_t>(x);
        } else {
            uint64_t mag = static_cast<uint64_t>(x < 0 ? -x : x);
            for (size_t j = 0; j < wpe; ++j) {
                uint64_t r = mag % moduli[j];
                out.mutable_words()[i * wpe + j] = x < 0 ? (moduli[j] - r) % moduli[j] : r;
            }
        }
    }
    return out;
}

RingTensor encode_scalar(double v, const FixedPointConfig& cfg, Backend backend) {
    return encode(RealTensor::scalar(v), cfg, backend);
}

RealTensor decode(const RingTensor& t, const FixedPointConfig& cfg, int scale_exp) {
    RealTensor out = RealTensor::zeros(t.shape());
    long double inv_scale = powl(0.5L, static_cast<long double>(scale_exp));
    u128 bound = static_cast<u128>(1) << cfg.bound_bits;
    if (t.backend() == Backend::Int64) {
        uint64_t neg_from = static_cast<uint64_t>(0) - static_cast<uint64_t>(lo64(bound));
        for (int64_t i = 0; i < t.numel(); ++i) {
            uint64_t w = lo64(t.element(i));
            long double v = w >= neg_from
                                ? -static_cast<long double>(0 - w)
                                : static_cast<long double>(w);
            out.data[static_cast<size_t>(i)] = static_cast<double>(v * inv_scale);
        }
    } else {
        u128 m = int100_params().modulus_product;
        for (int64_t i = 0; i < t.numel(); ++i) {
            u128 w = t.element(i);
            long double v = w >= m - bound
                                ? -static_cast<long double>(m - w)
                                : static_cast<long double>(w);
            out.data[static_cast<size_t>(i)] = static_cast<double>(v * inv_scale);
        }
    }
    return out;
}

}  // namespace trishare
