#pragma once

#include <functional>

#include "fixedpoint.hpp"
#include "ring.hpp"

namespace trishare {

enum class TruncationMode : uint8_t { Interactive = 0, LocalOptimistic = 1 };

struct TruncationConfig {
    TruncationMode mode = TruncationMode::Interactive;
    FixedPointConfig fp;
};

// Two additive shares of a tensor: x = shares[0] + shares[1] mod m. The full
// pair exists only at an input provider, in the offline generator, and in
// tests; a server ever holds just its own component.
struct PrivateTensor {
    RingTensor shares[2];
    int fp_scale = 0;

    Backend backend() const { return shares[0].backend(); }
    const Shape& shape() const { return shares[0].shape(); }
};

// A private tensor augmented with a random mask a: S2 holds a, S_i holds a_i
// with a0 + a1 = a, and both servers hold alpha = x - a. Multiplication
// consumes masked tensors and is local given offline product shares.
struct MaskedTensor {
    RingTensor mask;  // a, held by S2
    RingTensor mask_shares[2];
    RingTensor alpha;  // x - a, held by both servers
    int fp_scale = 0;

    Backend backend() const { return alpha.backend(); }
    const Shape& shape() const { return alpha.shape(); }
};

enum class BilinearKind : uint8_t { Mul = 0, MatMul = 1, Conv2D = 2 };

// Offline product shares for one mul/bilinear node: sums to B(a^x, a^y).
struct ProductTriple {
    RingTensor prod_shares[2];
};

// Offline material for one interactive truncation: shares of r uniform in
// [0, 2^(b+kappa)) and of r' = floor(r / 2^f).
struct TruncPair {
    RingTensor r_shares[2];
    RingTensor rp_shares[2];
};

// ---- construction / reconstruction ----

PrivateTensor share(const RingTensor& x, int fp_scale, Prg& prg);
RingTensor reconstruct(const PrivateTensor& p);

// Build the masked view of x from offline mask material (a sampled by the
// crypto producer, a0 random, a1 = a - a0). alpha = x - a.
MaskedTensor mask_with(const PrivateTensor& x, const RingTensor& a, Prg& mask_share_prg);

// ---- local linear algebra on shares (no communication) ----

PrivateTensor add(const PrivateTensor& a, const PrivateTensor& b);
PrivateTensor sub(const PrivateTensor& a, const PrivateTensor& b);
PrivateTensor neg(const PrivateTensor& a);
// Public constant folded into share 0 only.
PrivateTensor add_plain(const PrivateTensor& a, const RingTensor& c, int c_scale);
// Both shares scaled by the public constant; scales add.
PrivateTensor mul_plain(const PrivateTensor& a, const RingTensor& c, int c_scale);

// ---- party-local protocol kernels ----
// These are exactly what one server computes; the full-view operations below
// and the networked runtime both reduce to them.
namespace kernels {

using BilinearFn = std::function<RingTensor(const RingTensor&, const RingTensor&)>;

BilinearFn bilinear_fn(BilinearKind kind, int64_t conv_stride);

// share_i(z) = i B(ax,ay) + B(ax, a_i^y) + B(a_i^x, ay) + share_i(B(a^x,a^y))
RingTensor bilinear_share(int party, const RingTensor& alpha_x, const RingTensor& alpha_y,
                          const RingTensor& ax_share, const RingTensor& ay_share,
                          const RingTensor& prod_share, const BilinearFn& B);

// Interactive truncation, step 1: the addend S_i contributes to the opening
// c = (x + 2^b) + r.
RingTensor trunc_open_addend(int party, const RingTensor& x_share, const RingTensor& r_share,
                             const FixedPointConfig& cfg);
// Step 2: share of the result given the public opened value c.
// share_i(z) = i floor(c/2^f) - share_i(r') - i 2^(b-f).
RingTensor trunc_result_share(int party, const RingTensor& c_open, const RingTensor& rp_share,
                              const FixedPointConfig& cfg);

// Optimistic non-interactive truncation of one share (Int64 only):
// S0 shifts its share down, S1 shifts the negation of its share.
RingTensor trunc_local_share(int party, const RingTensor& x_share, int f);

}  // namespace kernels

// ---- full-view secure operations (provider/test/simulation side) ----

PrivateTensor mul_masked(const MaskedTensor& x, const MaskedTensor& y, const ProductTriple& t);
PrivateTensor bilinear_masked(BilinearKind kind, const MaskedTensor& x, const MaskedTensor& y,
                              const ProductTriple& t, int64_t conv_stride = 1);
PrivateTensor truncate(const PrivateTensor& x, const TruncationConfig& cfg,
                       const TruncPair* material);

// Structural op applied to every constituent tensor; sharing kind preserved.
PrivateTensor apply_structural(const PrivateTensor& p,
                               const std::function<RingTensor(const RingTensor&)>& op);
MaskedTensor apply_structural(const MaskedTensor& m,
                              const std::function<RingTensor(const RingTensor&)>& op);

// ---- offline material generators (crypto producer algebra) ----

RingTensor sample_mask(Backend backend, const Shape& shape, Prg& prg);
ProductTriple make_product_triple(BilinearKind kind, const RingTensor& ax, const RingTensor& ay,
                                  int64_t conv_stride, Prg& prg);
TruncPair make_trunc_pair(Backend backend, const Shape& shape, const FixedPointConfig& cfg,
                          Prg& prg);

// Ring tensor holding one integer value (reduced per backend).
RingTensor ring_scalar_int(Backend backend, u128 value);

}  // namespace trishare
