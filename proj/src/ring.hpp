#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "prg.hpp"
#include "u128.hpp"

namespace trishare {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// True when `small` may broadcast against `big` in elementwise ops: scalar,
// or a trailing suffix of big's shape (per-channel constants on row-major
// layouts).
bool shape_suffix_broadcasts(const Shape& small, const Shape& big);

// Plaintext real-valued tensor, row-major.
struct RealTensor {
    Shape shape;
    std::vector<double> data;

    RealTensor() = default;
    RealTensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {}
    static RealTensor zeros(const Shape& s) {
        return RealTensor(s, std::vector<double>(static_cast<size_t>(shape_numel(s)), 0.0));
    }
    static RealTensor scalar(double v) { return RealTensor({1}, {v}); }
    int64_t numel() const { return shape_numel(shape); }
};

enum class Backend : uint8_t { Int64 = 0, Crt = 1 };

// Residue number system parameters for the int100 backend. The moduli are a
// fixed configuration constant: pairwise-coprime primes below 2^31 whose
// product exceeds 2^100, so a product of two residues fits in a 64-bit word
// and full reconstruction fits in an unsigned 128-bit integer.
struct CrtParams {
    std::vector<uint64_t> moduli;
    u128 modulus_product = 0;
    // garner_inv[j][i] = moduli[i]^-1 mod moduli[j], for i < j.
    std::vector<std::vector<uint64_t>> garner_inv;

    explicit CrtParams(std::vector<uint64_t> primes);

    size_t count() const { return moduli.size(); }
    u128 reconstruct(const uint64_t* residues) const;
    void decompose(u128 value, uint64_t* residues) const;
};

const CrtParams& int100_params();

size_t words_per_element(Backend backend);

// N-dimensional tensor of ring elements, row-major. Int64 stores one 64-bit
// word per element (arithmetic mod 2^64); Crt stores one residue word per
// modulus, residues of an element contiguous. Immutable by convention once
// built: all operations return new tensors.
class RingTensor {
  public:
    RingTensor() = default;
    RingTensor(Backend backend, Shape shape);

    static RingTensor zeros(Backend backend, const Shape& shape);
    static RingTensor from_words(Backend backend, Shape shape, std::vector<uint64_t> words);
    // Uniformly random elements (per-residue uniform for Crt); deterministic
    // given the generator state.
    static RingTensor sample_uniform(Backend backend, const Shape& shape, Prg& prg);

    Backend backend() const { return backend_; }
    const Shape& shape() const { return shape_; }
    int64_t numel() const { return shape_numel(shape_); }
    size_t wpe() const { return words_per_element(backend_); }
    const std::vector<uint64_t>& words() const { return words_; }
    std::vector<uint64_t>& mutable_words() { return words_; }

    // Element access as an integer in [0, m).
    u128 element(int64_t index) const;
    void set_element(int64_t index, u128 value);

    RingTensor add(const RingTensor& other) const;
    RingTensor sub(const RingTensor& other) const;
    RingTensor neg() const;
    RingTensor mul(const RingTensor& other) const;

    // [r x s] . [s x t] -> [r x t], all arithmetic mod m.
    RingTensor matmul(const RingTensor& other) const;
    // NHWC input [B,H,W,Cin], kernel [KH,KW,Cin,Cout], VALID padding.
    RingTensor conv2d(const RingTensor& kernel, int64_t stride) const;

    RingTensor transpose(const std::vector<int>& perm) const;
    RingTensor transpose2d() const;
    RingTensor reshape(const Shape& new_shape) const;
    RingTensor reduce_sum_axis(int axis) const;
    static RingTensor stack(const std::vector<RingTensor>& parts, int axis);
    static RingTensor concat(const std::vector<RingTensor>& parts, int axis);
    // Extract index i along the stacked axis (inverse of stack at axis 0).
    RingTensor slice_axis0(int64_t index) const;

    // Little-endian 64-bit words, residues of one element contiguous for Crt.
    std::vector<uint8_t> to_bytes() const;
    static RingTensor from_bytes(Backend backend, Shape shape, std::span<const uint8_t> bytes);

    bool equals(const RingTensor& other) const;

  private:
    Backend backend_ = Backend::Int64;
    Shape shape_;
    std::vector<uint64_t> words_;
};

// im2col for NHWC tensors: [B,H,W,C] -> [B*OH*OW, KH*KW*C] patches, VALID
// padding. Structural (copies ring words), shared by conv lowering.
RingTensor im2col(const RingTensor& x, int64_t kh, int64_t kw, int64_t stride);

Shape conv2d_output_shape(const Shape& input, const Shape& kernel, int64_t stride);

}  // namespace trishare
