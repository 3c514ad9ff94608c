#include "ring.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <numeric>
#include <sstream>

namespace trishare {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

bool shape_suffix_broadcasts(const Shape& small, const Shape& big) {
    if (shape_numel(small) == 1) return true;
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << "]";
    return os.str();
}

CrtParams::CrtParams(std::vector<uint64_t> primes) : moduli(std::move(primes)) {
    modulus_product = 1;
    for (uint64_t m : moduli) modulus_product *= m;
    garner_inv.resize(moduli.size());
    for (size_t j = 0; j < moduli.size(); ++j) {
        garner_inv[j].resize(j);
        for (size_t i = 0; i < j; ++i) {
            garner_inv[j][i] = inv_mod(moduli[i] % moduli[j], moduli[j]);
        }
    }
}

u128 CrtParams::reconstruct(const uint64_t* residues) const {
    // Garner mixed-radix: v_j = (...((r_j - v_0) c_0j - v_1) c_1j ...) mod m_j.
    size_t k = moduli.size();
    uint64_t v[8];
    for (size_t j = 0; j < k; ++j) {
        uint64_t m = moduli[j];
        uint64_t u = residues[j] % m;
        for (size_t i = 0; i < j; ++i) {
            uint64_t diff = (u + m - v[i] % m) % m;
            u = (diff * garner_inv[j][i]) % m;
        }
        v[j] = u;
    }
    u128 x = v[k - 1];
    for (size_t j = k - 1; j-- > 0;) {
        x = x * moduli[j] + v[j];
    }
    return x;
}

void CrtParams::decompose(u128 value, uint64_t* residues) const {
    for (size_t j = 0; j < moduli.size(); ++j) {
        residues[j] = static_cast<uint64_t>(value % moduli[j]);
    }
}

const CrtParams& int100_params() {
    // Four 31-bit primes; product ~= 2^123.99 >= 2^100.
    static const CrtParams params({2147483647ULL, 2147483629ULL, 2147483587ULL, 2147483579ULL});
    return params;
}

size_t words_per_element(Backend backend) {
    return backend == Backend::Int64 ? 1 : int100_params().count();
}

RingTensor::RingTensor(Backend backend, Shape shape) : backend_(backend), shape_(std::move(shape)) {
    words_.assign(static_cast<size_t>(shape_numel(shape_)) * wpe(), 0);
}

RingTensor RingTensor::zeros(Backend backend, const Shape& shape) {
    return RingTensor(backend, shape);
}

RingTensor RingTensor::from_words(Backend backend, Shape shape, std::vector<uint64_t> words) {
    RingTensor t;
    t.backend_ = backend;
    t.shape_ = std::move(shape);
    if (words.size() != static_cast<size_t>(shape_numel(t.shape_)) * t.wpe())
        fail(ErrorCode::ShapeMismatch, "word count does not match shape " + shape_str(t.shape_));
    t.words_ = std::move(words);
    return t;
}

RingTensor RingTensor::sample_uniform(Backend backend, const Shape& shape, Prg& prg) {
    RingTensor t(backend, shape);
    if (backend == Backend::Int64) {
        for (auto& w : t.words_) w = prg.next_u64();
    } else {
        const auto& p = int100_params();
        size_t k = p.count();
        for (size_t i = 0; i < t.words_.size(); ++i) {
            t.words_[i] = prg.next_below(p.moduli[i % k]);
        }
    }
    return t;
}

u128 RingTensor::element(int64_t index) const {
    if (backend_ == Backend::Int64) return words_[static_cast<size_t>(index)];
    return int100_params().reconstruct(&words_[static_cast<size_t>(index) * wpe()]);
}

void RingTensor::set_element(int64_t index, u128 value) {
    if (backend_ == Backend::Int64) {
        words_[static_cast<size_t>(index)] = lo64(value);
    } else {
        int100_params().decompose(value, &words_[static_cast<size_t>(index) * wpe()]);
    }
}

namespace {

void check_same_backend(const RingTensor& a, const RingTensor& b) {
    if (a.backend() != b.backend())
        fail(ErrorCode::BackendMismatch, "operands use different ring backends");
}

// Elementwise combine; either operand may broadcast per
// shape_suffix_broadcasts.
template <typename FInt64, typename FCrt>
RingTensor zip(const RingTensor& a, const RingTensor& b, FInt64 f64, FCrt fcrt) {
    check_same_backend(a, b);
    bool b_small = shape_suffix_broadcasts(b.shape(), a.shape());
    bool a_small = !b_small && shape_suffix_broadcasts(a.shape(), b.shape());
    if (!a_small && !b_small)
        fail(ErrorCode::ShapeMismatch,
             "elementwise op on shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const RingTensor& big = b_small ? a : b;
    size_t na = static_cast<size_t>(a.numel()), nb = static_cast<size_t>(b.numel());
    RingTensor out(a.backend(), big.shape());
    size_t wpe = out.wpe();
    size_t n = static_cast<size_t>(out.numel());
    const uint64_t* pa = a.words().data();
    const uint64_t* pb = b.words().data();
    uint64_t* po = out.mutable_words().data();
    if (a.backend() == Backend::Int64) {
        for (size_t i = 0; i < n; ++i) {
            po[i] = f64(pa[i % na], pb[i % nb]);
        }
    } else {
        const auto& moduli = int100_params().moduli;
        for (size_t i = 0; i < n; ++i) {
            const uint64_t* ea = pa + (i % na) * wpe;
            const uint64_t* eb = pb + (i % nb) * wpe;
            for (size_t j = 0; j < wpe; ++j) {
                po[i * wpe + j] = fcrt(ea[j], eb[j], moduli[j]);
            }
        }
    }
    return out;
}

}  // namespace

RingTensor RingTensor::add(const RingTensor& other) const {
    return zip(
        *this, other, [](uint64_t x, uint64_t y) { return x + y; },
        [](uint64_t x, uint64_t y, uint64_t m) { return (x + y) % m; });
}

RingTensor RingTensor::sub(const RingTensor& other) const {
    return zip(
        *this, other, [](uint64_t x, uint64_t y) { return x - y; },
        [](uint64_t x, uint64_t y, uint64_t m) { return (x + m - y) % m; });
}

RingTensor RingTensor::mul(const RingTensor& other) const {
    return zip(
        *this, other, [](uint64_t x, uint64_t y) { return x * y; },
        [](uint64_t x, uint64_t y, uint64_t m) { return (x * y) % m; });
}

RingTensor RingTensor::neg() const {
    RingTensor out(backend_, shape_);
    if (backend_ == Backend::Int64) {
        for (size_t i = 0; i < words_.size(); ++i) out.words_[i] = 0 - words_[i];
    } else {
        const auto& moduli = int100_params().moduli;
        size_t k = moduli.size();
        for (size_t i = 0; i < words_.size(); ++i) {
            uint64_t m = moduli[i % k];
            out.words_[i] = (m - words_[i] % m) % m;
        }
    }
    return out;
}

RingTensor RingTensor::matmul(const RingTensor& other) const {
    check_same_backend(*this, other);
    if (shape_.size() != 2 || other.shape_.size() != 2 || shape_[1] != other.shape_[0])
        fail(ErrorCode::ShapeMismatch,
             "matmul on shapes " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    int64_t r = shape_[0], s = shape_[1], t = other.shape_[1];
    RingTensor out(backend_, {r, t});
    if (backend_ == Backend::Int64) {
        const uint64_t* pa = words_.data();
        const uint64_t* pb = other.words_.data();
        uint64_t* po = out.words_.data();
        for (int64_t i = 0; i < r; ++i) {
            for (int64_t k = 0; k < s; ++k) {
                uint64_t aik = pa[i * s + k];
                if (aik == 0) continue;
                const uint64_t* brow = pb + k * t;
                uint64_t* orow = po + i * t;
                for (int64_t j = 0; j < t; ++j) orow[j] += aik * brow[j];
            }
        }
    } else {
        const auto& moduli = int100_params().moduli;
        size_t k = moduli.size();
        // Residue products are < 2^62; a 128-bit accumulator absorbs the whole
        // inner dimension with a single reduction at the end.
        for (size_t j = 0; j < k; ++j) {
            uint64_t m = moduli[j];
            for (int64_t i = 0; i < r; ++i) {
                for (int64_t c = 0; c < t; ++c) {
                    u128 acc = 0;
                    for (int64_t x = 0; x < s; ++x) {
                        acc += static_cast<u128>(words_[(i * s + x) * k + j]) *
                               other.words_[(x * t + c) * k + j];
                    }
                    out.words_[(i * t + c) * k + j] = static_cast<uint64_t>(acc % m);
                }
            }
        }
    }
    return out;
}

Shape conv2d_output_shape(const Shape& input, const Shape& kernel, int64_t stride) {
    if (input.size() != 4 || kernel.size() != 4)
        fail(ErrorCode::ShapeMismatch, "conv2d expects NHWC input and KKIO kernel");
    if (input[3] != kernel[2])
        fail(ErrorCode::ShapeMismatch, "conv2d channel mismatch");
    int64_t oh = (input[1] - kernel[0]) / stride + 1;
    int64_t ow = (input[2] - kernel[1]) / stride + 1;
    if (kernel[0] > input[1] || kernel[1] > input[2] || stride < 1)
        fail(ErrorCode::ShapeMismatch, "conv2d kernel larger than input");
    return {input[0], oh, ow, kernel[3]};
}

RingTensor im2col(const RingTensor& x, int64_t kh, int64_t kw, int64_t stride) {
    const Shape& s = x.shape();
    if (s.size() != 4) fail(ErrorCode::ShapeMismatch, "im2col expects NHWC");
    int64_t b = s[0], h = s[1], w = s[2], c = s[3];
    int64_t oh = (h - kh) / stride + 1;
    int64_t ow = (w - kw) / stride + 1;
    size_t wpe = x.wpe();
    RingTensor out(x.backend(), {b * oh * ow, kh * kw * c});
    const uint64_t* src = x.words().data();
    uint64_t* dst = out.mutable_words().data();
    size_t row_words = static_cast<size_t>(c) * wpe;
    for (int64_t n = 0; n < b; ++n) {
        for (int64_t i = 0; i < oh; ++i) {
            for (int64_t j = 0; j < ow; ++j) {
                for (int64_t di = 0; di < kh; ++di) {
                    const uint64_t* src_row =
                        src + (((n * h + i * stride + di) * w + j * stride) * c) * wpe;
                    std::memcpy(dst, src_row, kw * row_words * sizeof(uint64_t));
                    dst += kw * row_words;
                }
            }
        }
    }
    return out;
}

RingTensor RingTensor::conv2d(const RingTensor& kernel, int64_t stride) const {
    Shape out_shape = conv2d_output_shape(shape_, kernel.shape(), stride);
    RingTensor patches = im2col(*this, kernel.shape()[0], kernel.shape()[1], stride);
    RingTensor kmat = kernel.reshape({kernel.shape()[0] * kernel.shape()[1] * kernel.shape()[2],
                                      kernel.shape()[3]});
    return patches.matmul(kmat).reshape(out_shape);
}

RingTensor RingTensor::transpose(const std::vector<int>& perm) const {
    if (perm.size() != shape_.size())
        fail(ErrorCode::ShapeMismatch, "transpose permutation rank mismatch");
    size_t rank = shape_.size();
    Shape new_shape(rank);
    for (size_t i = 0; i < rank; ++i) new_shape[i] = shape_[perm[i]];
    RingTensor out(backend_, new_shape);
    // Strides of the source, in elements.
    std::vector<int64_t> src_stride(rank, 1);
    for (size_t i = rank - 1; i-- > 0;) src_stride[i] = src_stride[i + 1] * shape_[i + 1];
    size_t wpe = this->wpe();
    std::vector<int64_t> idx(rank, 0);
    int64_t n = numel();
    for (int64_t e = 0; e < n; ++e) {
        int64_t src = 0;
        for (size_t i = 0; i < rank; ++i) src += idx[i] * src_stride[perm[i]];
        std::memcpy(&out.words_[e * wpe], &words_[src * wpe], wpe * sizeof(uint64_t));
        for (size_t i = rank; i-- > 0;) {
            if (++idx[i] < new_shape[i]) break;
            idx[i] = 0;
        }
    }
    return out;
}

RingTensor RingTensor::transpose2d() const {
    if (shape_.size() != 2) fail(ErrorCode::ShapeMismatch, "transpose2d expects rank 2");
    return transpose({1, 0});
}

RingTensor RingTensor::reshape(const Shape& new_shape) const {
    if (shape_numel(new_shape) != numel())
        fail(ErrorCode::ShapeMismatch,
             "reshape " + shape_str(shape_) + " -> " + shape_str(new_shape));
    RingTensor out = *this;
    out.shape_ = new_shape;
    return out;
}

RingTensor RingTensor::reduce_sum_axis(int axis) const {
    size_t rank = shape_.size();
    if (axis < 0 || static_cast<size_t>(axis) >= rank)
        fail(ErrorCode::ShapeMismatch, "reduce_sum_axis axis out of range");
    int64_t outer = 1, mid = shape_[axis], inner = 1;
    for (int i = 0; i < axis; ++i) outer *= shape_[i];
    for (size_t i = axis + 1; i < rank; ++i) inner *= shape_[i];
    Shape new_shape;
    for (size_t i = 0; i < rank; ++i)
        if (i != static_cast<size_t>(axis)) new_shape.push_back(shape_[i]);
    if (new_shape.empty()) new_shape = {1};
    RingTensor out = RingTensor::zeros(backend_, new_shape);
    size_t wpe = this->wpe();
    const auto& moduli = int100_params().moduli;
    for (int64_t o = 0; o < outer; ++o) {
        for (int64_t m = 0; m < mid; ++m) {
            const uint64_t* src = &words_[((o * mid + m) * inner) * wpe];
            uint64_t* dst = &out.words_[(o * inner) * wpe];
            if (backend_ == Backend::Int64) {
                for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
            } else {
                for (int64_t i = 0; i < inner; ++i) {
                    for (size_t j = 0; j < wpe; ++j) {
                        size_t w = i * wpe + j;
                        dst[w] = (dst[w] + src[w]) % moduli[j];
                    }
                }
            }
        }
    }
    return out;
}

RingTensor RingTensor::stack(const std::vector<RingTensor>& parts, int axis) {
    if (parts.empty()) fail(ErrorCode::InvalidArgument, "stack of zero tensors");
    Shape base = parts[0].shape();
    for (const auto& p : parts) {
        if (p.shape() != base) fail(ErrorCode::ShapeMismatch, "stack parts differ in shape");
        if (p.backend() != parts[0].backend())
            fail(ErrorCode::BackendMismatch, "stack parts differ in backend");
    }
    std::vector<RingTensor> expanded;
    expanded.reserve(parts.size());
    Shape unsq = base;
    unsq.insert(unsq.begin() + axis, 1);
    for (const auto& p : parts) expanded.push_back(p.reshape(unsq));
    return concat(expanded, axis);
}

RingTensor RingTensor::concat(const std::vector<RingTensor>& parts, int axis) {
    if (parts.empty()) fail(ErrorCode::InvalidArgument, "concat of zero tensors");
    const Shape& base = parts[0].shape();
    size_t rank = base.size();
    if (axis < 0 || static_cast<size_t>(axis) >= rank)
        fail(ErrorCode::ShapeMismatch, "concat axis out of range");
    int64_t axis_total = 0;
    for (const auto& p : parts) {
        if (p.backend() != parts[0].backend())
            fail(ErrorCode::BackendMismatch, "concat parts differ in backend");
        if (p.shape().size() != rank) fail(ErrorCode::ShapeMismatch, "concat rank mismatch");
        for (size_t i = 0; i < rank; ++i) {
            if (i != static_cast<size_t>(axis) && p.shape()[i] != base[i])
                fail(ErrorCode::ShapeMismatch, "concat parts differ off-axis");
        }
        axis_total += p.shape()[axis];
    }
    Shape out_shape = base;
    out_shape[axis] = axis_total;
    RingTensor out(parts[0].backend(), out_shape);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= base[i];
    for (size_t i = axis + 1; i < rank; ++i) inner *= base[i];
    size_t wpe = out.wpe();
    size_t inner_words = static_cast<size_t>(inner) * wpe;
    for (int64_t o = 0; o < outer; ++o) {
        uint64_t* dst = &out.words_[o * axis_total * inner_words];
        for (const auto& p : parts) {
            int64_t ax = p.shape()[axis];
            std::memcpy(dst, &p.words()[o * ax * inner_words],
                        ax * inner_words * sizeof(uint64_t));
            dst += ax * inner_words;
        }
    }
    return out;
}

RingTensor RingTensor::slice_axis0(int64_t index) const {
    if (shape_.empty() || index < 0 || index >= shape_[0])
        fail(ErrorCode::ShapeMismatch, "slice index out of range");
    Shape sub(shape_.begin() + 1, shape_.end());
    if (sub.empty()) sub = {1};
    size_t block = static_cast<size_t>(shape_numel(sub)) * wpe();
    std::vector<uint64_t> w(words_.begin() + index * block, words_.begin() + (index + 1) * block);
    return from_words(backend_, sub, std::move(w));
}

std::vector<uint8_t> RingTensor::to_bytes() const {
    std::vector<uint8_t> out(words_.size() * 8);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), words_.data(), out.size());
    } else {
        for (size_t i = 0; i < words_.size(); ++i) {
            uint64_t w = words_[i];
            for (int b = 0; b < 8; ++b) out[i * 8 + b] = static_cast<uint8_t>(w >> (8 * b));
        }
    }
    return out;
}

RingTensor RingTensor::from_bytes(Backend backend, Shape shape, std::span<const uint8_t> bytes) {
    size_t nwords = static_cast<size_t>(shape_numel(shape)) * words_per_element(backend);
    if (bytes.size() != nwords * 8)
        fail(ErrorCode::ShapeMismatch, "byte count does not match tensor shape");
    std::vector<uint64_t> words(nwords);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(words.data(), bytes.data(), bytes.size());
    } else {
        for (size_t i = 0; i < nwords; ++i) {
            uint64_t w = 0;
            for (int b = 7; b >= 0; --b) w = (w << 8) | bytes[i * 8 + b];
            words[i] = w;
        }
    }
    return from_words(backend, std::move(shape), std::move(words));
}

bool RingTensor::equals(const RingTensor& other) const {
    return backend_ == other.backend_ && shape_ == other.shape_ && words_ == other.words_;
}

}  // namespace trishare
