#include "sharing.hpp"

namespace trishare {

namespace {

void check_scales(int a, int b, const char* what) {
    if (a != b)
        fail(ErrorCode::ScaleMismatch, std::string(what) + " on fp scales " + std::to_string(a) +
                                           " vs " + std::to_string(b));
}

}  // namespace

RingTensor ring_scalar_int(Backend backend, u128 value) {
    RingTensor t(backend, {1});
    t.set_element(0, value);
    return t;
}

PrivateTensor share(const RingTensor& x, int fp_scale, Prg& prg) {
    PrivateTensor p;
    p.shares[0] = RingTensor::sample_uniform(x.backend(), x.shape(), prg);
    p.shares[1] = x.sub(p.shares[0]);
    p.fp_scale = fp_scale;
    return p;
}

RingTensor reconstruct(const PrivateTensor& p) {
    return p.shares[0].add(p.shares[1]);
}

MaskedTensor mask_with(const PrivateTensor& x, const RingTensor& a, Prg& mask_share_prg) {
    MaskedTensor m;
    m.mask = a;
    m.mask_shares[0] = RingTensor::sample_uniform(a.backend(), a.shape(), mask_share_prg);
    m.mask_shares[1] = a.sub(m.mask_shares[0]);
    // alpha as the servers compute it: (x0 - a0) + (x1 - a1).
    m.alpha = x.shares[0].sub(m.mask_shares[0]).add(x.shares[1].sub(m.mask_shares[1]));
    m.fp_scale = x.fp_scale;
    return m;
}

PrivateTensor add(const PrivateTensor& a, const PrivateTensor& b) {
    check_scales(a.fp_scale, b.fp_scale, "add");
    return {{a.shares[0].add(b.shares[0]), a.shares[1].add(b.shares[1])}, a.fp_scale};
}

PrivateTensor sub(const PrivateTensor& a, const PrivateTensor& b) {
    check_scales(a.fp_scale, b.fp_scale, "sub");
    return {{a.shares[0].sub(b.shares[0]), a.shares[1].sub(b.shares[1])}, a.fp_scale};
}

PrivateTensor neg(const PrivateTensor& a) {
    return {{a.shares[0].neg(), a.shares[1].neg()}, a.fp_scale};
}

PrivateTensor add_plain(const PrivateTensor& a, const RingTensor& c, int c_scale) {
    check_scales(a.fp_scale, c_scale, "add_plain");
    return {{a.shares[0].add(c), a.shares[1]}, a.fp_scale};
}

PrivateTensor mul_plain(const PrivateTensor& a, const RingTensor& c, int c_scale) {
    return {{a.shares[0].mul(c), a.shares[1].mul(c)}, a.fp_scale + c_scale};
}

namespace kernels {

BilinearFn bilinear_fn(BilinearKind kind, int64_t conv_stride) {
    switch (kind) {
        case BilinearKind::Mul:
            return [](const RingTensor& u, const RingTensor& v) { return u.mul(v); };
        case BilinearKind::MatMul:
            return [](const RingTensor& u, const RingTensor& v) { return u.matmul(v); };
        case BilinearKind::Conv2D:
            return [conv_stride](const RingTensor& u, const RingTensor& v) {
                return u.conv2d(v, conv_stride);
            };
    }
    fail(ErrorCode::InvalidArgument, "unknown bilinear kind");
}

RingTensor bilinear_share(int party, const RingTensor& alpha_x, const RingTensor& alpha_y,
                          const RingTensor& ax_share, const RingTensor& ay_share,
                          const RingTensor& prod_share, const BilinearFn& B) {
    RingTensor z = B(alpha_x, ay_share).add(B(ax_share, alpha_y)).add(prod_share);
    if (party == 1) z = z.add(B(alpha_x, alpha_y));
    return z;
}

RingTensor trunc_open_addend(int party, const RingTensor& x_share, const RingTensor& r_share,
                             const FixedPointConfig& cfg) {
    RingTensor d = x_share.add(r_share);
    if (party == 1) {
        // Offset 2^b shifts the signed value into [0, 2^(b+1)) before opening.
        d = d.add(ring_scalar_int(d.backend(), static_cast<u128>(1) << cfg.bound_bits));
    }
    return d;
}

RingTensor trunc_result_share(int party, const RingTensor& c_open, const RingTensor& rp_share,
                              const FixedPointConfig& cfg) {
    if (party == 0) return rp_share.neg();
    int f = cfg.fractional_bits;
    RingTensor q(c_open.backend(), c_open.shape());
    for (int64_t i = 0; i < c_open.numel(); ++i) {
        // c = (x + 2^b) + r never wraps (b + kappa + 1 <= ring bits), so the
        // lifted element is the true integer and division is public.
        q.set_element(i, c_open.element(i) >> f);
    }
    u128 offset = static_cast<u128>(1) << (cfg.bound_bits - f);
    return q.sub(rp_share).sub(ring_scalar_int(c_open.backend(), offset));
}

RingTensor trunc_local_share(int party, const RingTensor& x_share, int f) {
    if (x_share.backend() != Backend::Int64)
        fail(ErrorCode::ModeUnsupported, "optimistic truncation requires the Int64 backend");
    RingTensor out(x_share.backend(), x_share.shape());
    const auto& in = x_share.words();
    auto& w = out.mutable_words();
    for (size_t i = 0; i < in.size(); ++i) {
        w[i] = party == 0 ? in[i] >> f : 0 - ((0 - in[i]) >> f);
    }
    return out;
}

}  // namespace kernels

PrivateTensor bilinear_masked(BilinearKind kind, const MaskedTensor& x, const MaskedTensor& y,
                              const ProductTriple& t, int64_t conv_stride) {
    if (x.backend() != y.backend())
        fail(ErrorCode::BackendMismatch, "bilinear operands on different backends");
    auto B = kernels::bilinear_fn(kind, conv_stride);
    PrivateTensor z;
    for (int i = 0; i < 2; ++i) {
        z.shares[i] = kernels::bilinear_share(i, x.alpha, y.alpha, x.mask_shares[i],
                                              y.mask_shares[i], t.prod_shares[i], B);
    }
    z.fp_scale = x.fp_scale + y.fp_scale;
    return z;
}

PrivateTensor mul_masked(const MaskedTensor& x, const MaskedTensor& y, const ProductTriple& t) {
    return bilinear_masked(BilinearKind::Mul, x, y, t);
}

PrivateTensor truncate(const PrivateTensor& x, const TruncationConfig& cfg,
                       const TruncPair* material) {
    int f = cfg.fp.fractional_bits;
    if (x.fp_scale != 2 * f)
        fail(ErrorCode::ScaleMismatch,
             "truncate expects fp scale 2f, got " + std::to_string(x.fp_scale));
    PrivateTensor z;
    z.fp_scale = f;
    if (cfg.mode == TruncationMode::LocalOptimistic) {
        for (int i = 0; i < 2; ++i) {
            z.shares[i] = kernels::trunc_local_share(i, x.shares[i], f);
        }
        return z;
    }
    if (material == nullptr)
        fail(ErrorCode::MissingTriple, "interactive truncation without offline material");
    RingTensor d0 = kernels::trunc_open_addend(0, x.shares[0], material->r_shares[0], cfg.fp);
    RingTensor d1 = kernels::trunc_open_addend(1, x.shares[1], material->r_shares[1], cfg.fp);
    RingTensor c = d0.add(d1);
    for (int i = 0; i < 2; ++i) {
        z.shares[i] = kernels::trunc_result_share(i, c, material->rp_shares[i], cfg.fp);
    }
    return z;
}

PrivateTensor apply_structural(const PrivateTensor& p,
                               const std::function<RingTensor(const RingTensor&)>& op) {
    return {{op(p.shares[0]), op(p.shares[1])}, p.fp_scale};
}

MaskedTensor apply_structural(const MaskedTensor& m,
                              const std::function<RingTensor(const RingTensor&)>& op) {
    MaskedTensor out;
    out.mask = op(m.mask);
    out.mask_shares[0] = op(m.mask_shares[0]);
    out.mask_shares[1] = op(m.mask_shares[1]);
    out.alpha = op(m.alpha);
    out.fp_scale = m.fp_scale;
    return out;
}

RingTensor sample_mask(Backend backend, const Shape& shape, Prg& prg) {
    return RingTensor::sample_uniform(backend, shape, prg);
}

ProductTriple make_product_triple(BilinearKind kind, const RingTensor& ax, const RingTensor& ay,
                                  int64_t conv_stride, Prg& prg) {
    auto B = kernels::bilinear_fn(kind, conv_stride);
    RingTensor prod = B(ax, ay);
    ProductTriple t;
    t.prod_shares[0] = RingTensor::sample_uniform(prod.backend(), prod.shape(), prg);
    t.prod_shares[1] = prod.sub(t.prod_shares[0]);
    return t;
}

TruncPair make_trunc_pair(Backend backend, const Shape& shape, const FixedPointConfig& cfg,
                          Prg& prg) {
    int f = cfg.fractional_bits;
    int rb = cfg.bound_bits + cfg.stat_security;
    RingTensor r(backend, shape), rp(backend, shape);
    for (int64_t i = 0; i < r.numel(); ++i) {
        u128 rv = prg.next_bits128(rb);
        r.set_element(i, rv);
        rp.set_element(i, rv >> f);
    }
    TruncPair out;
    out.r_shares[0] = RingTensor::sample_uniform(backend, shape, prg);
    out.r_shares[1] = r.sub(out.r_shares[0]);
    out.rp_shares[0] = RingTensor::sample_uniform(backend, shape, prg);
    out.rp_shares[1] = rp.sub(out.rp_shares[0]);
    return out;
}

}  // namespace trishare
