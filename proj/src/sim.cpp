#include "sim.hpp"

namespace trishare {

namespace {

struct SimValue {
    PrivateTensor priv;
    MaskedTensor masked;
    RingTensor pub;
};

}  // namespace

std::map<std::string, OutputResult> run_fullview(const ComputationPlan& plan,
                                                 const SessionConfig& cfg,
                                                 const SessionInputs& inputs) {
    if (!cfg.seeded)
        fail(ErrorCode::BadConfig, "full-view simulation needs a seed to align randomness");
    Prg offline_prg(cfg.seed, "offline");
    OfflineBundle bundle = generate_offline(plan, offline_prg);
    std::map<std::string, Prg> provider_prg;
    auto prg_of = [&](const std::string& party) -> Prg& {
        auto it = provider_prg.find(party);
        if (it == provider_prg.end())
            it = provider_prg.emplace(party, Prg(cfg.seed, "input/" + party)).first;
        return it->second;
    };

    std::vector<SimValue> vals(plan.nodes.size());
    std::map<std::string, OutputResult> outputs;
    int f = plan.fp.fractional_bits;
    for (const PlanNode& n : plan.nodes) {
        SimValue& out = vals[n.id];
        auto priv_in = [&](int k) -> const PrivateTensor& { return vals[n.inputs[k]].priv; };
        switch (n.kind) {
            case NodeKind::Input: {
                auto pit = inputs.find(n.party);
                if (pit == inputs.end() || !pit->second.count(n.name))
                    fail(ErrorCode::InvalidArgument, "no value supplied for input " + n.name);
                const RealTensor& v = pit->second.at(n.name);
                if (v.shape != n.shape)
                    fail(ErrorCode::ShapeMismatch, "input " + n.name + " is " +
                                                       shape_str(v.shape) + ", plan wants " +
                                                       shape_str(n.shape));
                out.priv = share(encode(v, plan.fp, plan.backend), f, prg_of(n.party));
                break;
            }
            case NodeKind::PublicConst:
                out.pub = n.constant;
                break;
            case NodeKind::Promote:
                out.priv = {{vals[n.inputs[0]].pub, RingTensor::zeros(plan.backend, n.shape)},
                            n.fp_scale};
                break;
            case NodeKind::Mask: {
                const MaskMaterial& m = bundle.masks.at(n.id);
                MaskedTensor& mt = out.masked;
                mt.mask = m.a;
                mt.mask_shares[0] = m.a_shares[0];
                mt.mask_shares[1] = m.a_shares[1];
                mt.alpha = priv_in(0).shares[0].sub(m.a_shares[0]).add(
                    priv_in(0).shares[1].sub(m.a_shares[1]));
                mt.fp_scale = n.fp_scale;
                break;
            }
            case NodeKind::Add:
                out.priv = add(priv_in(0), priv_in(1));
                break;
            case NodeKind::Sub:
                out.priv = sub(priv_in(0), priv_in(1));
                break;
            case NodeKind::Neg:
                out.priv = neg(priv_in(0));
                break;
            case NodeKind::AddPlain:
                out.priv = add_plain(priv_in(0), vals[n.inputs[1]].pub,
                                     plan.nodes[n.inputs[1]].fp_scale);
                break;
            case NodeKind::MulPlain:
                out.priv = mul_plain(priv_in(0), vals[n.inputs[1]].pub,
                                     plan.nodes[n.inputs[1]].fp_scale);
                break;
            case NodeKind::Mul:
            case NodeKind::MatMul:
            case NodeKind::Conv2D: {
                BilinearKind kind = n.kind == NodeKind::Mul      ? BilinearKind::Mul
                                    : n.kind == NodeKind::MatMul ? BilinearKind::MatMul
                                                                 : BilinearKind::Conv2D;
                out.priv = bilinear_masked(kind, vals[n.inputs[0]].masked,
                                           vals[n.inputs[1]].masked, bundle.triples.at(n.id),
                                           n.stride);
                break;
            }
            case NodeKind::Truncate: {
                const TruncPair* mat = nullptr;
                if (plan.trunc_mode == TruncationMode::Interactive) mat = &bundle.truncs.at(n.id);
                out.priv = truncate(priv_in(0), plan.trunc(), mat);
                break;
            }
            case NodeKind::Transpose:
            case NodeKind::Reshape:
            case NodeKind::Stack:
            case NodeKind::Concat:
            case NodeKind::ReduceSumAxis: {
                bool masked = n.sharing == SharingKind::Masked;
                auto gather = [&](auto pick) {
                    std::vector<RingTensor> parts;
                    for (uint32_t id : n.inputs) parts.push_back(pick(vals[id]));
                    return eval_structural(n, parts);
                };
                if (masked) {
                    MaskedTensor& mt = out.masked;
                    mt.mask = gather([](SimValue& v) { return v.masked.mask; });
                    mt.mask_shares[0] = gather([](SimValue& v) { return v.masked.mask_shares[0]; });
                    mt.mask_shares[1] = gather([](SimValue& v) { return v.masked.mask_shares[1]; });
                    mt.alpha = gather([](SimValue& v) { return v.masked.alpha; });
                    mt.fp_scale = n.fp_scale;
                } else {
                    out.priv = {{gather([](SimValue& v) { return v.priv.shares[0]; }),
                                 gather([](SimValue& v) { return v.priv.shares[1]; })},
                                n.fp_scale};
                }
                break;
            }
            case NodeKind::Output: {
                OutputResult r;
                r.name = n.name;
                r.raw = reconstruct(priv_in(0));
                r.decoded = decode(r.raw, plan.fp, n.fp_scale);
                r.post = n.post;
                r.post_value = apply_post(n.post, r.decoded);
                r.fp_scale = n.fp_scale;
                outputs[n.name] = std::move(r);
                break;
            }
        }
    }
    return outputs;
}

}  // namespace trishare
