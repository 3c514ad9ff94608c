#include "offline.hpp"

namespace trishare {

namespace {

BilinearKind bilinear_kind(NodeKind k) {
    switch (k) {
        case NodeKind::Mul: return BilinearKind::Mul;
        case NodeKind::MatMul: return BilinearKind::MatMul;
        case NodeKind::Conv2D: return BilinearKind::Conv2D;
        default: fail(ErrorCode::InvalidArgument, "not a bilinear node");
    }
}

bool is_bilinear(NodeKind k) {
    return k == NodeKind::Mul || k == NodeKind::MatMul || k == NodeKind::Conv2D;
}

}  // namespace

OfflineBundle generate_offline(const ComputationPlan& plan, Prg& prg) {
    OfflineBundle b;
    b.plan_id = plan.plan_id();
    std::map<uint32_t, RingTensor> mask_of;  // effective mask of masked-kind nodes
    for (const PlanNode& n : plan.nodes) {
        if (shape_numel(n.shape) <= 0)
            fail(ErrorCode::UnresolvedShape, "node " + std::to_string(n.id) + " has no shape");
        if (n.kind == NodeKind::Mask) {
            MaskMaterial m;
            m.a = sample_mask(plan.backend, n.shape, prg);
            m.a_shares[0] = RingTensor::sample_uniform(plan.backend, n.shape, prg);
            m.a_shares[1] = m.a.sub(m.a_shares[0]);
            mask_of.emplace(n.id, m.a);
            b.masks.emplace(n.id, std::move(m));
        } else if (is_bilinear(n.kind)) {
            b.triples.emplace(n.id, make_product_triple(bilinear_kind(n.kind),
                                                        mask_of.at(n.inputs[0]),
                                                        mask_of.at(n.inputs[1]), n.stride, prg));
        } else if (n.kind == NodeKind::Truncate &&
                   plan.trunc_mode == TruncationMode::Interactive) {
            b.truncs.emplace(n.id, make_trunc_pair(plan.backend, n.shape, plan.fp, prg));
        } else if (n.sharing == SharingKind::Masked) {
            std::vector<RingTensor> ins;
            for (uint32_t i : n.inputs) ins.push_back(mask_of.at(i));
            mask_of.emplace(n.id, eval_structural(n, ins));
        }
    }
    return b;
}

void distribute(const OfflineBundle& bundle, const ComputationPlan& plan, uint64_t session_id,
                Channel& to_s0, Channel& to_s1) {
    Channel* chans[2] = {&to_s0, &to_s1};
    auto emit = [&](uint32_t node, int slot, const RingTensor* shares) {
        for (int i = 0; i < 2; ++i)
            chans[i]->send(make_frame(session_id, bundle.plan_id, node, 2, i, kPhaseOffline, slot,
                                      shares[i]));
    };
    for (const PlanNode& n : plan.nodes) {
        if (auto it = bundle.masks.find(n.id); it != bundle.masks.end()) {
            emit(n.id, 0, it->second.a_shares);
        } else if (auto jt = bundle.triples.find(n.id); jt != bundle.triples.end()) {
            emit(n.id, 0, jt->second.prod_shares);
        } else if (auto kt = bundle.truncs.find(n.id); kt != bundle.truncs.end()) {
            emit(n.id, 0, kt->second.r_shares);
            emit(n.id, 1, kt->second.rp_shares);
        }
    }
}

void OfflineStore::put(uint32_t node, uint8_t slot, RingTensor t) {
    mat_[{node, slot}] = std::move(t);
}

RingTensor OfflineStore::take(uint32_t node, uint8_t slot) {
    auto it = mat_.find({node, slot});
    if (it == mat_.end())
        fail(ErrorCode::MissingTriple, "no offline material for node " + std::to_string(node) +
                                           " slot " + std::to_string(slot));
    RingTensor t = std::move(it->second);
    mat_.erase(it);
    return t;
}

namespace {

RingTensor recv_checked(Channel& ch, uint64_t session_id, uint64_t plan_id, uint32_t node,
                        int slot, Backend backend, const Shape& expect, int timeout_ms) {
    Frame f = ch.recv(node, static_cast<uint8_t>(slot), kPhaseOffline, timeout_ms);
    if (f.h.session_id != session_id || f.h.plan_id != plan_id)
        fail(ErrorCode::ProtocolDesync, "offline frame from another session or plan");
    if (f.h.backend != static_cast<uint8_t>(backend) || f.shape() != expect)
        fail(ErrorCode::ProtocolDesync,
             "offline frame for node " + std::to_string(node) + " has wrong layout");
    return tensor_from_frame(f);
}

}  // namespace

OfflineStore receive_offline(const ComputationPlan& plan, uint64_t session_id, Channel& from_s2,
                             int timeout_ms) {
    OfflineStore store;
    uint64_t plan_id = plan.plan_id();
    auto grab = [&](const PlanNode& n, int slot) {
        store.put(n.id, static_cast<uint8_t>(slot),
                  recv_checked(from_s2, session_id, plan_id, n.id, slot, plan.backend, n.shape,
                               timeout_ms));
    };
    for (const PlanNode& n : plan.nodes) {
        switch (n.kind) {
            case NodeKind::Mask:
            case NodeKind::Mul:
            case NodeKind::MatMul:
            case NodeKind::Conv2D:
                grab(n, 0);
                break;
            case NodeKind::Truncate:
                if (plan.trunc_mode == TruncationMode::Interactive) {
                    grab(n, 0);
                    grab(n, 1);
                }
                break;
            default:
                break;
        }
    }
    return store;
}

}  // namespace trishare
