#pragma once

#include <map>

#include "channel.hpp"
#include "plan.hpp"

namespace trishare {

struct MaskMaterial {
    RingTensor a;
    RingTensor a_shares[2];
};

// Everything the crypto producer creates for one plan. Only the per-party
// projections (a_i, product share i, r_i, r'_i) ever leave S2.
struct OfflineBundle {
    uint64_t plan_id = 0;
    std::map<uint32_t, MaskMaterial> masks;
    std::map<uint32_t, ProductTriple> triples;    // mul/matmul/conv2d nodes
    std::map<uint32_t, TruncPair> truncs;         // interactive truncate nodes

    bool empty() const { return masks.empty() && triples.empty() && truncs.empty(); }
};

// Walks the plan in node order drawing all randomness from prg. Masks of
// structurally transformed masked tensors are tracked so product triples use
// the effective mask of each bilinear operand.
OfflineBundle generate_offline(const ComputationPlan& plan, Prg& prg);

// Sends each party its projection, one frame per (node, tensor), phase
// offline. Slot 0 carries a_i / product share / r_i; slot 1 carries r'_i.
void distribute(const OfflineBundle& bundle, const ComputationPlan& plan, uint64_t session_id,
                Channel& to_s0, Channel& to_s1);

// Server-side store of received offline material; entries are consumed once.
class OfflineStore {
  public:
    void put(uint32_t node, uint8_t slot, RingTensor t);
    RingTensor take(uint32_t node, uint8_t slot);
    size_t size() const { return mat_.size(); }

  private:
    std::map<std::pair<uint32_t, uint8_t>, RingTensor> mat_;
};

// Receives exactly the material the plan says this server needs.
OfflineStore receive_offline(const ComputationPlan& plan, uint64_t session_id, Channel& from_s2,
                             int timeout_ms);

}  // namespace trishare
