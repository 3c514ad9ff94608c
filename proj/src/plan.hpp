#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fixedpoint.hpp"
#include "sharing.hpp"

namespace trishare {

enum class NodeKind : uint8_t {
    Input = 0,        // plaintext at a named provider, shared to the servers
    PublicConst,      // value embedded in the plan, known to both servers
    Promote,          // public value as a private tensor (share0 = c, share1 = 0)
    Mask,             // private -> masked, one online exchange
    Add,
    Sub,
    Neg,
    AddPlain,
    MulPlain,
    Mul,              // masked x masked -> private, local
    MatMul,
    Conv2D,
    Truncate,
    Transpose,
    Reshape,
    Stack,
    Concat,
    ReduceSumAxis,
    Output,           // shares sent to a named receiver
};

const char* node_kind_name(NodeKind k);

// How a node's value is held by a server.
enum class SharingKind : uint8_t { Public = 0, Private = 1, Masked = 2 };

// Plaintext post-processing applied by the output receiver after decoding.
enum class PostOp : uint8_t { None = 0, Sigmoid = 1, Softmax = 2, Argmax = 3 };

struct PlanNode {
    uint32_t id = 0;
    NodeKind kind = NodeKind::Input;
    std::vector<uint32_t> inputs;
    Shape shape;
    int fp_scale = 0;
    SharingKind sharing = SharingKind::Private;

    int64_t stride = 1;           // Conv2D
    int axis = 0;                 // Stack / Concat / ReduceSumAxis
    std::vector<int> perm;        // Transpose
    std::string party;            // Input provider / Output receiver name
    std::string name;             // tensor name for inputs/outputs
    PostOp post = PostOp::None;   // Output only
    RingTensor constant;          // PublicConst payload
};

class ComputationPlan {
  public:
    Backend backend = Backend::Int64;
    FixedPointConfig fp;
    TruncationConfig trunc() const { return {trunc_mode, fp}; }
    TruncationMode trunc_mode = TruncationMode::Interactive;

    std::vector<PlanNode> nodes;
    std::vector<uint32_t> output_nodes;

    const PlanNode& node(uint32_t id) const { return nodes.at(id); }
    // Stable across processes building the same plan; used for desync checks
    // and to label per-plan randomness.
    uint64_t plan_id() const;
    std::vector<std::string> provider_names() const;
    std::vector<std::string> receiver_names() const;
};

// Incremental plan construction with eager shape/scale checking. Masking is
// explicit; mul/matmul/conv2d reject inputs that are not mask outputs, and
// masking the same node twice returns the existing mask node.
class PlanBuilder {
  public:
    PlanBuilder(Backend backend, FixedPointConfig fp, TruncationMode mode);

    uint32_t input(const std::string& provider, const std::string& name, const Shape& shape);
    uint32_t public_const(const RingTensor& value, int fp_scale);
    uint32_t public_const_real(const RealTensor& value);  // encoded at scale f
    uint32_t promote(uint32_t const_node);
    uint32_t mask(uint32_t x);
    uint32_t add(uint32_t a, uint32_t b);
    uint32_t sub(uint32_t a, uint32_t b);
    uint32_t neg(uint32_t a);
    uint32_t add_plain(uint32_t a, uint32_t c);
    uint32_t mul_plain(uint32_t a, uint32_t c);
    uint32_t mul(uint32_t x, uint32_t y);
    uint32_t matmul(uint32_t x, uint32_t y);
    uint32_t conv2d(uint32_t x, uint32_t kernel, int64_t stride);
    uint32_t truncate(uint32_t x);
    uint32_t transpose(uint32_t x, const std::vector<int>& perm);
    uint32_t reshape(uint32_t x, const Shape& shape);
    uint32_t stack(const std::vector<uint32_t>& xs, int axis);
    uint32_t concat(const std::vector<uint32_t>& xs, int axis);
    uint32_t reduce_sum_axis(uint32_t x, int axis);
    uint32_t output(uint32_t x, const std::string& receiver, const std::string& name,
                    PostOp post = PostOp::None);

    const PlanNode& node(uint32_t id) const { return plan_.nodes.at(id); }
    ComputationPlan finish();

  private:
    uint32_t push(PlanNode n);
    const PlanNode& in(uint32_t id, SharingKind expect);
    uint32_t structural(NodeKind kind, const std::vector<uint32_t>& xs, Shape out_shape);

    ComputationPlan plan_;
    bool finished_ = false;
    std::map<uint32_t, uint32_t> mask_of_;  // node id -> its mask node
};

// Applies a structural node (Transpose/Reshape/Stack/Concat/ReduceSumAxis) to
// one constituent tensor of each input, in input order. Shared by the party
// executor, the full-view simulator, and offline mask lineage tracking.
RingTensor eval_structural(const PlanNode& n, const std::vector<RingTensor>& ins);

// Receiver-side plaintext post-processing; Softmax and Argmax act on the last
// axis, Argmax drops it.
RealTensor apply_post(PostOp post, const RealTensor& x);

// ---- static communication predictor ----

struct LinkKey {
    int sender = 0;
    int receiver = 0;
    int phase = 0;  // 0 offline, 1 online
    auto operator<=>(const LinkKey&) const = default;
};

struct LinkCost {
    uint64_t messages = 0;
    uint64_t payload_bytes = 0;
    uint64_t frame_bytes = 0;  // payload + length prefix + header + dims

    LinkCost& operator+=(const LinkCost& o) {
        messages += o.messages;
        payload_bytes += o.payload_bytes;
        frame_bytes += o.frame_bytes;
        return *this;
    }
    auto operator<=>(const LinkCost&) const = default;
};

using CostTable = std::map<LinkKey, LinkCost>;

// Wire size of one frame carrying a tensor of this shape (see channel.hpp).
uint64_t frame_wire_bytes(Backend backend, const Shape& shape);

// Exact per-link message/byte counts the protocol will produce for this plan:
// offline distribution, input sharing, mask and truncation rounds, output
// reconstruction. party_of maps provider/receiver names to party indices.
CostTable predict_cost(const ComputationPlan& plan, const std::map<std::string, int>& party_of);

std::string cost_table_str(const CostTable& t);
// Same CSV with party indices replaced by names where available.
std::string cost_table_str(const CostTable& t, const std::vector<std::string>& party_names);

}  // namespace trishare
