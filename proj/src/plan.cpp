#include "plan.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "channel.hpp"

namespace trishare {

const char* node_kind_name(NodeKind k) {
    switch (k) {
        case NodeKind::Input: return "input";
        case NodeKind::PublicConst: return "public_const";
        case NodeKind::Promote: return "promote";
        case NodeKind::Mask: return "mask";
        case NodeKind::Add: return "add";
        case NodeKind::Sub: return "sub";
        case NodeKind::Neg: return "neg";
        case NodeKind::AddPlain: return "add_plain";
        case NodeKind::MulPlain: return "mul_plain";
        case NodeKind::Mul: return "mul";
        case NodeKind::MatMul: return "matmul";
        case NodeKind::Conv2D: return "conv2d";
        case NodeKind::Truncate: return "truncate";
        case NodeKind::Transpose: return "transpose";
        case NodeKind::Reshape: return "reshape";
        case NodeKind::Stack: return "stack";
        case NodeKind::Concat: return "concat";
        case NodeKind::ReduceSumAxis: return "reduce_sum_axis";
        case NodeKind::Output: return "output";
    }
    return "?";
}

namespace {

void put_u64(std::string& s, uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

}  // namespace

uint64_t ComputationPlan::plan_id() const {
    std::string buf;
    buf.push_back(static_cast<char>(backend));
    buf.push_back(static_cast<char>(trunc_mode));
    put_u64(buf, static_cast<uint64_t>(fp.fractional_bits));
    put_u64(buf, static_cast<uint64_t>(fp.bound_bits));
    put_u64(buf, static_cast<uint64_t>(fp.stat_security));
    for (const PlanNode& n : nodes) {
        buf.push_back(static_cast<char>(n.kind));
        put_u64(buf, n.id);
        put_u64(buf, n.inputs.size());
        for (uint32_t i : n.inputs) put_u64(buf, i);
        put_u64(buf, n.shape.size());
        for (int64_t d : n.shape) put_u64(buf, static_cast<uint64_t>(d));
        put_u64(buf, static_cast<uint64_t>(n.fp_scale));
        put_u64(buf, static_cast<uint64_t>(n.stride));
        put_u64(buf, static_cast<uint64_t>(n.axis));
        for (int p : n.perm) put_u64(buf, static_cast<uint64_t>(p));
        buf += n.party;
        buf.push_back(0);
        buf += n.name;
        buf.push_back(0);
        buf.push_back(static_cast<char>(n.post));
        for (uint64_t w : n.constant.words()) put_u64(buf, w);
    }
    return fnv1a(buf);
}

std::vector<std::string> ComputationPlan::provider_names() const {
    std::vector<std::string> out;
    for (const PlanNode& n : nodes) {
        if (n.kind == NodeKind::Input && std::find(out.begin(), out.end(), n.party) == out.end())
            out.push_back(n.party);
    }
    return out;
}

std::vector<std::string> ComputationPlan::receiver_names() const {
    std::vector<std::string> out;
    for (const PlanNode& n : nodes) {
        if (n.kind == NodeKind::Output && std::find(out.begin(), out.end(), n.party) == out.end())
            out.push_back(n.party);
    }
    return out;
}

PlanBuilder::PlanBuilder(Backend backend, FixedPointConfig fp, TruncationMode mode) {
    fp.validate(backend);
    if (mode == TruncationMode::LocalOptimistic && backend == Backend::Crt)
        fail(ErrorCode::ModeUnsupported, "optimistic truncation requires the Int64 backend");
    plan_.backend = backend;
    plan_.fp = fp;
    plan_.trunc_mode = mode;
}

uint32_t PlanBuilder::push(PlanNode n) {
    if (finished_) fail(ErrorCode::InvalidArgument, "plan already finished");
    n.id = static_cast<uint32_t>(plan_.nodes.size());
    plan_.nodes.push_back(std::move(n));
    return plan_.nodes.back().id;
}

const PlanNode& PlanBuilder::in(uint32_t id, SharingKind expect) {
    if (id >= plan_.nodes.size())
        fail(ErrorCode::InvalidArgument, "unknown node id " + std::to_string(id));
    const PlanNode& n = plan_.nodes[id];
    if (n.sharing != expect)
        fail(ErrorCode::InvalidArgument,
             std::string(node_kind_name(n.kind)) + " output is not " +
                 (expect == SharingKind::Masked   ? "masked"
                  : expect == SharingKind::Private ? "private"
                                                   : "public"));
    return n;
}

uint32_t PlanBuilder::input(const std::string& provider, const std::string& name,
                            const Shape& shape) {
    if (shape_numel(shape) <= 0) fail(ErrorCode::UnresolvedShape, "input shape must be static");
    PlanNode n;
    n.kind = NodeKind::Input;
    n.shape = shape;
    n.fp_scale = plan_.fp.fractional_bits;
    n.sharing = SharingKind::Private;
    n.party = provider;
    n.name = name;
    return push(std::move(n));
}

uint32_t PlanBuilder::public_const(const RingTensor& value, int fp_scale) {
    if (value.backend() != plan_.backend)
        fail(ErrorCode::BackendMismatch, "constant encoded for a different backend");
    PlanNode n;
    n.kind = NodeKind::PublicConst;
    n.shape = value.shape();
    n.fp_scale = fp_scale;
    n.sharing = SharingKind::Public;
    n.constant = value;
    return push(std::move(n));
}

uint32_t PlanBuilder::public_const_real(const RealTensor& value) {
    return public_const(encode(value, plan_.fp, plan_.backend), plan_.fp.fractional_bits);
}

uint32_t PlanBuilder::promote(uint32_t const_node) {
    const PlanNode& c = in(const_node, SharingKind::Public);
    PlanNode n;
    n.kind = NodeKind::Promote;
    n.inputs = {const_node};
    n.shape = c.shape;
    n.fp_scale = c.fp_scale;
    n.sharing = SharingKind::Private;
    return push(std::move(n));
}

uint32_t PlanBuilder::mask(uint32_t x) {
    auto it = mask_of_.find(x);
    if (it != mask_of_.end()) return it->second;
    const PlanNode& xn = in(x, SharingKind::Private);
    if (xn.fp_scale != plan_.fp.fractional_bits)
        fail(ErrorCode::ScaleMismatch,
             "mask expects fp scale f; truncate before masking a product");
    PlanNode n;
    n.kind = NodeKind::Mask;
    n.inputs = {x};
    n.shape = xn.shape;
    n.fp_scale = xn.fp_scale;
    n.sharing = SharingKind::Masked;
    uint32_t id = push(std::move(n));
    mask_of_[x] = id;
    return id;
}

uint32_t PlanBuilder::add(uint32_t a, uint32_t b) {
    const PlanNode& an = in(a, SharingKind::Private);
    const PlanNode& bn = in(b, SharingKind::Private);
    if (an.fp_scale != bn.fp_scale) fail(ErrorCode::ScaleMismatch, "add on different fp scales");
    if (an.shape != bn.shape)
        fail(ErrorCode::ShapeMismatch,
             "add on shapes " + shape_str(an.shape) + " vs " + shape_str(bn.shape));
    PlanNode n;
    n.kind = NodeKind::Add;
    n.inputs = {a, b};
    n.shape = an.shape;
    n.fp_scale = an.fp_scale;
    return push(std::move(n));
}

uint32_t PlanBuilder::sub(uint32_t a, uint32_t b) {
    uint32_t id = add(a, b);
    plan_.nodes[id].kind = NodeKind::Sub;
    return id;
}

uint32_t PlanBuilder::neg(uint32_t a) {
    const PlanNode& an = in(a, SharingKind::Private);
    PlanNode n;
    n.kind = NodeKind::Neg;
    n.inputs = {a};
    n.shape = an.shape;
    n.fp_scale = an.fp_scale;
    return push(std::move(n));
}

uint32_t PlanBuilder::add_plain(uint32_t a, uint32_t c) {
    const PlanNode& an = in(a, SharingKind::Private);
    const PlanNode& cn = in(c, SharingKind::Public);
    if (an.fp_scale != cn.fp_scale)
        fail(ErrorCode::ScaleMismatch, "add_plain on different fp scales");
    if (!shape_suffix_broadcasts(cn.shape, an.shape))
        fail(ErrorCode::ShapeMismatch, "constant shape " + shape_str(cn.shape) +
                                           " does not broadcast over " + shape_str(an.shape));
    PlanNode n;
    n.kind = NodeKind::AddPlain;
    n.inputs = {a, c};
    n.shape = an.shape;
    n.fp_scale = an.fp_scale;
    return push(std::move(n));
}

uint32_t PlanBuilder::mul_plain(uint32_t a, uint32_t c) {
    const PlanNode& an = in(a, SharingKind::Private);
    const PlanNode& cn = in(c, SharingKind::Public);
    if (!shape_suffix_broadcasts(cn.shape, an.shape))
        fail(ErrorCode::ShapeMismatch, "constant shape " + shape_str(cn.shape) +
                                           " does not broadcast over " + shape_str(an.shape));
    PlanNode n;
    n.kind = NodeKind::MulPlain;
    n.inputs = {a, c};
    n.shape = an.shape;
    n.fp_scale = an.fp_scale + cn.fp_scale;
    return push(std::move(n));
}

uint32_t PlanBuilder::mul(uint32_t x, uint32_t y) {
    const PlanNode& xn = in(x, SharingKind::Masked);
    const PlanNode& yn = in(y, SharingKind::Masked);
    if (xn.shape != yn.shape)
        fail(ErrorCode::ShapeMismatch,
             "mul on shapes " + shape_str(xn.shape) + " vs " + shape_str(yn.shape));
    PlanNode n;
    n.kind = NodeKind::Mul;
    n.inputs = {x, y};
    n.shape = xn.shape;
    n.fp_scale = xn.fp_scale + yn.fp_scale;
    return push(std::move(n));
}

uint32_t PlanBuilder::matmul(uint32_t x, uint32_t y) {
    const PlanNode& xn = in(x, SharingKind::Masked);
    const PlanNode& yn = in(y, SharingKind::Masked);
    if (xn.shape.size() != 2 || yn.shape.size() != 2 || xn.shape[1] != yn.shape[0])
        fail(ErrorCode::ShapeMismatch,
             "matmul on shapes " + shape_str(xn.shape) + " vs " + shape_str(yn.shape));
    PlanNode n;
    n.kind = NodeKind::MatMul;
    n.inputs = {x, y};
    n.shape = {xn.shape[0], yn.shape[1]};
    n.fp_scale = xn.fp_scale + yn.fp_scale;
    return push(std::move(n));
}

uint32_t PlanBuilder::conv2d(uint32_t x, uint32_t kernel, int64_t stride) {
    const PlanNode& xn = in(x, SharingKind::Masked);
    const PlanNode& kn = in(kernel, SharingKind::Masked);
    PlanNode n;
    n.kind = NodeKind::Conv2D;
    n.inputs = {x, kernel};
    n.shape = conv2d_output_shape(xn.shape, kn.shape, stride);
    n.fp_scale = xn.fp_scale + kn.fp_scale;
    n.stride = stride;
    return push(std::move(n));
}

uint32_t PlanBuilder::truncate(uint32_t x) {
    const PlanNode& xn = in(x, SharingKind::Private);
    int f = plan_.fp.fractional_bits;
    if (xn.fp_scale != 2 * f)
        fail(ErrorCode::ScaleMismatch,
             "truncate expects fp scale 2f, got " + std::to_string(xn.fp_scale));
    PlanNode n;
    n.kind = NodeKind::Truncate;
    n.inputs = {x};
    n.shape = xn.shape;
    n.fp_scale = f;
    return push(std::move(n));
}

uint32_t PlanBuilder::structural(NodeKind kind, const std::vector<uint32_t>& xs, Shape out_shape) {
    if (xs.empty()) fail(ErrorCode::InvalidArgument, "structural op without inputs");
    SharingKind sk = plan_.nodes.at(xs[0]).sharing;
    if (sk == SharingKind::Public)
        fail(ErrorCode::InvalidArgument, "structural ops act on private or masked tensors");
    PlanNode n;
    n.kind = kind;
    for (uint32_t x : xs) {
        const PlanNode& xn = in(x, sk);
        if (xn.fp_scale != plan_.nodes.at(xs[0]).fp_scale)
            fail(ErrorCode::ScaleMismatch, "structural op on mixed fp scales");
        n.inputs.push_back(x);
    }
    n.shape = std::move(out_shape);
    n.fp_scale = plan_.nodes.at(xs[0]).fp_scale;
    n.sharing = sk;
    return push(std::move(n));
}

uint32_t PlanBuilder::transpose(uint32_t x, const std::vector<int>& perm) {
    const PlanNode& xn = plan_.nodes.at(x);
    if (perm.size() != xn.shape.size())
        fail(ErrorCode::ShapeMismatch, "transpose perm rank mismatch");
    Shape out(perm.size());
    std::vector<bool> seen(perm.size(), false);
    for (size_t i = 0; i < perm.size(); ++i) {
        if (perm[i] < 0 || static_cast<size_t>(perm[i]) >= perm.size() || seen[perm[i]])
            fail(ErrorCode::InvalidArgument, "transpose perm is not a permutation");
        seen[perm[i]] = true;
        out[i] = xn.shape[perm[i]];
    }
    uint32_t id = structural(NodeKind::Transpose, {x}, out);
    plan_.nodes[id].perm = perm;
    return id;
}

uint32_t PlanBuilder::reshape(uint32_t x, const Shape& shape) {
    const PlanNode& xn = plan_.nodes.at(x);
    if (shape_numel(shape) != shape_numel(xn.shape))
        fail(ErrorCode::ShapeMismatch,
             "reshape " + shape_str(xn.shape) + " -> " + shape_str(shape));
    return structural(NodeKind::Reshape, {x}, shape);
}

uint32_t PlanBuilder::stack(const std::vector<uint32_t>& xs, int axis) {
    if (xs.empty()) fail(ErrorCode::InvalidArgument, "stack of nothing");
    Shape base = plan_.nodes.at(xs[0]).shape;
    for (uint32_t x : xs)
        if (plan_.nodes.at(x).shape != base) fail(ErrorCode::ShapeMismatch, "stack shape mismatch");
    if (axis < 0 || static_cast<size_t>(axis) > base.size())
        fail(ErrorCode::InvalidArgument, "stack axis out of range");
    Shape out = base;
    out.insert(out.begin() + axis, static_cast<int64_t>(xs.size()));
    uint32_t id = structural(NodeKind::Stack, xs, out);
    plan_.nodes[id].axis = axis;
    return id;
}

uint32_t PlanBuilder::concat(const std::vector<uint32_t>& xs, int axis) {
    if (xs.empty()) fail(ErrorCode::InvalidArgument, "concat of nothing");
    Shape base = plan_.nodes.at(xs[0]).shape;
    if (axis < 0 || static_cast<size_t>(axis) >= base.size())
        fail(ErrorCode::InvalidArgument, "concat axis out of range");
    int64_t total = 0;
    for (uint32_t x : xs) {
        Shape s = plan_.nodes.at(x).shape;
        if (s.size() != base.size()) fail(ErrorCode::ShapeMismatch, "concat rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            if (static_cast<int>(d) != axis && s[d] != base[d])
                fail(ErrorCode::ShapeMismatch, "concat shape mismatch");
        total += s[axis];
    }
    Shape out = base;
    out[axis] = total;
    uint32_t id = structural(NodeKind::Concat, xs, out);
    plan_.nodes[id].axis = axis;
    return id;
}

uint32_t PlanBuilder::reduce_sum_axis(uint32_t x, int axis) {
    const PlanNode& xn = plan_.nodes.at(x);
    if (axis < 0 || static_cast<size_t>(axis) >= xn.shape.size())
        fail(ErrorCode::InvalidArgument, "reduce axis out of range");
    Shape out = xn.shape;
    out.erase(out.begin() + axis);
    if (out.empty()) out = {1};
    uint32_t id = structural(NodeKind::ReduceSumAxis, {x}, out);
    plan_.nodes[id].axis = axis;
    return id;
}

uint32_t PlanBuilder::output(uint32_t x, const std::string& receiver, const std::string& name,
                             PostOp post) {
    const PlanNode& xn = in(x, SharingKind::Private);
    PlanNode n;
    n.kind = NodeKind::Output;
    n.inputs = {x};
    n.shape = xn.shape;
    n.fp_scale = xn.fp_scale;
    n.party = receiver;
    n.name = name;
    n.post = post;
    uint32_t id = push(std::move(n));
    plan_.output_nodes.push_back(id);
    return id;
}

ComputationPlan PlanBuilder::finish() {
    finished_ = true;
    return plan_;
}

RingTensor eval_structural(const PlanNode& n, const std::vector<RingTensor>& ins) {
    switch (n.kind) {
        case NodeKind::Transpose: return ins.at(0).transpose(n.perm);
        case NodeKind::Reshape: return ins.at(0).reshape(n.shape);
        case NodeKind::Stack: return RingTensor::stack(ins, n.axis);
        case NodeKind::Concat: return RingTensor::concat(ins, n.axis);
        case NodeKind::ReduceSumAxis: return ins.at(0).reduce_sum_axis(n.axis);
        default:
            fail(ErrorCode::InvalidArgument,
                 std::string(node_kind_name(n.kind)) + " is not structural");
    }
}

RealTensor apply_post(PostOp post, const RealTensor& x) {
    if (post == PostOp::None) return x;
    if (post == PostOp::Sigmoid) {
        RealTensor out = x;
        for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
        return out;
    }
    if (x.shape.empty()) fail(ErrorCode::InvalidArgument, "post op needs a class axis");
    int64_t classes = x.shape.back();
    int64_t rows = x.numel() / classes;
    if (post == PostOp::Softmax) {
        RealTensor out = x;
        for (int64_t r = 0; r < rows; ++r) {
            double* row = out.data.data() + r * classes;
            double mx = *std::max_element(row, row + classes);
            double sum = 0;
            for (int64_t c = 0; c < classes; ++c) sum += (row[c] = std::exp(row[c] - mx));
            for (int64_t c = 0; c < classes; ++c) row[c] /= sum;
        }
        return out;
    }
    Shape out_shape(x.shape.begin(), x.shape.end() - 1);
    if (out_shape.empty()) out_shape = {1};
    RealTensor out = RealTensor::zeros(out_shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = x.data.data() + r * classes;
        out.data[static_cast<size_t>(r)] =
            static_cast<double>(std::max_element(row, row + classes) - row);
    }
    return out;
}

uint64_t frame_wire_bytes(Backend backend, const Shape& shape) {
    uint64_t payload = static_cast<uint64_t>(shape_numel(shape)) * words_per_element(backend) * 8;
    return kFrameLenBytes + kFrameHeaderBytes + 4 * shape.size() + payload;
}

CostTable predict_cost(const ComputationPlan& plan, const std::map<std::string, int>& party_of) {
    CostTable t;
    auto party = [&](const std::string& name) {
        auto it = party_of.find(name);
        if (it == party_of.end()) fail(ErrorCode::BadConfig, "no party named " + name);
        return it->second;
    };
    auto count = [&](int from, int to, int phase, const Shape& shape) {
        LinkCost& c = t[{from, to, phase}];
        c.messages += 1;
        c.payload_bytes += static_cast<uint64_t>(shape_numel(shape)) *
                           words_per_element(plan.backend) * 8;
        c.frame_bytes += frame_wire_bytes(plan.backend, shape);
    };
    for (const PlanNode& n : plan.nodes) {
        switch (n.kind) {
            case NodeKind::Input:
                count(party(n.party), 0, 1, n.shape);
                count(party(n.party), 1, 1, n.shape);
                break;
            case NodeKind::Mask:
                for (int s = 0; s < 2; ++s) count(2, s, 0, n.shape);
                count(0, 1, 1, n.shape);
                count(1, 0, 1, n.shape);
                break;
            case NodeKind::Mul:
            case NodeKind::MatMul:
            case NodeKind::Conv2D:
                for (int s = 0; s < 2; ++s) count(2, s, 0, n.shape);
                break;
            case NodeKind::Truncate:
                if (plan.trunc_mode == TruncationMode::Interactive) {
                    for (int s = 0; s < 2; ++s) {
                        count(2, s, 0, n.shape);  // r share
                        count(2, s, 0, n.shape);  // r' share
                    }
                    count(0, 1, 1, n.shape);
                    count(1, 0, 1, n.shape);
                }
                break;
            case NodeKind::Output:
                count(0, party(n.party), 1, n.shape);
                count(1, party(n.party), 1, n.shape);
                break;
            default:
                break;
        }
    }
    return t;
}

std::string cost_table_str(const CostTable& t) { return cost_table_str(t, {}); }

std::string cost_table_str(const CostTable& t, const std::vector<std::string>& party_names) {
    auto name = [&](int p) -> std::string {
        if (p >= 0 && p < static_cast<int>(party_names.size())) return party_names[static_cast<size_t>(p)];
        return std::to_string(p);
    };
    std::ostringstream os;
    os << "sender,receiver,phase,messages,payload_bytes,frame_bytes\n";
    for (const auto& [k, c] : t) {
        os << name(k.sender) << "," << name(k.receiver) << ","
           << (k.phase == 0 ? "offline" : "online") << "," << c.messages << ","
           << c.payload_bytes << "," << c.frame_bytes << "\n";
    }
    return os.str();
}

}  // namespace trishare
