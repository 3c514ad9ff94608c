#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "support/oracles.hpp"

#include "channel.hpp"
#include "offline.hpp"
#include "plan.hpp"

using namespace trishare;

namespace {

// x, y [d,d] matmul with truncation: the canonical two-mask one-triple plan.
ComputationPlan matmul_plan(Backend b, int64_t d, bool trunc = false) {
    PlanBuilder pb(b, default_fixed_point(), TruncationMode::Interactive);
    uint32_t x = pb.input("client", "x", {d, d});
    uint32_t y = pb.input("owner", "y", {d, d});
    uint32_t z = pb.matmul(pb.mask(x), pb.mask(y));
    if (trunc) z = pb.truncate(z);
    pb.output(z, "client", "z");
    return pb.finish();
}

}  // namespace

TEST_CASE("builder validates eagerly") {
    FixedPointConfig fp = default_fixed_point();
    PlanBuilder pb(Backend::Int64, fp, TruncationMode::Interactive);
    uint32_t x = pb.input("p", "x", {2, 3});
    uint32_t y = pb.input("p", "y", {3, 2});

    // Products need masked inputs.
    CHECK_THROWS_AS(pb.matmul(x, y), Error);

    uint32_t mx = pb.mask(x);
    uint32_t my = pb.mask(y);
    uint32_t z = pb.matmul(mx, my);
    CHECK(pb.node(z).shape == Shape{2, 2});
    CHECK(pb.node(z).fp_scale == 2 * fp.fractional_bits);

    // A product carries scale 2f: masking it again needs a truncate first.
    CHECK_THROWS_AS(pb.mask(z), Error);
    uint32_t zt = pb.truncate(z);
    CHECK(pb.node(zt).fp_scale == fp.fractional_bits);
    CHECK_NOTHROW(pb.mask(zt));

    // Truncate wants exactly a doubled scale.
    CHECK_THROWS_AS(pb.truncate(zt), Error);

    // Shape errors surface at build time.
    CHECK_THROWS_AS(pb.matmul(mx, mx), Error);
    CHECK_THROWS_AS(pb.add(x, y), Error);
}

TEST_CASE("masking is deduplicated per node") {
    PlanBuilder pb(Backend::Int64, default_fixed_point(), TruncationMode::Interactive);
    uint32_t x = pb.input("p", "x", {4});
    uint32_t m1 = pb.mask(x);
    uint32_t m2 = pb.mask(x);
    CHECK(m1 == m2);
    uint32_t a = pb.mul(m1, m2);
    uint32_t b = pb.mul(m1, m1);
    CHECK(a != b);
    ComputationPlan plan = pb.finish();
    int mask_nodes = 0;
    for (const PlanNode& n : plan.nodes)
        if (n.kind == NodeKind::Mask) ++mask_nodes;
    CHECK(mask_nodes == 1);
}

TEST_CASE("plan ids are stable and content sensitive") {
    ComputationPlan p1 = matmul_plan(Backend::Int64, 4);
    ComputationPlan p2 = matmul_plan(Backend::Int64, 4);
    CHECK(p1.plan_id() == p2.plan_id());
    CHECK(p1.plan_id() != matmul_plan(Backend::Int64, 5).plan_id());
    CHECK(p1.plan_id() != matmul_plan(Backend::Crt, 4).plan_id());
    CHECK(p1.plan_id() != matmul_plan(Backend::Int64, 4, true).plan_id());

    // Constants are part of the identity.
    auto with_const = [](double v) {
        PlanBuilder pb(Backend::Int64, default_fixed_point(), TruncationMode::Interactive);
        uint32_t x = pb.input("p", "x", {2});
        RealTensor c = RealTensor::zeros({2});
        c.data[0] = v;
        uint32_t k = pb.public_const_real(c);
        pb.output(pb.add_plain(x, k), "p", "z");
        return pb.finish().plan_id();
    };
    CHECK(with_const(1.0) != with_const(1.5));
    CHECK(with_const(1.0) == with_const(1.0));
}

TEST_CASE("provider and receiver names are collected") {
    ComputationPlan p = matmul_plan(Backend::Int64, 3);
    CHECK(p.provider_names() == std::vector<std::string>{"client", "owner"});
    CHECK(p.receiver_names() == std::vector<std::string>{"client"});
}

TEST_CASE("predictor counts the matmul plan by hand") {
    const int64_t d = 4;
    ComputationPlan plan = matmul_plan(Backend::Int64, d);
    std::map<std::string, int> party_of{{"client", 3}, {"owner", 4}};
    CostTable t = predict_cost(plan, party_of);

    uint64_t word = 8;  // one ring word on int64
    uint64_t env2 = kFrameLenBytes + kFrameHeaderBytes + 4 * 2;  // rank-2 frames
    uint64_t tensor_bytes = d * d * word;

    // Offline, S2 -> each server: two masks and one product share.
    LinkKey off0{2, 0, 0}, off1{2, 1, 0};
    REQUIRE(t.count(off0));
    CHECK(t[off0].messages == 3);
    CHECK(t[off0].payload_bytes == 3 * tensor_bytes);
    CHECK(t[off0].frame_bytes == 3 * (tensor_bytes + env2));
    CHECK(t[off1] == t[off0]);

    // Online: each provider sends one share per server; the mask round is one
    // frame each way per mask node; the output is one share from each server.
    LinkKey cl0{3, 0, 1}, cl1{3, 1, 1}, ow0{4, 0, 1}, ow1{4, 1, 1};
    for (LinkKey k : {cl0, cl1, ow0, ow1}) {
        REQUIRE(t.count(k));
        CHECK(t[k].messages == 1);
        CHECK(t[k].payload_bytes == tensor_bytes);
    }
    LinkKey s01{0, 1, 1}, s10{1, 0, 1};
    CHECK(t[s01].messages == 2);
    CHECK(t[s10].messages == 2);
    LinkKey out0{0, 3, 1}, out1{1, 3, 1};
    CHECK(t[out0].messages == 1);
    CHECK(t[out1].messages == 1);

    // No entry may involve S2 online.
    for (const auto& [k, c] : t) {
        CHECK((k.phase == kPhaseOffline || (k.sender != 2 && k.receiver != 2)));
        CHECK(c.messages > 0);
    }
}

TEST_CASE("truncation adds two offline frames per server and one online round") {
    ComputationPlan plain = matmul_plan(Backend::Int64, 3, false);
    ComputationPlan trunc = matmul_plan(Backend::Int64, 3, true);
    std::map<std::string, int> party_of{{"client", 3}, {"owner", 4}};
    CostTable a = predict_cost(plain, party_of);
    CostTable b = predict_cost(trunc, party_of);
    CHECK(b[{2, 0, 0}].messages == a[{2, 0, 0}].messages + 2);
    CHECK(b[{2, 1, 0}].messages == a[{2, 1, 0}].messages + 2);
    CHECK(b[{0, 1, 1}].messages == a[{0, 1, 1}].messages + 1);
    CHECK(b[{1, 0, 1}].messages == a[{1, 0, 1}].messages + 1);
}

TEST_CASE("frame serialization round-trips byte-exactly") {
    Prg prg(51, "test/frame");
    for (Backend b : {Backend::Int64, Backend::Crt}) {
        RingTensor x = RingTensor::sample_uniform(b, {3, 2, 2}, prg);
        Frame f = make_frame(0x1111222233334444ull, 0x5555666677778888ull, 42, 0, 1,
                             kPhaseOnline, 1, x);
        CHECK(f.wire_bytes() == frame_wire_bytes(b, x.shape()));
        std::vector<uint8_t> wire = f.serialize();
        CHECK(wire.size() == f.wire_bytes());
        // Strip the length prefix, parse the body back.
        Frame g = Frame::parse_body(std::span<const uint8_t>(wire).subspan(4));
        CHECK(g.h.session_id == f.h.session_id);
        CHECK(g.h.plan_id == f.h.plan_id);
        CHECK(g.h.node_id == 42);
        CHECK(g.h.slot == 1);
        CHECK(g.shape() == x.shape());
        CHECK(tensor_from_frame(g).equals(x));
        CHECK(g.serialize() == wire);
    }
}

TEST_CASE("inmemory channels deliver in order and account every byte") {
    auto [a, b] = make_inmemory_pair(0, 1);
    Prg prg(52, "test/chan");
    RingTensor x = RingTensor::sample_uniform(Backend::Crt, {4, 4}, prg);
    Frame f = make_frame(1, 2, 7, 0, 1, kPhaseOnline, 0, x);
    a->send(f);
    Frame g = b->recv(7, 0, kPhaseOnline, 1000);
    CHECK(tensor_from_frame(g).equals(x));
    CHECK(a->sent(kPhaseOnline).messages == 1);
    CHECK(a->sent(kPhaseOnline).frame_bytes == f.wire_bytes());
    CHECK(b->received(kPhaseOnline).messages == 1);

    // 10k tiny frames on one tag keep their order.
    RingTensor v = RingTensor::zeros(Backend::Int64, {1});
    for (int i = 0; i < 10000; ++i) {
        v.set_element(0, static_cast<uint64_t>(i));
        a->send(make_frame(1, 2, 9, 0, 1, kPhaseOnline, 0, v));
    }
    for (int i = 0; i < 10000; ++i) {
        Frame h = b->recv(9, 0, kPhaseOnline, 1000);
        CHECK(tensor_from_frame(h).element(0) == static_cast<u128>(i));
    }
}

TEST_CASE("closed and silent channels fail cleanly") {
    auto [a, b] = make_inmemory_pair(0, 1);
    CHECK_THROWS_WITH_AS(b->recv(1, 0, kPhaseOnline, 50), doctest::Contains("Timeout"), Error);
    a->close();
    b->close();
    try {
        b->recv(1, 0, kPhaseOnline, 50);
        FAIL("expected ChannelClosed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ChannelClosed);
    }
}

TEST_CASE("offline bundle covers exactly the plan's needs") {
    ComputationPlan plan = matmul_plan(Backend::Crt, 3, true);
    Prg prg(53, "offline");
    OfflineBundle bundle = generate_offline(plan, prg);
    int masks = 0, prods = 0, truncs = 0;
    for (const PlanNode& n : plan.nodes) {
        if (n.kind == NodeKind::Mask) ++masks;
        if (n.kind == NodeKind::MatMul) ++prods;
        if (n.kind == NodeKind::Truncate) ++truncs;
    }
    CHECK(bundle.masks.size() == static_cast<size_t>(masks));
    CHECK(bundle.triples.size() == static_cast<size_t>(prods));
    CHECK(bundle.truncs.size() == static_cast<size_t>(truncs));

    for (const auto& [id, m] : bundle.masks)
        CHECK(m.a_shares[0].add(m.a_shares[1]).equals(m.a));

    // Same seed, same bundle.
    Prg prg2(53, "offline");
    OfflineBundle again = generate_offline(plan, prg2);
    for (const auto& [id, m] : bundle.masks) CHECK(again.masks.at(id).a.equals(m.a));
}

TEST_CASE("distribute then receive round-trips the material") {
    ComputationPlan plan = matmul_plan(Backend::Int64, 3, true);
    Prg prg(54, "offline");
    OfflineBundle bundle = generate_offline(plan, prg);

    auto [s2_to_s0, s0_from_s2] = make_inmemory_pair(2, 0);
    auto [s2_to_s1, s1_from_s2] = make_inmemory_pair(2, 1);
    distribute(bundle, plan, 99, *s2_to_s0, *s2_to_s1);

    OfflineStore st0 = receive_offline(plan, 99, *s0_from_s2, 1000);
    OfflineStore st1 = receive_offline(plan, 99, *s1_from_s2, 1000);
    // Two masks + one product (slot 0 each) + r and r' for the truncation.
    CHECK(st0.size() == 5);
    CHECK(st1.size() == 5);

    for (const auto& [id, m] : bundle.masks) {
        RingTensor a0 = st0.take(id, 0);
        RingTensor a1 = st1.take(id, 0);
        CHECK(a0.add(a1).equals(m.a));
    }

    // Consumed entries are gone.
    uint32_t mask_id = bundle.masks.begin()->first;
    try {
        st0.take(mask_id, 0);
        FAIL("expected MissingTriple");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingTriple);
    }
}

TEST_CASE("receive rejects a desynchronized session") {
    ComputationPlan plan = matmul_plan(Backend::Int64, 3);
    Prg prg(55, "offline");
    OfflineBundle bundle = generate_offline(plan, prg);
    auto [s2_to_s0, s0_from_s2] = make_inmemory_pair(2, 0);
    auto [s2_to_s1, s1_from_s2] = make_inmemory_pair(2, 1);
    distribute(bundle, plan, 1234, *s2_to_s0, *s2_to_s1);
    try {
        receive_offline(plan, 5678, *s0_from_s2, 1000);
        FAIL("expected ProtocolDesync");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ProtocolDesync);
    }
}

TEST_CASE("structural evaluation matches direct tensor ops") {
    Prg prg(56, "test/structeval");
    RingTensor x = RingTensor::sample_uniform(Backend::Int64, {2, 6}, prg);
    PlanNode n;
    n.kind = NodeKind::Reshape;
    n.shape = {3, 4};
    CHECK(eval_structural(n, {x}).equals(x.reshape({3, 4})));
    n.kind = NodeKind::Transpose;
    n.perm = {1, 0};
    n.shape = {6, 2};
    CHECK(eval_structural(n, {x}).equals(x.transpose({1, 0})));
    n.kind = NodeKind::ReduceSumAxis;
    n.axis = 1;
    n.shape = {2};
    CHECK(eval_structural(n, {x}).equals(x.reduce_sum_axis(1)));
    RingTensor y = RingTensor::sample_uniform(Backend::Int64, {2, 6}, prg);
    n.kind = NodeKind::Concat;
    n.axis = 0;
    n.shape = {4, 6};
    CHECK(eval_structural(n, {x, y}).equals(RingTensor::concat({x, y}, 0)));
}

TEST_CASE("post ops act on the last axis") {
    RealTensor x({2, 3}, {1.0, 2.0, 3.0, -1.0, 0.0, 1.0});
    RealTensor sm = apply_post(PostOp::Softmax, x);
    for (int row = 0; row < 2; ++row) {
        double sum = 0;
        for (int c = 0; c < 3; ++c) sum += sm.data[row * 3 + c];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sm.data[row * 3 + 2] > sm.data[row * 3 + 0]);
    }
    RealTensor am = apply_post(PostOp::Argmax, x);
    CHECK(am.shape == Shape{2});
    CHECK(am.data[0] == 2.0);
    CHECK(am.data[1] == 2.0);
    RealTensor sg = apply_post(PostOp::Sigmoid, RealTensor::scalar(0.0));
    CHECK(sg.data[0] == doctest::Approx(0.5));
}

TEST_CASE("an empty cost table prints just the header") {
    CHECK(cost_table_str(CostTable{}) == "sender,receiver,phase,messages,payload_bytes,frame_bytes\n");
}
