#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "support/oracles.hpp"

#include "nn.hpp"
#include "sim.hpp"

using namespace trishare;

namespace {

double poly_at(const std::vector<double>& c, double t) {
    double p = 0;
    for (size_t i = c.size(); i-- > 0;) p = p * t + c[i];
    return p;
}

RealTensor random_reals(const Shape& s, double lo, double hi, Prg& prg) {
    RealTensor t = RealTensor::zeros(s);
    for (double& v : t.data) v = lo + (hi - lo) * ((prg.next_u64() >> 11) * 0x1.0p-53);
    return t;
}

double max_abs_diff(const RealTensor& a, const RealTensor& b) {
    REQUIRE(a.shape == b.shape);
    double m = 0;
    for (size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

RealTensor secure_logits(const ModelSpec& m, Backend backend, const WeightsMap& w,
                         const RealTensor& x, uint64_t seed) {
    FixedPointConfig fp = nn_fixed_point(backend);
    InferenceIo io;
    io.batch = x.shape[0];
    ComputationPlan plan = build_inference_plan(m, backend, fp, TruncationMode::Interactive, w, io);
    SessionConfig cfg;
    cfg.backend = backend;
    cfg.fp = fp;
    cfg.seeded = true;
    cfg.seed = seed;
    SessionInputs inputs;
    inputs["client"]["x"] = x;
    inputs["owner"] = owner_inputs(m, w);
    auto out = run_fullview(plan, cfg, inputs);
    return out.at("logits").decoded;
}

}  // namespace

TEST_CASE("activation fit rejects degrees below two") {
    for (int d : {-1, 0, 1}) {
        try {
            poly_relu_fit(d);
            FAIL("degree " << d << " accepted");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DegreeTooLow);
        }
    }
}

TEST_CASE("activation fit approximates relu on the fit interval") {
    PolyFit p2 = poly_relu_fit(2);
    PolyFit p4 = poly_relu_fit(4);
    REQUIRE(p2.coeffs.size() == 3);
    REQUIRE(p4.coeffs.size() == 5);
    CHECK(p2.max_err > 0);
    CHECK(p4.max_err > 0);
    CHECK(p4.max_err < p2.max_err);  // more degrees of freedom fit tighter
    CHECK(p2.max_err < 0.5);
    CHECK(p4.max_err < 0.25);

    for (const PolyFit& fit : {p2, p4}) {
        // max_err is sampled on a grid; allow for drift between grid points.
        double eps = fit.max_err + 1e-3;
        for (int g = 0; g <= 2000; ++g) {
            double t = -3.0 + 6.0 * g / 2000.0;
            double p = poly_at(fit.coeffs, t);
            CHECK(p >= -eps);                             // never far below zero
            CHECK(std::fabs(p - std::max(0.0, t)) <= eps);
            // relu(t) - relu(-t) = t exactly, so the fit inherits it within 2 eps.
            CHECK(std::fabs(poly_at(fit.coeffs, t) - poly_at(fit.coeffs, -t) - t) <= 2 * eps);
        }
        CHECK(std::fabs(poly_at(fit.coeffs, 3.0) - 3.0) <= eps);
    }

    // relu(t) = t/2 + |t|/2 on a symmetric grid: the odd part of the least
    // squares solution is exactly t/2, so c1 = 1/2 and c3 = 0.
    CHECK(p4.coeffs[1] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(std::fabs(p4.coeffs[3]) < 1e-9);
    CHECK(p2.coeffs[1] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("batchnorm folding matches the direct normalization") {
    RealTensor gamma({3}, {1.0, 0.9, 1.2});
    RealTensor beta({3}, {0.0, -0.1, 0.2});
    RealTensor mean({3}, {0.0, 0.4, -0.3});
    RealTensor var({3}, {1.0 - 1e-5, 0.7, 1.3});

    auto [scale, shift] = fold_batchnorm(gamma, beta, mean, var);
    CHECK(scale.data[0] == 1.0);  // var + eps == 1 exactly
    CHECK(shift.data[0] == 0.0);
    Prg prg(4, "test/bn");
    for (int i = 0; i < 100; ++i) {
        double x = -5.0 + 10.0 * ((prg.next_u64() >> 11) * 0x1.0p-53);
        for (int c = 0; c < 3; ++c) {
            double direct =
                gamma.data[c] * (x - mean.data[c]) / std::sqrt(var.data[c] + 1e-5) + beta.data[c];
            CHECK(scale.data[c] * x + shift.data[c] == doctest::Approx(direct).epsilon(1e-12));
        }
    }

    RealTensor bad = var;
    bad.data[1] = -0.25;
    try {
        fold_batchnorm(gamma, beta, mean, bad);
        FAIL("negative variance accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NegativeVariance);
    }
    CHECK_THROWS_AS(fold_batchnorm(gamma, beta, mean, RealTensor({2}, {1, 1})), Error);
}

TEST_CASE("network catalogue exposes the documented shapes") {
    ModelSpec lr = build_network(NetworkId::LogReg);
    auto lrw = model_weight_shapes(lr);
    REQUIRE(lrw.size() == 2);
    CHECK(lrw[0] == std::pair<std::string, Shape>{"fc1.w", {784, 10}});
    CHECK(lrw[1] == std::pair<std::string, Shape>{"fc1.b", {10}});

    ModelSpec a = build_network(NetworkId::A);
    std::vector<std::pair<std::string, Shape>> a_expect = {
        {"fc1.w", {784, 128}}, {"fc1.b", {128}},
        {"bn1.gamma", {128}},  {"bn1.beta", {128}}, {"bn1.mean", {128}}, {"bn1.var", {128}},
        {"fc2.w", {128, 128}}, {"fc2.b", {128}},
        {"bn2.gamma", {128}},  {"bn2.beta", {128}}, {"bn2.mean", {128}}, {"bn2.var", {128}},
        {"fc3.w", {128, 10}},  {"fc3.b", {10}},
    };
    CHECK(model_weight_shapes(a) == a_expect);

    // B: two 5x5/16 conv blocks with pooling leave a 4*4*16 = 256 flatten.
    ModelSpec b = build_network(NetworkId::B);
    auto bw = model_weight_shapes(b);
    CHECK(bw[0] == std::pair<std::string, Shape>{"conv1.k", {5, 5, 1, 16}});
    bool b_fc = false, c_fc = false;
    for (const auto& [name, shape] : bw)
        if (name == "fc1.w") {
            CHECK(shape == Shape{256, 100});
            b_fc = true;
        }
    CHECK(b_fc);

    // C: 20 then 50 feature maps, 4*4*50 = 800 flatten.
    ModelSpec c = build_network(NetworkId::C);
    auto cw = model_weight_shapes(c);
    CHECK(cw[0] == std::pair<std::string, Shape>{"conv1.k", {5, 5, 1, 20}});
    for (const auto& [name, shape] : cw) {
        if (name == "conv2.k") CHECK(shape == Shape{5, 5, 20, 50});
        if (name == "fc1.w") {
            CHECK(shape == Shape{800, 500});
            c_fc = true;
        }
    }
    CHECK(c_fc);

    CHECK(model_manifest(a).find("dense in=784 out=128") != std::string::npos);
    CHECK(model_manifest(b).find("avgpool window=2") != std::string::npos);
    CHECK_THROWS_AS(network_from_string("D"), Error);
    CHECK(network_from_string("a") == NetworkId::A);
}

TEST_CASE("identity dense layer is the identity") {
    ModelSpec m;
    m.name = "ident";
    m.input_shape = {4};
    LayerSpec l;
    l.kind = LayerSpec::Kind::Dense;
    l.prefix = "fc1";
    l.in = 4;
    l.out = 4;
    m.layers.push_back(l);

    WeightsMap w;
    w["fc1.w"] = RealTensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) w["fc1.w"].data[i * 4 + i] = 1.0;
    w["fc1.b"] = RealTensor::zeros({4});

    RealTensor x({2, 4}, {0.1, -0.2, 0.3, -0.4, 0.5, -0.6, 0.7, -0.8});
    RealTensor y = eval_float(m, w, x);
    for (size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);

    // One truncation step plus input rounding: at most 2 ulp at scale f.
    RealTensor ys = secure_logits(m, Backend::Int64, w, x, 101);
    CHECK(max_abs_diff(ys, x) <=
          2 * std::ldexp(1.0, -nn_fixed_point(Backend::Int64).fractional_bits));
}

TEST_CASE("average pooling of a constant plane is that constant") {
    ModelSpec m;
    m.name = "pool";
    m.input_shape = {4, 4, 1};
    LayerSpec l;
    l.kind = LayerSpec::Kind::AvgPool;
    l.window = 2;
    m.layers.push_back(l);

    RealTensor x = RealTensor::zeros({1, 4, 4, 1});
    for (double& v : x.data) v = 0.375;
    RealTensor y = eval_float(m, {}, x);
    REQUIRE(y.shape == Shape{1, 2, 2, 1});
    for (double v : y.data) CHECK(v == 0.375);

    FixedPointConfig fp = nn_fixed_point(Backend::Int64);
    InferenceIo io;
    io.batch = 1;
    ComputationPlan plan = build_inference_plan(m, Backend::Int64, fp, TruncationMode::Interactive,
                                                {}, io);
    SessionConfig cfg;
    cfg.fp = fp;
    cfg.seeded = true;
    cfg.seed = 7;
    SessionInputs in;
    in["client"]["x"] = x;
    auto out = run_fullview(plan, cfg, in);
    // 0.375 * 2^13 is integral and 1/4 is a power of two: exact either way.
    for (double v : out.at("logits").decoded.data)
        CHECK(v == doctest::Approx(0.375).epsilon(1e-3));
}

TEST_CASE("fixed point profiles leave multiplication and masking headroom") {
    for (Backend backend : {Backend::Int64, Backend::Crt}) {
        FixedPointConfig fp = nn_fixed_point(backend);
        CHECK_NOTHROW(fp.validate(backend));
        CHECK(2 * fp.fractional_bits <= fp.bound_bits);
        CHECK(fp.bound_bits + fp.stat_security + 1 <= ring_modulus_bits(backend));
        // integer headroom above the activation interval [-3, 3]
        CHECK(fp.bound_bits - 2 * fp.fractional_bits >= 10);
    }
}

TEST_CASE("inference plans mask each activation input exactly once") {
    ModelSpec a = build_network(NetworkId::A);
    WeightsMap w = random_weights(a, 11);
    InferenceIo io;
    ComputationPlan plan = build_inference_plan(a, Backend::Int64, nn_fixed_point(Backend::Int64),
                                                TruncationMode::Interactive, w, io);
    int masks = 0, muls = 0, matmuls = 0;
    for (const PlanNode& n : plan.nodes) {
        if (n.kind == NodeKind::Mask) ++masks;
        if (n.kind == NodeKind::Mul) ++muls;
        if (n.kind == NodeKind::MatMul) ++matmuls;
    }
    // 3 dense layers mask x and w; each degree-4 activation masks its input
    // once plus one remask per Horner product.
    CHECK(matmuls == 3);
    CHECK(muls == 6);
    CHECK(masks == 3 * 2 + 2 * 4);
    // Ten distinct mask sources: no node is masked twice.
    std::set<uint32_t> sources;
    for (const PlanNode& n : plan.nodes)
        if (n.kind == NodeKind::Mask) sources.insert(n.inputs[0]);
    CHECK(sources.size() == static_cast<size_t>(masks));
}

TEST_CASE("missing weights are reported by name") {
    ModelSpec a = build_network(NetworkId::A);
    WeightsMap w = random_weights(a, 12);
    w.erase("bn2.mean");  // folded at plan build time, so required there
    InferenceIo io;
    try {
        build_inference_plan(a, Backend::Int64, nn_fixed_point(Backend::Int64),
                             TruncationMode::Interactive, w, io);
        FAIL("expected MissingWeights");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingWeights);
        CHECK(std::string(e.what()).find("bn2.mean") != std::string::npos);
    }
}

TEST_CASE("secure network logits track the float reference") {
    Prg prg(13, "test/nets");
    struct Case {
        NetworkId id;
        Backend backend;
        double tol;
    };
    // f = 13 (int64) loses ~1e-4 per rounding; hundreds-term sums and two or
    // three activation layers keep end-to-end drift well under 0.3.
    std::vector<Case> cases = {
        {NetworkId::A, Backend::Int64, 0.3},
        {NetworkId::A, Backend::Crt, 0.05},
        {NetworkId::B, Backend::Int64, 0.3},
        {NetworkId::C, Backend::Int64, 0.3},
        {NetworkId::LogReg, Backend::Crt, 0.01},
    };
    for (const Case& c : cases) {
        CAPTURE(network_name(c.id));
        ModelSpec m = build_network(c.id);
        WeightsMap w = random_weights(m, 21);
        Shape xs = m.input_shape;
        xs.insert(xs.begin(), 2);
        RealTensor x = random_reals(xs, 0.0, 1.0, prg);
        RealTensor secure = secure_logits(m, c.backend, w, x, 55);
        RealTensor ref = eval_float(m, w, x);
        REQUIRE(secure.shape == Shape{2, 10});
        CHECK(max_abs_diff(secure, ref) < c.tol);
    }
}

TEST_CASE("random weights keep preactivations inside the fit interval") {
    Prg prg(14, "test/range");
    for (NetworkId id : {NetworkId::A, NetworkId::B, NetworkId::C}) {
        ModelSpec m = build_network(id);
        WeightsMap w = random_weights(m, 31);
        Shape xs = m.input_shape;
        xs.insert(xs.begin(), 4);
        RealTensor x = random_reals(xs, 0.0, 1.0, prg);
        RealTensor logits = eval_float(m, w, x);
        for (double v : logits.data) CHECK(std::fabs(v) < 3.0);
    }
}
