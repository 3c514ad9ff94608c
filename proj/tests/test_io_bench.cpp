#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>

#include "support/oracles.hpp"

#include "bench.hpp"
#include "idx.hpp"
#include "logreg.hpp"
#include "weights.hpp"

using namespace trishare;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    fs::path p = fs::temp_directory_path() / "trishare_io_tests";
    fs::create_directories(p);
    return p;
}

std::vector<uint8_t> slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::vector<uint8_t>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an Error");
    return ErrorCode::InvalidArgument;
}

// SynthData as the (images, labels) pair the trainer and models consume.
std::pair<RealTensor, std::vector<int>> as_real(const SynthData& d) {
    RealTensor x = RealTensor::zeros({d.count, d.rows * d.cols});
    for (size_t i = 0; i < d.pixels.size(); ++i) x.data[i] = d.pixels[i] / 255.0;
    std::vector<int> y(d.labels.begin(), d.labels.end());
    return {x, y};
}

}  // namespace

TEST_CASE("weights round trip bit for bit") {
    WeightsMap w;
    w["fc1.w"] = RealTensor({2, 3}, {0.5, -1.25, 3.75e-3, -0.0, 1e300, -7.0});
    w["fc1.b"] = RealTensor({3}, {1.0, 2.0, 3.0});
    w["conv9.k"] = RealTensor({1, 1, 1, 2}, {-0.125, 42.0});
    fs::path p = scratch() / "roundtrip.tsw";
    save_weights(p.string(), w);
    WeightsMap r = load_weights(p.string());
    REQUIRE(r.size() == w.size());
    for (const auto& [name, t] : w) {
        REQUIRE(r.count(name));
        CHECK(r[name].shape == t.shape);
        for (size_t i = 0; i < t.data.size(); ++i) {
            // bit compare: -0.0 and huge values must survive unchanged
            CHECK(std::memcmp(&r[name].data[i], &t.data[i], sizeof(double)) == 0);
        }
    }
}

TEST_CASE("weights manifest is sorted with aligned offsets") {
    WeightsMap w;
    w["b"] = RealTensor({3}, {1, 2, 3});
    w["a"] = RealTensor({2, 2}, {4, 5, 6, 7});
    w["c"] = RealTensor({1}, {8});
    std::string man = weights_manifest(w);
    std::istringstream is(man);
    std::string prev;
    std::string name, ty;
    int rank;
    uint64_t off;
    std::vector<std::string> names;
    while (is >> name >> ty >> rank) {
        std::vector<int64_t> dims(rank);
        for (int i = 0; i < rank; ++i) is >> dims[i];
        is >> off;
        CHECK(ty == "f64");
        CHECK(off % 8 == 0);
        CHECK(prev < name);  // map order: manifest sorted by name
        prev = name;
        names.push_back(name);
    }
    CHECK(names == std::vector<std::string>{"a", "b", "c"});

    WeightsMap bad;
    bad["has space"] = RealTensor({1}, {0});
    fs::path p = scratch() / "badname.tsw";
    CHECK(code_of([&] { save_weights(p.string(), bad); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("weight container corruption is detected") {
    WeightsMap w;
    w["fc1.w"] = RealTensor({4}, {1, 2, 3, 4});
    fs::path good = scratch() / "good.tsw";
    save_weights(good.string(), w);
    std::vector<uint8_t> bytes = slurp(good);

    fs::path bad = scratch() / "bad.tsw";
    std::vector<uint8_t> magic = bytes;
    magic[0] = 'X';
    spit(bad, magic);
    CHECK(code_of([&] { load_weights(bad.string()); }) == ErrorCode::BadMagic);

    std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() - 9));
    spit(bad, cut);
    CHECK(code_of([&] { load_weights(bad.string()); }) == ErrorCode::TruncatedFile);

    spit(bad, {'T', 'S'});
    CHECK(code_of([&] { load_weights(bad.string()); }) == ErrorCode::TruncatedFile);

    CHECK(code_of([&] { load_weights((scratch() / "absent.tsw").string()); }) ==
          ErrorCode::IoError);
}

TEST_CASE("idx images and labels round trip") {
    std::vector<uint8_t> pixels(2 * 3 * 4);
    for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<uint8_t>(i * 11 % 256);
    fs::path img = scratch() / "img.idx";
    save_idx_images(img.string(), pixels, 2, 3, 4);
    RealTensor x = load_idx_images(img.string());
    REQUIRE(x.shape == Shape{2, 3, 4});
    for (size_t i = 0; i < pixels.size(); ++i) CHECK(x.data[i] == pixels[i] / 255.0);

    std::vector<uint8_t> labels{0, 9, 3, 7};
    fs::path lab = scratch() / "lab.idx";
    save_idx_labels(lab.string(), labels);
    std::vector<int> y = load_idx_labels(lab.string());
    CHECK(y == std::vector<int>{0, 9, 3, 7});

    RealTensor flat = flatten_images(x);
    REQUIRE(flat.shape == Shape{2, 12});
    CHECK(flat.data == x.data);

    // Wrong magic for the reader kind, then physically truncated data.
    CHECK(code_of([&] { load_idx_images(lab.string()); }) == ErrorCode::BadMagic);
    CHECK(code_of([&] { load_idx_labels(img.string()); }) == ErrorCode::BadMagic);
    std::vector<uint8_t> bytes = slurp(img);
    bytes.resize(bytes.size() - 5);
    fs::path cut = scratch() / "cut.idx";
    spit(cut, bytes);
    CHECK(code_of([&] { load_idx_images(cut.string()); }) == ErrorCode::TruncatedFile);
    CHECK(code_of([&] { load_idx_images((scratch() / "absent.idx").string()); }) ==
          ErrorCode::IoError);

    CHECK_THROWS_AS(save_idx_images(img.string(), pixels, 5, 3, 4), Error);
}

TEST_CASE("synthetic data is deterministic per seed") {
    SynthData a = synth_mnist(40, 123);
    SynthData b = synth_mnist(40, 123);
    CHECK(a.pixels == b.pixels);
    CHECK(a.labels == b.labels);
    CHECK(a.count == 40);
    CHECK(a.rows == 28);
    CHECK(a.cols == 28);
    for (uint8_t y : a.labels) CHECK(y < 10);

    SynthData c = synth_mnist(40, 124);
    CHECK(a.pixels != c.pixels);

    // A longer draw from the same seed starts with the same samples, so a
    // train/test split of one draw shares prototypes but not noise.
    SynthData d = synth_mnist(60, 123);
    CHECK(std::equal(a.pixels.begin(), a.pixels.end(), d.pixels.begin()));
}

TEST_CASE("logreg training learns the synthetic classes") {
    SynthData all = synth_mnist(500, 2024);
    auto [x, y] = as_real(all);

    RealTensor xtrain = RealTensor::zeros({400, 784});
    std::copy_n(x.data.begin(), 400 * 784, xtrain.data.begin());
    std::vector<int> ytrain(y.begin(), y.begin() + 400);
    RealTensor xtest = RealTensor::zeros({100, 784});
    std::copy(x.data.begin() + 400 * 784, x.data.end(), xtest.data.begin());
    std::vector<int> ytest(y.begin() + 400, y.end());

    TrainResult zero = train_logreg(xtrain, ytrain, 0, 0.5, 1);
    for (double v : zero.weights.at("fc1.w").data) CHECK(v == 0.0);
    for (double v : zero.weights.at("fc1.b").data) CHECK(v == 0.0);
    CHECK(zero.epoch_loss.empty());

    TrainResult tr = train_logreg(xtrain, ytrain, 4, 0.5, 1);
    REQUIRE(tr.epoch_loss.size() == 4);
    CHECK(tr.epoch_loss.back() < tr.epoch_loss.front());
    CHECK(tr.epoch_loss.front() < std::log(10.0) + 0.5);  // starts near uniform

    ModelSpec m = build_network(NetworkId::LogReg);
    double acc = classification_accuracy(eval_float(m, tr.weights, xtest), ytest);
    CHECK(acc >= 0.9);

    TrainResult again = train_logreg(xtrain, ytrain, 4, 0.5, 1);
    CHECK(again.weights.at("fc1.w").data == tr.weights.at("fc1.w").data);

    TrainResult other = train_logreg(xtrain, ytrain, 4, 0.5, 2);
    CHECK(other.weights.at("fc1.w").data != tr.weights.at("fc1.w").data);
}

TEST_CASE("kl divergence identities") {
    std::vector<double> p{0.7, 0.2, 0.1};
    std::vector<double> q{0.5, 0.25, 0.25};
    CHECK(kl_divergence(p, p) == 0.0);  // exactly, not approximately
    CHECK(kl_divergence(q, q) == 0.0);

    // 0.7 ln(0.7/0.5) + 0.2 ln(0.2/0.25) + 0.1 ln(0.1/0.25), worked by hand.
    double expected = 0.7 * std::log(1.4) + 0.2 * std::log(0.8) + 0.1 * std::log(0.4);
    CHECK(kl_divergence(p, q) == doctest::Approx(expected).epsilon(1e-6));
    CHECK(kl_divergence(p, q) > 0);
    CHECK(kl_divergence(p, q) != kl_divergence(q, p));

    CHECK_THROWS_AS(kl_divergence(p, {0.5, 0.5}), Error);

    std::vector<double> s = softmax({1.0, 2.0, 3.0});
    double sum = s[0] + s[1] + s[2];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s[2] > s[1]);
    CHECK(s[1] > s[0]);
    // shift invariance
    std::vector<double> s2 = softmax({101.0, 102.0, 103.0});
    for (int i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(s2[i]).epsilon(1e-12));

    RealTensor logits({3, 2}, {1.0, 2.0, 5.0, -1.0, 0.0, 0.5});
    CHECK(classification_accuracy(logits, {1, 0, 1}) == 1.0);
    CHECK(classification_accuracy(logits, {0, 0, 1}) == doctest::Approx(2.0 / 3));
}

TEST_CASE("bench reports are deterministic apart from timing") {
    ModelSpec m = build_network(NetworkId::LogReg);
    WeightsMap w = random_weights(m, 5);
    BenchOptions opts;
    opts.backends = {Backend::Int64, Backend::Crt};
    opts.batch_sizes = {1, 2};
    opts.runs = 2;
    opts.seed = 17;

    BenchReport a = run_bench(m, w, opts);
    BenchReport b = run_bench(m, w, opts);
    REQUIRE(a.rows.size() == 4);
    CHECK(a.total_inputs == 2 * (1 + 2) * 2);
    for (size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].mean_kl == b.rows[i].mean_kl);  // same seed, same bits
        CHECK(a.rows[i].mean_kl >= 0);
        CHECK(a.rows[i].mean_kl < 1e-3);
        CHECK(a.rows[i].mean_ms > 0);
        CHECK(a.rows[i].acc_secure == -1);  // no labels supplied
    }

    std::string csv = a.csv();
    CHECK(csv.find("network,trunc,backend,batch,runs,mean_ms_per_inference,"
                   "stddev_ms_per_inference,mean_kl_float_vs_secure,acc_secure,acc_float\n") == 0);
    CHECK(csv.find("logreg,interactive,int64,1,2,") != std::string::npos);
    CHECK(csv.find("int100,2,2,") != std::string::npos);
    std::string text = a.text();
    CHECK(text.find("KL(P_float || P_secure)") != std::string::npos);
    CHECK(text.find("per inference") != std::string::npos);
}

TEST_CASE("bench accuracy columns use the provided labels") {
    ModelSpec m = build_network(NetworkId::LogReg);
    SynthData d = synth_mnist(64, 99);
    auto [x, y] = as_real(d);
    TrainResult tr = train_logreg(x, y, 3, 0.5, 7);

    BenchOptions opts;
    opts.batch_sizes = {8};
    opts.runs = 2;
    opts.seed = 3;
    BenchReport rep = run_bench(m, tr.weights, opts, &x, &y);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].acc_secure >= 0.0);
    CHECK(rep.rows[0].acc_secure <= 1.0);
    CHECK(rep.rows[0].acc_float >= 0.8);  // training-set accuracy
    CHECK(std::fabs(rep.rows[0].acc_secure - rep.rows[0].acc_float) <= 0.1);

    CHECK_THROWS_AS(run_bench(m, tr.weights, opts, nullptr, &y), Error);
    BenchOptions zero = opts;
    zero.runs = 0;
    CHECK_THROWS_AS(run_bench(m, tr.weights, zero, &x, &y), Error);
}
