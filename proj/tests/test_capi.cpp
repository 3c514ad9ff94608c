// Exercises the public C interface exactly as an application would: only
// trishare/trishare.h, no internal headers.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <trishare/trishare.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    fs::path p = fs::temp_directory_path() / "trishare_capi_tests";
    fs::create_directories(p);
    return p;
}

std::string take(char* s) {
    REQUIRE(s != nullptr);
    std::string out = s;
    ts_string_free(s);
    return out;
}

}  // namespace

TEST_CASE("version and error names") {
    std::string v = ts_version();
    CHECK(v.find("trishare") == 0);
    CHECK(v.find('.') != std::string::npos);
    CHECK(std::string(ts_error_name(TS_OK)) == "Ok");
    CHECK(std::string(ts_error_name(TS_BAD_CONFIG)) == "BadConfig");
    CHECK(std::string(ts_error_name(TS_TIMEOUT)) == "Timeout");
    CHECK(std::string(ts_error_name(9999)) == std::string(ts_error_name(TS_UNKNOWN_ERROR)));
}

TEST_CASE("tensor lifecycle and null handling") {
    const int64_t dims[2] = {2, 3};
    const double data[6] = {1, 2, 3, 4, 5, 6};
    ts_tensor* t = ts_tensor_create(dims, 2, data);
    REQUIRE(t != nullptr);
    CHECK(ts_tensor_rank(t) == 2);
    CHECK(ts_tensor_dim(t, 0) == 2);
    CHECK(ts_tensor_dim(t, 1) == 3);
    CHECK(ts_tensor_numel(t) == 6);
    CHECK(std::memcmp(ts_tensor_data(t), data, sizeof data) == 0);
    ts_tensor_free(t);

    CHECK(ts_tensor_create(nullptr, 2, data) == nullptr);
    CHECK(ts_last_error_code() == TS_INVALID_ARGUMENT);
    CHECK(std::string(ts_last_error()).size() > 0);
    CHECK(ts_tensor_create(dims, 2, nullptr) == nullptr);
    CHECK(ts_last_error_code() == TS_INVALID_ARGUMENT);
}

TEST_CASE("weights collections round trip through the container") {
    ts_weights* w = ts_weights_create();
    REQUIRE(w != nullptr);
    const int64_t dims[2] = {2, 2};
    const double data[4] = {0.5, -1.5, 2.5, -3.5};
    ts_tensor* t = ts_tensor_create(dims, 2, data);
    REQUIRE(ts_weights_set(w, "fc1.w", t) == TS_OK);
    ts_tensor_free(t);

    std::string man = take(ts_weights_manifest(w));
    CHECK(man.find("fc1.w f64 2 2 2 0") != std::string::npos);

    fs::path p = scratch() / "api.tsw";
    REQUIRE(ts_weights_save(p.string().c_str(), w) == TS_OK);
    ts_weights* r = ts_weights_load(p.string().c_str());
    REQUIRE(r != nullptr);
    ts_tensor* got = ts_weights_get(r, "fc1.w");
    REQUIRE(got != nullptr);
    CHECK(std::memcmp(ts_tensor_data(got), data, sizeof data) == 0);
    ts_tensor_free(got);

    CHECK(ts_weights_get(r, "absent") == nullptr);
    CHECK(ts_last_error_code() == TS_MISSING_WEIGHTS);
    ts_weights_free(r);
    ts_weights_free(w);

    CHECK(ts_weights_load((scratch() / "absent.tsw").string().c_str()) == nullptr);
    CHECK(ts_last_error_code() == TS_IO_ERROR);
}

TEST_CASE("synthetic data, training and the float reference") {
    fs::path img = scratch() / "digits.idx";
    fs::path lab = scratch() / "labels.idx";
    REQUIRE(ts_synth_data(img.string().c_str(), lab.string().c_str(), 300, 42) == TS_OK);

    ts_tensor* images = ts_idx_load_images(img.string().c_str());
    REQUIRE(images != nullptr);
    CHECK(ts_tensor_rank(images) == 3);
    CHECK(ts_tensor_dim(images, 0) == 300);
    CHECK(ts_tensor_dim(images, 1) == 28);

    int* labels = nullptr;
    size_t count = 0;
    REQUIRE(ts_idx_load_labels(lab.string().c_str(), &labels, &count) == TS_OK);
    REQUIRE(count == 300);
    for (size_t i = 0; i < count; ++i) CHECK(labels[i] < 10);

    double losses[3] = {-1, -1, -1};
    ts_weights* w = ts_train_logreg(images, labels, count, 3, 0.5, 7, losses);
    REQUIRE(w != nullptr);
    CHECK(losses[0] > losses[2]);
    CHECK(losses[2] > 0);

    ts_tensor* logits = ts_eval_float("logreg", w, images);
    REQUIRE(logits != nullptr);
    CHECK(ts_tensor_dim(logits, 0) == 300);
    CHECK(ts_tensor_dim(logits, 1) == 10);
    int status = -1;
    double acc = ts_accuracy(logits, labels, count, &status);
    CHECK(status == TS_OK);
    CHECK(acc >= 0.9);  // training accuracy on separable data

    ts_tensor_free(logits);
    ts_weights_free(w);
    ts_ints_free(labels);
    ts_tensor_free(images);
}

TEST_CASE("network input dims") {
    int64_t dims[4] = {0, 0, 0, 0};
    size_t rank = 0;
    REQUIRE(ts_network_input_dims("logreg", dims, &rank) == TS_OK);
    CHECK(rank == 1);
    CHECK(dims[0] == 784);
    REQUIRE(ts_network_input_dims("B", dims, &rank) == TS_OK);
    CHECK(rank == 3);
    CHECK(dims[0] == 28);
    CHECK(dims[2] == 1);
    CHECK(ts_network_input_dims("nope", dims, &rank) == TS_INVALID_ARGUMENT);
}

TEST_CASE("secure inference through the public interface") {
    ts_weights* w = ts_weights_random("logreg", 9);
    REQUIRE(w != nullptr);

    std::vector<double> xv(2 * 784);
    for (size_t i = 0; i < xv.size(); ++i) xv[i] = (i % 97) / 96.0;
    const int64_t dims[2] = {2, 784};
    ts_tensor* x = ts_tensor_create(dims, 2, xv.data());

    ts_options* o = ts_options_create();
    REQUIRE(ts_options_set_seed(o, 2025) == TS_OK);
    ts_result* r = ts_run_inference("logreg", o, w, x, "softmax");
    REQUIRE(r != nullptr);
    REQUIRE(ts_result_has_output(r) == 1);

    ts_tensor* out = ts_result_output(r);
    REQUIRE(out != nullptr);
    CHECK(ts_tensor_dim(out, 0) == 2);
    CHECK(ts_tensor_dim(out, 1) == 10);

    ts_tensor* ref = ts_eval_float("logreg", w, x);
    REQUIRE(ref != nullptr);
    for (int64_t i = 0; i < 20; ++i)
        CHECK(std::fabs(ts_tensor_data(out)[i] - ts_tensor_data(ref)[i]) < 0.02);

    ts_tensor* post = ts_result_post(r);
    REQUIRE(post != nullptr);
    for (int row = 0; row < 2; ++row) {
        double sum = 0;
        for (int c = 0; c < 10; ++c) sum += ts_tensor_data(post)[row * 10 + c];
        CHECK(std::fabs(sum - 1.0) < 1e-9);
    }

    std::string stats = take(ts_result_stats_csv(r));
    CHECK(stats.find("sender,receiver,phase,messages,payload_bytes,frame_bytes\n") == 0);
    CHECK(stats.find("s2,s0,offline,") != std::string::npos);
    CHECK(stats.find("client,") != std::string::npos);
    CHECK(stats.find("s2,s0,online,") == std::string::npos);  // producer is silent online

    // Same seed, same bits.
    ts_result* r2 = ts_run_inference("logreg", o, w, x, "softmax");
    REQUIRE(r2 != nullptr);
    ts_tensor* out2 = ts_result_output(r2);
    CHECK(std::memcmp(ts_tensor_data(out), ts_tensor_data(out2), 20 * sizeof(double)) == 0);

    ts_tensor_free(out2);
    ts_result_free(r2);
    ts_tensor_free(post);
    ts_tensor_free(ref);
    ts_tensor_free(out);
    ts_result_free(r);

    CHECK(ts_run_inference("logreg", o, w, x, "fourier") == nullptr);
    CHECK(ts_last_error_code() == TS_INVALID_ARGUMENT);
    CHECK(ts_run_inference("Z", o, w, x, "none") == nullptr);
    CHECK(ts_last_error_code() == TS_INVALID_ARGUMENT);

    ts_options_free(o);
    ts_tensor_free(x);
    ts_weights_free(w);
}

TEST_CASE("bad options are reported") {
    ts_options* o = ts_options_create();
    CHECK(ts_options_set_backend(o, "int32") == TS_BAD_CONFIG);
    CHECK(std::string(ts_last_error()).find("int32") != std::string::npos);
    CHECK(ts_options_set_trunc(o, "never") == TS_BAD_CONFIG);
    CHECK(ts_options_set_timeout_ms(o, 0) == TS_INVALID_ARGUMENT);
    CHECK(ts_options_set_backend(o, "int100") == TS_OK);
    CHECK(ts_options_set_trunc(o, "local") == TS_OK);

    fs::path cfg = scratch() / "bad.cfg";
    {
        FILE* f = fopen(cfg.string().c_str(), "w");
        REQUIRE(f != nullptr);
        fputs("backend = int64\nwhatever = 3\n", f);
        fclose(f);
    }
    CHECK(ts_options_load_config(o, cfg.string().c_str()) == TS_BAD_CONFIG);
    CHECK(ts_options_load_config(o, (scratch() / "absent.cfg").string().c_str()) == TS_IO_ERROR);

    // TCP roles need party addresses from a config file.
    ts_weights* w = ts_weights_random("logreg", 1);
    CHECK(ts_run_party("logreg", o, "s0", w, nullptr, "none", 1) == nullptr);
    CHECK(ts_last_error_code() == TS_INVALID_ARGUMENT);
    ts_weights_free(w);
    ts_options_free(o);
}

TEST_CASE("benchmark through the public interface") {
    ts_weights* w = ts_weights_random("logreg", 3);
    REQUIRE(w != nullptr);
    const int64_t batches[1] = {2};
    ts_bench* b = ts_bench_run("logreg", "int64", "interactive", batches, 1, 2, 11, w,
                               nullptr, nullptr, 0);
    REQUIRE(b != nullptr);
    std::string csv = take(ts_bench_csv(b));
    CHECK(csv.find("network,trunc,backend,batch,runs,") == 0);
    CHECK(csv.find("logreg,interactive,int64,2,2,") != std::string::npos);
    std::string text = take(ts_bench_text(b));
    CHECK(text.find("int64") != std::string::npos);
    ts_bench_free(b);

    CHECK(ts_bench_run("logreg", "int64", "interactive", batches, 1, 0, 1, w, nullptr, nullptr,
                       0) == nullptr);
    CHECK(ts_last_error_code() == TS_INVALID_ARGUMENT);
    CHECK(ts_bench_run("logreg", "int512", "interactive", batches, 1, 1, 1, w, nullptr,
                       nullptr, 0) == nullptr);
    CHECK(ts_last_error_code() == TS_BAD_CONFIG);
    ts_weights_free(w);
}
