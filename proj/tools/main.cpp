// trishare command line: secure inference, benchmarks, and the plaintext
// utilities around them. Talks to the library through the C API only.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "trishare/trishare.h"

namespace {

int exit_code_for(int ts_code) { return ts_code == TS_BAD_CONFIG ? 2 : 1; }

int die() {
    std::fprintf(stderr, "error: %s\n", ts_last_error());
    return exit_code_for(ts_last_error_code());
}

struct TensorDeleter {
    void operator()(ts_tensor* t) const { ts_tensor_free(t); }
};
struct WeightsDeleter {
    void operator()(ts_weights* w) const { ts_weights_free(w); }
};
struct OptionsDeleter {
    void operator()(ts_options* o) const { ts_options_free(o); }
};
struct ResultDeleter {
    void operator()(ts_result* r) const { ts_result_free(r); }
};
struct BenchDeleter {
    void operator()(ts_bench* b) const { ts_bench_free(b); }
};
using TensorPtr = std::unique_ptr<ts_tensor, TensorDeleter>;
using WeightsPtr = std::unique_ptr<ts_weights, WeightsDeleter>;
using OptionsPtr = std::unique_ptr<ts_options, OptionsDeleter>;
using ResultPtr = std::unique_ptr<ts_result, ResultDeleter>;
using BenchPtr = std::unique_ptr<ts_bench, BenchDeleter>;

void print_tensor(const ts_tensor* t, const char* label) {
    size_t rank = ts_tensor_rank(t);
    std::printf("%s shape [", label);
    for (size_t i = 0; i < rank; ++i)
        std::printf("%s%" PRId64, i ? ", " : "", ts_tensor_dim(t, i));
    std::printf("]\n");
    int64_t numel = ts_tensor_numel(t);
    int64_t cols = rank ? ts_tensor_dim(t, rank - 1) : 1;
    if (cols <= 0) cols = 1;
    const double* d = ts_tensor_data(t);
    int64_t shown = numel > 400 ? 400 : numel;
    for (int64_t i = 0; i < shown; ++i) {
        std::printf("% .6f%s", d[i], (i + 1) % cols == 0 ? "\n" : " ");
    }
    if (shown < numel) std::printf("... (%" PRId64 " more values)\n", numel - shown);
}

// Batch of rows from IDX images reshaped to the model input, or synthetic
// uniform values when no file was given.
TensorPtr make_input(const std::string& network, const std::string& images_path, int64_t batch,
                     int64_t index, uint64_t seed) {
    int64_t sample_dims[4];
    size_t sample_rank = 0;
    if (ts_network_input_dims(network.c_str(), sample_dims, &sample_rank)) return nullptr;
    int64_t per = 1;
    for (size_t i = 0; i < sample_rank; ++i) per *= sample_dims[i];

    std::vector<int64_t> dims{batch};
    dims.insert(dims.end(), sample_dims, sample_dims + sample_rank);
    std::vector<double> data(static_cast<size_t>(batch * per));

    if (!images_path.empty()) {
        TensorPtr images(ts_idx_load_images(images_path.c_str()));
        if (!images) return nullptr;
        int64_t n = ts_tensor_dim(images.get(), 0);
        int64_t img = ts_tensor_numel(images.get()) / n;
        if (img != per) {
            std::fprintf(stderr, "error: image size %" PRId64 " does not match model input %" PRId64 "\n",
                         img, per);
            return nullptr;
        }
        const double* src = ts_tensor_data(images.get());
        for (int64_t i = 0; i < batch; ++i) {
            int64_t row = (index + i) % n;
            std::memcpy(&data[static_cast<size_t>(i * per)], &src[row * per],
                        static_cast<size_t>(per) * sizeof(double));
        }
    } else {
        std::mt19937_64 gen(seed ^ 0x7473696e70757473ull);  // input synthesis only
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        for (double& v : data) v = uni(gen);
    }
    return TensorPtr(ts_tensor_create(dims.data(), dims.size(), data.data()));
}

WeightsPtr make_weights(const std::string& network, const std::string& weights_path,
                        uint64_t seed) {
    if (!weights_path.empty()) return WeightsPtr(ts_weights_load(weights_path.c_str()));
    std::fprintf(stderr, "note: no --weights given, using random in-range weights (seed %" PRIu64 ")\n",
                 seed);
    return WeightsPtr(ts_weights_random(network.c_str(), seed));
}

bool write_file(const std::string& path, const char* text) {
    if (path == "-") {
        std::fputs(text, stdout);
        return true;
    }
    std::ofstream os(path);
    os << text;
    return static_cast<bool>(os);
}

std::vector<int> load_labels_or_exit(const std::string& path, bool& ok) {
    int* raw = nullptr;
    size_t n = 0;
    ok = ts_idx_load_labels(path.c_str(), &raw, &n) == TS_OK;
    std::vector<int> labels;
    if (ok) {
        labels.assign(raw, raw + n);
        ts_ints_free(raw);
    }
    return labels;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"three-server secure tensor inference"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(ts_version()));

    // run
    auto* run = app.add_subcommand("run", "secure inference (in-memory or one TCP party)");
    std::string network = "logreg", transport = "inmemory", role, config_path, weights_path,
                images_path, post = "softmax", stats_out;
    std::string backend, trunc;
    int64_t batch = 1, index = 0;
    uint64_t seed = 1;
    bool seeded = false;
    int timeout_ms = 0;
    run->add_option("--network", network, "A | B | C | logreg")->capture_default_str();
    run->add_option("--transport", transport, "inmemory | tcp")->capture_default_str();
    run->add_option("--role", role, "party name for tcp (s0, s1, s2, client, owner)");
    run->add_option("--config", config_path, "session config file");
    run->add_option("--backend", backend, "int64 | int100");
    run->add_option("--trunc", trunc, "interactive | local");
    run->add_option("--batch", batch, "rows per inference")->capture_default_str();
    run->add_option("--index", index, "first image row")->capture_default_str();
    run->add_option("--weights", weights_path, "TSW1 weights file (default: random)");
    run->add_option("--images", images_path, "IDX images for the client input");
    run->add_option("--post", post, "none | sigmoid | softmax | argmax")->capture_default_str();
    run->add_option("--seed", seed, "deterministic session randomness")
        ->each([&](const std::string&) { seeded = true; });
    run->add_option("--timeout-ms", timeout_ms, "receive timeout");
    run->add_option("--stats-out", stats_out, "write per-link traffic CSV ('-' = stdout)");

    // bench
    auto* bench = app.add_subcommand("bench", "time secure inference against the float reference");
    std::string b_network = "A", b_backends = "int64", b_trunc = "interactive", b_weights,
                b_images, b_labels, b_csv_out;
    std::string b_batches = "1,10,100";
    int b_runs = 10;
    uint64_t b_seed = 1;
    bench->add_option("--network", b_network, "A | B | C | logreg")->capture_default_str();
    bench->add_option("--backend", b_backends, "comma list: int64,int100")->capture_default_str();
    bench->add_option("--trunc", b_trunc, "interactive | local")->capture_default_str();
    bench->add_option("--batch", b_batches, "comma list of batch sizes")->capture_default_str();
    bench->add_option("--runs", b_runs, "runs per batch size")->capture_default_str();
    bench->add_option("--seed", b_seed, "weights/inputs seed")->capture_default_str();
    bench->add_option("--weights", b_weights, "TSW1 weights file (default: random)");
    bench->add_option("--images", b_images, "IDX images");
    bench->add_option("--labels", b_labels, "IDX labels (enables accuracy columns)");
    bench->add_option("--stats-out", b_csv_out, "write the CSV report ('-' = stdout)");

    // train-logreg
    auto* train = app.add_subcommand("train-logreg", "plaintext softmax regression trainer");
    std::string t_images, t_labels, t_out = "logreg.tsw";
    int t_epochs = 5;
    double t_lr = 0.5;
    uint64_t t_seed = 1;
    train->add_option("--images", t_images, "IDX training images")->required();
    train->add_option("--labels", t_labels, "IDX training labels")->required();
    train->add_option("--epochs", t_epochs, "SGD epochs")->capture_default_str();
    train->add_option("--lr", t_lr, "learning rate")->capture_default_str();
    train->add_option("--seed", t_seed, "shuffle seed")->capture_default_str();
    train->add_option("--out", t_out, "output TSW1 path")->capture_default_str();

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "write synthetic IDX image/label files");
    std::string g_images = "synth-images.idx", g_labels = "synth-labels.idx";
    int64_t g_count = 1000;
    uint64_t g_seed = 1;
    gen->add_option("--count", g_count, "sample count")->capture_default_str();
    gen->add_option("--seed", g_seed, "generator seed")->capture_default_str();
    gen->add_option("--images-out", g_images, "IDX images path")->capture_default_str();
    gen->add_option("--labels-out", g_labels, "IDX labels path")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    if (gen->parsed()) {
        if (ts_synth_data(g_images.c_str(), g_labels.c_str(), g_count, g_seed)) return die();
        std::printf("wrote %" PRId64 " samples to %s / %s\n", g_count, g_images.c_str(),
                    g_labels.c_str());
        return 0;
    }

    if (train->parsed()) {
        TensorPtr images(ts_idx_load_images(t_images.c_str()));
        if (!images) return die();
        bool ok = false;
        std::vector<int> labels = load_labels_or_exit(t_labels, ok);
        if (!ok) return die();
        std::vector<double> losses(static_cast<size_t>(t_epochs > 0 ? t_epochs : 0));
        WeightsPtr w(ts_train_logreg(images.get(), labels.data(), labels.size(), t_epochs, t_lr,
                                     t_seed, losses.data()));
        if (!w) return die();
        for (size_t e = 0; e < losses.size(); ++e)
            std::printf("epoch %zu: loss %.6f\n", e + 1, losses[e]);
        TensorPtr logits(ts_eval_float("logreg", w.get(), images.get()));
        if (!logits) return die();
        int status = 0;
        double acc = ts_accuracy(logits.get(), labels.data(), labels.size(), &status);
        if (status) return die();
        std::printf("train accuracy: %.4f\n", acc);
        if (ts_weights_save(t_out.c_str(), w.get())) return die();
        std::printf("weights written to %s\n", t_out.c_str());
        return 0;
    }

    if (bench->parsed()) {
        WeightsPtr w = make_weights(b_network, b_weights, b_seed);
        if (!w) return die();
        TensorPtr images;
        std::vector<int> labels;
        if (!b_images.empty()) {
            images.reset(ts_idx_load_images(b_images.c_str()));
            if (!images) return die();
        }
        if (!b_labels.empty()) {
            bool ok = false;
            labels = load_labels_or_exit(b_labels, ok);
            if (!ok) return die();
        }
        std::vector<int64_t> batches;
        for (size_t pos = 0; pos < b_batches.size();) {
            size_t comma = b_batches.find(',', pos);
            if (comma == std::string::npos) comma = b_batches.size();
            batches.push_back(std::stoll(b_batches.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        BenchPtr rep(ts_bench_run(b_network.c_str(), b_backends.c_str(), b_trunc.c_str(),
                                  batches.data(), batches.size(), b_runs, b_seed, w.get(),
                                  images.get(), labels.empty() ? nullptr : labels.data(),
                                  labels.size()));
        if (!rep) return die();
        char* text = ts_bench_text(rep.get());
        std::fputs(text, stdout);
        ts_string_free(text);
        if (!b_csv_out.empty()) {
            char* csv = ts_bench_csv(rep.get());
            bool ok = write_file(b_csv_out, csv);
            ts_string_free(csv);
            if (!ok) {
                std::fprintf(stderr, "error: cannot write %s\n", b_csv_out.c_str());
                return 1;
            }
        }
        return 0;
    }

    // run
    OptionsPtr opts(ts_options_create());
    if (!config_path.empty() && ts_options_load_config(opts.get(), config_path.c_str()))
        return die();
    if (!backend.empty() && ts_options_set_backend(opts.get(), backend.c_str())) return die();
    if (!trunc.empty() && ts_options_set_trunc(opts.get(), trunc.c_str())) return die();
    if (seeded && ts_options_set_seed(opts.get(), seed)) return die();
    if (timeout_ms > 0 && ts_options_set_timeout_ms(opts.get(), timeout_ms)) return die();

    ResultPtr result;
    if (transport == "inmemory") {
        WeightsPtr w = make_weights(network, weights_path, seed);
        if (!w) return die();
        TensorPtr x = make_input(network, images_path, batch, index, seed);
        if (!x) return ts_last_error_code() ? die() : 1;
        result.reset(ts_run_inference(network.c_str(), opts.get(), w.get(), x.get(), post.c_str()));
        if (!result) return die();
    } else if (transport == "tcp") {
        if (role.empty() || config_path.empty()) {
            std::fprintf(stderr, "error: --transport tcp needs --role and --config\n");
            return 2;
        }
        WeightsPtr w;
        if (!weights_path.empty()) {
            w.reset(ts_weights_load(weights_path.c_str()));
            if (!w) return die();
        }
        TensorPtr x;
        if (role == "client") {
            x = make_input(network, images_path, batch, index, seed);
            if (!x) return ts_last_error_code() ? die() : 1;
        }
        result.reset(ts_run_party(network.c_str(), opts.get(), role.c_str(), w.get(), x.get(),
                                  post.c_str(), batch));
        if (!result) return die();
    } else {
        std::fprintf(stderr, "error: --transport must be inmemory or tcp\n");
        return 2;
    }

    if (ts_result_has_output(result.get())) {
        TensorPtr logits(ts_result_output(result.get()));
        if (logits) print_tensor(logits.get(), "logits");
        if (post != "none") {
            TensorPtr pv(ts_result_post(result.get()));
            if (pv) print_tensor(pv.get(), post.c_str());
        }
    } else {
        std::printf("session complete (no outputs at this party)\n");
    }
    if (!stats_out.empty()) {
        char* csv = ts_result_stats_csv(result.get());
        if (!csv) return die();
        bool ok = write_file(stats_out, csv);
        ts_string_free(csv);
        if (!ok) {
            std::fprintf(stderr, "error: cannot write %s\n", stats_out.c_str());
            return 1;
        }
    }
    return 0;
}
