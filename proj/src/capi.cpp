#include "trishare/trishare.h"

#include <cstdlib>
#include <cstring>
#include <optional>

#include "bench.hpp"
#include "errors.hpp"
#include "idx.hpp"
#include "logreg.hpp"
#include "nn.hpp"
#include "runtime.hpp"
#include "weights.hpp"

using namespace trishare;

struct ts_tensor {
    RealTensor t;
};
struct ts_weights {
    WeightsMap w;
};
struct ts_options {
    SessionConfig cfg;
    bool have_parties = false;
};
struct ts_result {
    std::optional<OutputResult> out;
    CostTable sent;
    std::vector<std::string> party_names;
};
struct ts_bench {
    BenchReport rep;
};

namespace {

thread_local std::string g_error;
thread_local int g_code = TS_OK;

int code_of(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return TS_INVALID_ARGUMENT;
        case ErrorCode::ShapeMismatch: return TS_SHAPE_MISMATCH;
        case ErrorCode::BackendMismatch: return TS_BACKEND_MISMATCH;
        case ErrorCode::ScaleMismatch: return TS_SCALE_MISMATCH;
        case ErrorCode::OverflowBound: return TS_OVERFLOW_BOUND;
        case ErrorCode::MissingTriple: return TS_MISSING_TRIPLE;
        case ErrorCode::ModeUnsupported: return TS_MODE_UNSUPPORTED;
        case ErrorCode::UnresolvedShape: return TS_UNRESOLVED_SHAPE;
        case ErrorCode::ProtocolDesync: return TS_PROTOCOL_DESYNC;
        case ErrorCode::ChannelClosed: return TS_CHANNEL_CLOSED;
        case ErrorCode::ConnectFailed: return TS_CONNECT_FAILED;
        case ErrorCode::Timeout: return TS_TIMEOUT;
        case ErrorCode::BadMagic: return TS_BAD_MAGIC;
        case ErrorCode::TruncatedFile: return TS_TRUNCATED_FILE;
        case ErrorCode::MissingWeights: return TS_MISSING_WEIGHTS;
        case ErrorCode::DegreeTooLow: return TS_DEGREE_TOO_LOW;
        case ErrorCode::NegativeVariance: return TS_NEGATIVE_VARIANCE;
        case ErrorCode::BadConfig: return TS_BAD_CONFIG;
        case ErrorCode::IoError: return TS_IO_ERROR;
    }
    return TS_UNKNOWN_ERROR;
}

// Runs fn, translating exceptions into the thread-local status. Returns the
// function value, or `bad` after a failure.
template <typename T, typename Fn>
T guard(T bad, Fn&& fn) {
    g_code = TS_OK;
    g_error.clear();
    try {
        return fn();
    } catch (const Error& e) {
        g_code = code_of(e.code());
        g_error = e.what();
    } catch (const std::exception& e) {
        g_code = TS_UNKNOWN_ERROR;
        g_error = e.what();
    }
    return bad;
}

// Status-returning variant: TS_OK or the translated error code.
template <typename Fn>
int guard_status(Fn&& fn) {
    guard(0, [&] {
        fn();
        return 0;
    });
    return g_code;
}

char* dup_string(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (p) std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

void require(bool cond, const char* what) {
    if (!cond) fail(ErrorCode::InvalidArgument, what);
}

PostOp post_from_string(const char* post) {
    std::string p = post ? post : "none";
    if (p == "none") return PostOp::None;
    if (p == "sigmoid") return PostOp::Sigmoid;
    if (p == "softmax") return PostOp::Softmax;
    if (p == "argmax") return PostOp::Argmax;
    fail(ErrorCode::InvalidArgument, "post must be none, sigmoid, softmax or argmax");
}

SessionConfig config_for(const ts_options* o, Backend fallback_backend) {
    SessionConfig cfg;
    cfg.backend = fallback_backend;
    if (o) cfg = o->cfg;
    if (!cfg.fp_explicit) cfg.fp = nn_fixed_point(cfg.backend);
    return cfg;
}

ts_result* wrap_party_result(std::map<std::string, OutputResult> outputs, CostTable sent,
                             const SessionConfig& cfg) {
    auto* r = new ts_result;
    if (!outputs.empty()) r->out = std::move(outputs.begin()->second);
    r->sent = std::move(sent);
    for (const PartyAddr& p : cfg.parties) r->party_names.push_back(p.name);
    return r;
}

}  // namespace

extern "C" {

const char* ts_version(void) { return "trishare 1.0.0"; }

const char* ts_last_error(void) { return g_error.c_str(); }

int ts_last_error_code(void) { return g_code; }

const char* ts_error_name(int code) {
    switch (code) {
        case TS_OK: return "Ok";
        case TS_INVALID_ARGUMENT: return "InvalidArgument";
        case TS_SHAPE_MISMATCH: return "ShapeMismatch";
        case TS_BACKEND_MISMATCH: return "BackendMismatch";
        case TS_SCALE_MISMATCH: return "ScaleMismatch";
        case TS_OVERFLOW_BOUND: return "OverflowBound";
        case TS_MISSING_TRIPLE: return "MissingTriple";
        case TS_MODE_UNSUPPORTED: return "ModeUnsupported";
        case TS_UNRESOLVED_SHAPE: return "UnresolvedShape";
        case TS_PROTOCOL_DESYNC: return "ProtocolDesync";
        case TS_CHANNEL_CLOSED: return "ChannelClosed";
        case TS_CONNECT_FAILED: return "ConnectFailed";
        case TS_TIMEOUT: return "Timeout";
        case TS_BAD_MAGIC: return "BadMagic";
        case TS_TRUNCATED_FILE: return "TruncatedFile";
        case TS_MISSING_WEIGHTS: return "MissingWeights";
        case TS_DEGREE_TOO_LOW: return "DegreeTooLow";
        case TS_NEGATIVE_VARIANCE: return "NegativeVariance";
        case TS_BAD_CONFIG: return "BadConfig";
        case TS_IO_ERROR: return "IoError";
    }
    return "Unknown";
}

void ts_string_free(char* s) { std::free(s); }

/* ---- tensors ---- */

ts_tensor* ts_tensor_create(const int64_t* dims, size_t rank, const double* data) {
    return guard<ts_tensor*>(nullptr, [&] {
        require(rank == 0 || dims != nullptr, "dims is null");
        Shape shape(dims, dims + rank);
        RealTensor t = RealTensor::zeros(shape);
        require(data != nullptr || t.numel() == 0, "data is null");
        if (t.numel() > 0)
            std::memcpy(t.data.data(), data, static_cast<size_t>(t.numel()) * sizeof(double));
        return new ts_tensor{std::move(t)};
    });
}

void ts_tensor_free(ts_tensor* t) { delete t; }

size_t ts_tensor_rank(const ts_tensor* t) { return t ? t->t.shape.size() : 0; }

int64_t ts_tensor_dim(const ts_tensor* t, size_t axis) {
    if (!t || axis >= t->t.shape.size()) return -1;
    return t->t.shape[axis];
}

int64_t ts_tensor_numel(const ts_tensor* t) { return t ? t->t.numel() : 0; }

const double* ts_tensor_data(const ts_tensor* t) { return t ? t->t.data.data() : nullptr; }

/* ---- weights ---- */

ts_weights* ts_weights_create(void) { return new ts_weights; }

ts_weights* ts_weights_load(const char* path) {
    return guard<ts_weights*>(nullptr, [&] {
        require(path != nullptr, "path is null");
        return new ts_weights{load_weights(path)};
    });
}

int ts_weights_save(const char* path, const ts_weights* w) {
    return guard_status([&] {
        require(path != nullptr && w != nullptr, "path or weights is null");
        save_weights(path, w->w);
    });
}

ts_weights* ts_weights_random(const char* network, uint64_t seed) {
    return guard<ts_weights*>(nullptr, [&] {
        require(network != nullptr, "network is null");
        ModelSpec m = build_network(network_from_string(network));
        return new ts_weights{random_weights(m, seed)};
    });
}

int ts_weights_set(ts_weights* w, const char* name, const ts_tensor* t) {
    return guard_status([&] {
        require(w != nullptr && name != nullptr && t != nullptr, "null argument");
        w->w[name] = t->t;
    });
}

ts_tensor* ts_weights_get(const ts_weights* w, const char* name) {
    return guard<ts_tensor*>(nullptr, [&] {
        require(w != nullptr && name != nullptr, "null argument");
        auto it = w->w.find(name);
        if (it == w->w.end()) fail(ErrorCode::MissingWeights, std::string(name) + " not present");
        return new ts_tensor{it->second};
    });
}

char* ts_weights_manifest(const ts_weights* w) {
    return guard<char*>(nullptr, [&] {
        require(w != nullptr, "weights is null");
        return dup_string(weights_manifest(w->w));
    });
}

void ts_weights_free(ts_weights* w) { delete w; }

/* ---- IDX ---- */

ts_tensor* ts_idx_load_images(const char* path) {
    return guard<ts_tensor*>(nullptr, [&] {
        require(path != nullptr, "path is null");
        return new ts_tensor{load_idx_images(path)};
    });
}

int ts_idx_load_labels(const char* path, int** labels_out, size_t* count_out) {
    return guard_status([&] {
        require(path != nullptr && labels_out != nullptr && count_out != nullptr, "null argument");
        std::vector<int> labels = load_idx_labels(path);
        int* p = static_cast<int*>(std::malloc(sizeof(int) * std::max<size_t>(labels.size(), 1)));
        if (!p) fail(ErrorCode::IoError, "out of memory");
        std::memcpy(p, labels.data(), sizeof(int) * labels.size());
        *labels_out = p;
        *count_out = labels.size();
    });
}

void ts_ints_free(int* p) { std::free(p); }

int ts_synth_data(const char* images_path, const char* labels_path, int64_t count, uint64_t seed) {
    return guard_status([&] {
        require(images_path != nullptr && labels_path != nullptr, "null path");
        SynthData d = synth_mnist(count, seed);
        save_idx_images(images_path, d.pixels, d.count, d.rows, d.cols);
        save_idx_labels(labels_path, d.labels);
    });
}

/* ---- plaintext utilities ---- */

ts_weights* ts_train_logreg(const ts_tensor* images, const int* labels, size_t n_labels,
                            int epochs, double lr, uint64_t seed, double* losses_out) {
    return guard<ts_weights*>(nullptr, [&] {
        require(images != nullptr && labels != nullptr, "null argument");
        RealTensor x = images->t;
        if (x.shape.size() == 3) x = flatten_images(x);
        TrainResult tr =
            train_logreg(x, std::vector<int>(labels, labels + n_labels), epochs, lr, seed);
        if (losses_out)
            std::memcpy(losses_out, tr.epoch_loss.data(), sizeof(double) * tr.epoch_loss.size());
        return new ts_weights{std::move(tr.weights)};
    });
}

ts_tensor* ts_eval_float(const char* network, const ts_weights* w, const ts_tensor* x) {
    return guard<ts_tensor*>(nullptr, [&] {
        require(network != nullptr && w != nullptr && x != nullptr, "null argument");
        ModelSpec m = build_network(network_from_string(network));
        return new ts_tensor{eval_float(m, w->w, x->t)};
    });
}

int ts_network_input_dims(const char* network, int64_t dims_out[4], size_t* rank_out) {
    return guard_status([&] {
        require(network != nullptr && dims_out != nullptr && rank_out != nullptr, "null argument");
        ModelSpec m = build_network(network_from_string(network));
        require(m.input_shape.size() <= 4, "input rank exceeds the interface");
        *rank_out = m.input_shape.size();
        for (size_t i = 0; i < m.input_shape.size(); ++i) dims_out[i] = m.input_shape[i];
    });
}

double ts_accuracy(const ts_tensor* logits, const int* labels, size_t n_labels, int* status) {
    double acc = guard<double>(-1.0, [&] {
        require(logits != nullptr && labels != nullptr, "null argument");
        return classification_accuracy(logits->t, std::vector<int>(labels, labels + n_labels));
    });
    if (status) *status = g_code;
    return acc;
}

/* ---- options ---- */

ts_options* ts_options_create(void) { return new ts_options; }

void ts_options_free(ts_options* o) { delete o; }

int ts_options_set_backend(ts_options* o, const char* backend) {
    return guard_status([&] {
        require(o != nullptr && backend != nullptr, "null argument");
        o->cfg.backend = backend_from_string(backend);
    });
}

int ts_options_set_trunc(ts_options* o, const char* trunc) {
    return guard_status([&] {
        require(o != nullptr && trunc != nullptr, "null argument");
        o->cfg.trunc = trunc_from_string(trunc);
    });
}

int ts_options_set_seed(ts_options* o, uint64_t seed) {
    return guard_status([&] {
        require(o != nullptr, "options is null");
        o->cfg.seeded = true;
        o->cfg.seed = seed;
    });
}

int ts_options_set_timeout_ms(ts_options* o, int timeout_ms) {
    return guard_status([&] {
        require(o != nullptr, "options is null");
        require(timeout_ms > 0, "timeout must be positive");
        o->cfg.timeout_ms = timeout_ms;
    });
}

int ts_options_load_config(ts_options* o, const char* path) {
    return guard_status([&] {
        require(o != nullptr && path != nullptr, "null argument");
        o->cfg = SessionConfig::parse_file(path);
        o->have_parties = !o->cfg.parties.empty();
    });
}

/* ---- inference ---- */

ts_result* ts_run_inference(const char* network, const ts_options* o, const ts_weights* w,
                            const ts_tensor* x, const char* post) {
    return guard<ts_result*>(nullptr, [&] {
        require(network != nullptr && w != nullptr && x != nullptr, "null argument");
        require(!x->t.shape.empty(), "x needs a batch axis");
        ModelSpec m = build_network(network_from_string(network));
        SessionConfig cfg = config_for(o, Backend::Int64);
        InferenceIo io;
        io.batch = x->t.shape[0];
        io.post = post_from_string(post);
        ComputationPlan plan = build_inference_plan(m, cfg.backend, cfg.fp, cfg.trunc, w->w, io);
        SessionInputs inputs;
        inputs[io.input_party]["x"] = x->t;
        inputs[io.owner_party] = owner_inputs(m, w->w);
        SessionResult sr = run_inmemory(plan, cfg, inputs);
        cfg.ensure_parties_for(plan);
        return wrap_party_result(std::move(sr.outputs), std::move(sr.sent), cfg);
    });
}

ts_result* ts_run_party(const char* network, const ts_options* o, const char* role,
                        const ts_weights* w, const ts_tensor* x, const char* post, int64_t batch) {
    return guard<ts_result*>(nullptr, [&] {
        require(network != nullptr && role != nullptr, "null argument");
        require(o != nullptr && o->have_parties, "options need a config with party addresses");
        ModelSpec m = build_network(network_from_string(network));
        SessionConfig cfg = config_for(o, o->cfg.backend);
        InferenceIo io;
        io.batch = batch;
        io.post = post_from_string(post);
        WeightsMap weights = w ? w->w : WeightsMap{};
        ComputationPlan plan =
            build_inference_plan(m, cfg.backend, cfg.fp, cfg.trunc, weights, io);
        cfg.ensure_parties_for(plan);
        int self = cfg.party_index(role);
        PartyInputs inputs;
        const PartyInputs* ip = nullptr;
        if (role == io.input_party) {
            require(x != nullptr, "the input party must pass x");
            require(!x->t.shape.empty() && x->t.shape[0] == batch, "x batch axis must match batch");
            inputs["x"] = x->t;
            ip = &inputs;
        } else if (role == io.owner_party) {
            require(w != nullptr, "the owner must pass weights");
            inputs = owner_inputs(m, weights);
            ip = &inputs;
        }
        PartyRunResult pr = run_tcp_party(plan, cfg, self, ip);
        return wrap_party_result(std::move(pr.outputs), std::move(pr.sent), cfg);
    });
}

ts_tensor* ts_result_output(const ts_result* r) {
    return guard<ts_tensor*>(nullptr, [&] {
        require(r != nullptr, "result is null");
        if (!r->out) fail(ErrorCode::InvalidArgument, "this party received no outputs");
        return new ts_tensor{r->out->decoded};
    });
}

ts_tensor* ts_result_post(const ts_result* r) {
    return guard<ts_tensor*>(nullptr, [&] {
        require(r != nullptr, "result is null");
        if (!r->out) fail(ErrorCode::InvalidArgument, "this party received no outputs");
        return new ts_tensor{r->out->post_value};
    });
}

int ts_result_has_output(const ts_result* r) { return r && r->out ? 1 : 0; }

char* ts_result_stats_csv(const ts_result* r) {
    return guard<char*>(nullptr, [&] {
        require(r != nullptr, "result is null");
        return dup_string(cost_table_str(r->sent, r->party_names));
    });
}

void ts_result_free(ts_result* r) { delete r; }

/* ---- benchmark ---- */

ts_bench* ts_bench_run(const char* network, const char* backends, const char* trunc,
                       const int64_t* batches, size_t n_batches, int runs, uint64_t seed,
                       const ts_weights* w, const ts_tensor* images, const int* labels,
                       size_t n_labels) {
    return guard<ts_bench*>(nullptr, [&] {
        require(network != nullptr && backends != nullptr && trunc != nullptr, "null argument");
        require(w != nullptr, "weights is null (use ts_weights_random)");
        ModelSpec m = build_network(network_from_string(network));
        BenchOptions opts;
        opts.backends.clear();
        std::string list = backends;
        for (size_t pos = 0; pos < list.size();) {
            size_t comma = list.find(',', pos);
            if (comma == std::string::npos) comma = list.size();
            opts.backends.push_back(backend_from_string(list.substr(pos, comma - pos)));
            pos = comma + 1;
        }
        require(!opts.backends.empty(), "backends list is empty");
        if (n_batches) {
            require(batches != nullptr, "batches is null");
            opts.batch_sizes.assign(batches, batches + n_batches);
        }
        opts.runs = runs;
        opts.trunc = trunc_from_string(trunc);
        opts.seed = seed;
        std::vector<int> lab;
        if (labels) lab.assign(labels, labels + n_labels);
        BenchReport rep = run_bench(m, w->w, opts, images ? &images->t : nullptr,
                                    labels ? &lab : nullptr);
        return new ts_bench{std::move(rep)};
    });
}

char* ts_bench_text(const ts_bench* b) {
    return guard<char*>(nullptr, [&] {
        require(b != nullptr, "bench is null");
        return dup_string(b->rep.text());
    });
}

char* ts_bench_csv(const ts_bench* b) {
    return guard<char*>(nullptr, [&] {
        require(b != nullptr, "bench is null");
        return dup_string(b->rep.csv());
    });
}

void ts_bench_free(ts_bench* b) { delete b; }

}  // extern "C"
