#ifndef TRISHARE_H
#define TRISHARE_H

/* trishare: three-server secure tensor computation.
 *
 * Two servers (s0, s1) hold additive secret shares; a third (s2) produces
 * correlated randomness during an offline phase and is silent online.
 * This header is the only supported entry point for applications; everything
 * returns either an owned handle (free with the matching *_free) or a status
 * code (0 = success). On failure, pointer-returning calls yield NULL and the
 * thread-local ts_last_error()/ts_last_error_code() describe the cause.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* ---- status ---- */

enum ts_error_code {
    TS_OK = 0,
    TS_INVALID_ARGUMENT,
    TS_SHAPE_MISMATCH,
    TS_BACKEND_MISMATCH,
    TS_SCALE_MISMATCH,
    TS_OVERFLOW_BOUND,
    TS_MISSING_TRIPLE,
    TS_MODE_UNSUPPORTED,
    TS_UNRESOLVED_SHAPE,
    TS_PROTOCOL_DESYNC,
    TS_CHANNEL_CLOSED,
    TS_CONNECT_FAILED,
    TS_TIMEOUT,
    TS_BAD_MAGIC,
    TS_TRUNCATED_FILE,
    TS_MISSING_WEIGHTS,
    TS_DEGREE_TOO_LOW,
    TS_NEGATIVE_VARIANCE,
    TS_BAD_CONFIG,
    TS_IO_ERROR,
    TS_UNKNOWN_ERROR
};

const char* ts_version(void);
/* Message and code of the most recent failure on this thread. */
const char* ts_last_error(void);
int ts_last_error_code(void);
const char* ts_error_name(int code);

/* Free a string returned by any ts_* call. */
void ts_string_free(char* s);

/* ---- dense f64 tensors ---- */

typedef struct ts_tensor ts_tensor;

ts_tensor* ts_tensor_create(const int64_t* dims, size_t rank, const double* data);
void ts_tensor_free(ts_tensor* t);
size_t ts_tensor_rank(const ts_tensor* t);
int64_t ts_tensor_dim(const ts_tensor* t, size_t axis);
int64_t ts_tensor_numel(const ts_tensor* t);
const double* ts_tensor_data(const ts_tensor* t);

/* ---- named weight collections ("TSW1" container on disk) ---- */

typedef struct ts_weights ts_weights;

ts_weights* ts_weights_create(void);
ts_weights* ts_weights_load(const char* path);
int ts_weights_save(const char* path, const ts_weights* w);
/* Random in-range weights for "A" | "B" | "C" | "logreg". */
ts_weights* ts_weights_random(const char* network, uint64_t seed);
int ts_weights_set(ts_weights* w, const char* name, const ts_tensor* t);
ts_tensor* ts_weights_get(const ts_weights* w, const char* name);
char* ts_weights_manifest(const ts_weights* w);
void ts_weights_free(ts_weights* w);

/* ---- IDX data files (MNIST layout) ---- */

/* Images come back [count, rows, cols] scaled to [0, 1]. */
ts_tensor* ts_idx_load_images(const char* path);
/* Caller frees *labels_out with ts_ints_free. */
int ts_idx_load_labels(const char* path, int** labels_out, size_t* count_out);
void ts_ints_free(int* p);
/* Synthetic linearly separable digit data written as an IDX pair. */
int ts_synth_data(const char* images_path, const char* labels_path, int64_t count, uint64_t seed);

/* ---- plaintext utilities ---- */

/* Softmax-regression SGD; deterministic for a seed. images are [N, d] or
 * [N, rows, cols]; losses_out (optional) receives one mean loss per epoch. */
ts_weights* ts_train_logreg(const ts_tensor* images, const int* labels, size_t n_labels,
                            int epochs, double lr, uint64_t seed, double* losses_out);
/* Float reference logits [batch, classes] for the named network. */
ts_tensor* ts_eval_float(const char* network, const ts_weights* w, const ts_tensor* x);
/* Per-sample input dims of the named network (at most 4; batch excluded). */
int ts_network_input_dims(const char* network, int64_t dims_out[4], size_t* rank_out);
/* Fraction of argmax hits of [N, classes] logits against labels. */
double ts_accuracy(const ts_tensor* logits, const int* labels, size_t n_labels, int* status);

/* ---- session options ---- */

typedef struct ts_options ts_options;

ts_options* ts_options_create(void);
void ts_options_free(ts_options* o);
int ts_options_set_backend(ts_options* o, const char* backend); /* "int64" | "int100" */
int ts_options_set_trunc(ts_options* o, const char* trunc);     /* "interactive" | "local" */
int ts_options_set_seed(ts_options* o, uint64_t seed);
int ts_options_set_timeout_ms(ts_options* o, int timeout_ms);
/* Party addresses plus backend/trunc/seed/fixed-point overrides from a
 * key-value config file; required for TCP sessions. */
int ts_options_load_config(ts_options* o, const char* path);

/* ---- secure inference ---- */

typedef struct ts_result ts_result;

/* Everything in one process over in-memory channels. x is [batch, ...]
 * model input; post is "none" | "sigmoid" | "softmax" | "argmax". */
ts_result* ts_run_inference(const char* network, const ts_options* o, const ts_weights* w,
                            const ts_tensor* x, const char* post);

/* One TCP party. role is a party name from the config (s0/s1/s2 or a named
 * provider/receiver). The client passes x; the owner passes private dense and
 * conv weights; every party passes w for networks with batch normalization
 * (the folded scale/shift are public plan constants, so all plans must agree).
 * Returns once the session finishes; outputs are present at the receiver. */
ts_result* ts_run_party(const char* network, const ts_options* o, const char* role,
                        const ts_weights* w, const ts_tensor* x, const char* post, int64_t batch);

ts_tensor* ts_result_output(const ts_result* r);     /* decoded fixed point */
ts_tensor* ts_result_post(const ts_result* r);       /* after the post op */
int ts_result_has_output(const ts_result* r);
/* Per-link message/byte counts: "sender,receiver,phase,messages,payload_bytes,frame_bytes". */
char* ts_result_stats_csv(const ts_result* r);
void ts_result_free(ts_result* r);

/* ---- benchmark ---- */

typedef struct ts_bench ts_bench;

/* backends is comma separated ("int64,int100"). images/labels optional;
 * without images the bench uses synthetic in-range inputs. */
ts_bench* ts_bench_run(const char* network, const char* backends, const char* trunc,
                       const int64_t* batches, size_t n_batches, int runs, uint64_t seed,
                       const ts_weights* w, const ts_tensor* images, const int* labels,
                       size_t n_labels);
char* ts_bench_text(const ts_bench* b);
char* ts_bench_csv(const ts_bench* b);
void ts_bench_free(ts_bench* b);

#ifdef __cplusplus
}
#endif

#endif /* TRISHARE_H */
