#pragma once

#include <map>
#include <string>
#include <vector>

#include "plan.hpp"

namespace trishare {

enum class NetworkId { A, B, C, LogReg };
NetworkId network_from_string(const std::string& s);
const char* network_name(NetworkId id);

struct PolyFit {
    std::vector<double> coeffs;  // lowest degree first
    double max_err = 0;          // max |p(t) - relu(t)| on a dense grid
};

// Least-squares fit of max(0, t) on [lo, hi] over 1001 uniform grid points.
PolyFit poly_relu_fit(int degree, double lo = -3.0, double hi = 3.0);

struct LayerSpec {
    enum class Kind { Dense, Conv2D, AvgPool, BatchNormFolded, PolyActivation };
    Kind kind;
    std::string prefix;           // weight name prefix: fc1, conv2, bn3, ...
    int64_t in = 0, out = 0;      // Dense
    int64_t field = 0, channels = 0, stride = 1;  // Conv2D, VALID padding
    int64_t window = 2;           // AvgPool
    std::vector<double> coeffs;   // PolyActivation, lowest degree first
};

struct ModelSpec {
    std::string name;
    Shape input_shape;  // per sample, batch axis excluded
    std::vector<LayerSpec> layers;
};

ModelSpec build_network(NetworkId which, int poly_degree = 4);
std::string model_manifest(const ModelSpec& m);

using WeightsMap = std::map<std::string, RealTensor>;

// Every tensor the model needs: dense w/b, conv kernels, and raw batchnorm
// parameters (gamma, beta, mean, var).
std::vector<std::pair<std::string, Shape>> model_weight_shapes(const ModelSpec& m);

// In-range random weights: pre-activations stay well inside [-3, 3] for
// inputs in [0, 1].
WeightsMap random_weights(const ModelSpec& m, uint64_t seed);

// scale = gamma / sqrt(var + eps), shift = beta - mean * scale.
std::pair<RealTensor, RealTensor> fold_batchnorm(const RealTensor& gamma, const RealTensor& beta,
                                                 const RealTensor& mean, const RealTensor& var,
                                                 double eps = 1e-5);

struct InferenceIo {
    std::string input_party = "client";
    std::string owner_party = "owner";
    std::string receiver_party = "client";
    std::string output_name = "logits";
    PostOp post = PostOp::None;
    int64_t batch = 1;
};

// Lowers the model to a plan: dense/conv weights are the owner's private
// inputs; folded batchnorm parameters become public constants; dense bias is
// applied by augmenting x with a ones column and w with the bias row.
ComputationPlan build_inference_plan(const ModelSpec& m, Backend backend, FixedPointConfig fp,
                                     TruncationMode trunc, const WeightsMap& weights,
                                     const InferenceIo& io);

using PartyInputs = std::map<std::string, RealTensor>;  // tensor name -> value

// The weight tensors the owner feeds into the session (dense/conv only;
// batchnorm is folded into the plan).
PartyInputs owner_inputs(const ModelSpec& m, const WeightsMap& weights);

// Plaintext reference in double arithmetic with the same polynomial
// activations; x is [batch, ...input_shape], result the [batch, classes]
// logits.
RealTensor eval_float(const ModelSpec& m, const WeightsMap& weights, const RealTensor& x);

}  // namespace trishare
