#pragma once

#include <optional>
#include <string>
#include <vector>

#include "nn.hpp"
#include "runtime.hpp"

namespace trishare {

// KL(p || q) over two distributions of equal length, with additive smoothing
// to dodge log(0). Identical inputs give exactly zero.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double smoothing = 1e-9);

// Numerically stable softmax of one logits row.
std::vector<double> softmax(const std::vector<double>& logits);

// Fraction of rows whose argmax matches the label.
double classification_accuracy(const RealTensor& logits, const std::vector<int>& labels);

struct BenchRow {
    Backend backend = Backend::Int64;
    int64_t batch = 1;
    int runs = 0;
    double mean_ms = 0;    // wall clock per inference (full offline+online run / batch)
    double stddev_ms = 0;  // across runs, per inference
    double mean_kl = 0;    // mean over inputs of KL(P_float || P_secure)
    double acc_secure = -1;  // < 0 when no labels were supplied
    double acc_float = -1;
};

struct BenchReport {
    std::string network;
    TruncationMode trunc = TruncationMode::Interactive;
    int total_inputs = 0;
    std::vector<BenchRow> rows;
    std::string text() const;
    std::string csv() const;
};

struct BenchOptions {
    std::vector<Backend> backends{Backend::Int64};
    std::vector<int64_t> batch_sizes{1, 10, 100};
    int runs = 10;
    TruncationMode trunc = TruncationMode::Interactive;
    uint64_t seed = 1;  // weights + inputs + session streams
    int timeout_ms = 30000;
};

// Times in-memory secure inference and compares its outputs against the
// float reference. Inputs default to synthetic in-range samples; pass images
// (and labels for accuracy columns) to use real data.
BenchReport run_bench(const ModelSpec& model, const WeightsMap& weights, const BenchOptions& opts,
                      const RealTensor* images = nullptr,
                      const std::vector<int>* labels = nullptr);

}  // namespace trishare
