#pragma once

#include <cstdint>
#include <vector>

#include "nn.hpp"

namespace trishare {

struct TrainResult {
    WeightsMap weights;              // fc1.w [d, classes], fc1.b [classes]
    std::vector<double> epoch_loss;  // mean cross-entropy after each epoch
};

// Plaintext softmax-regression SGD. Deterministic for a given seed; zero
// epochs returns zero-initialized weights. Intended only to produce
// realistic weights for the private-prediction demo.
TrainResult train_logreg(const RealTensor& images, const std::vector<int>& labels,
                         int epochs, double lr, uint64_t seed, int batch = 32,
                         int classes = 10);

struct SynthData {
    std::vector<uint8_t> pixels;  // count*rows*cols, row-major
    std::vector<uint8_t> labels;
    int64_t count = 0, rows = 0, cols = 0;
};

// Class-prototype images plus pixel noise, quantized to bytes. Classes are
// linearly separable by construction so softmax regression clears 90%.
SynthData synth_mnist(int64_t count, uint64_t seed, int64_t rows = 28, int64_t cols = 28,
                      int classes = 10);

}  // namespace trishare
