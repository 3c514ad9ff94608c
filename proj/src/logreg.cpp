#include "logreg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "errors.hpp"
#include "prg.hpp"

namespace trishare {

namespace {

double uniform01(Prg& prg) { return (prg.next_u64() >> 11) * 0x1.0p-53; }

}  // namespace

TrainResult train_logreg(const RealTensor& images, const std::vector<int>& labels,
                         int epochs, double lr, uint64_t seed, int batch, int classes) {
    if (images.shape.size() != 2)
        fail(ErrorCode::ShapeMismatch, "expected flattened [N, d] images");
    int64_t n = images.shape[0];
    int64_t d = images.shape[1];
    if (static_cast<int64_t>(labels.size()) != n)
        fail(ErrorCode::ShapeMismatch, "label count does not match image count");
    if (batch <= 0 || classes <= 0 || lr <= 0)
        fail(ErrorCode::InvalidArgument, "batch, classes and lr must be positive");

    TrainResult res;
    RealTensor w = RealTensor::zeros({d, classes});
    RealTensor b = RealTensor::zeros({classes});

    Prg shuffle_prg(seed, "logreg/shuffle");
    std::vector<int64_t> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    std::vector<double> logits(static_cast<size_t>(classes));
    std::vector<double> probs(static_cast<size_t>(classes));
    std::vector<double> grad_b(static_cast<size_t>(classes));
    std::vector<double> grad_w(static_cast<size_t>(d * classes));

    for (int ep = 0; ep < epochs; ++ep) {
        // Fisher-Yates from the session PRG keeps runs reproducible.
        for (int64_t i = n - 1; i > 0; --i) {
            int64_t j = static_cast<int64_t>(shuffle_prg.next_below(static_cast<uint64_t>(i + 1)));
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(j)]);
        }
        double loss_sum = 0;
        for (int64_t start = 0; start < n; start += batch) {
            int64_t stop = std::min<int64_t>(start + batch, n);
            double bs = static_cast<double>(stop - start);
            std::fill(grad_b.begin(), grad_b.end(), 0.0);
            std::fill(grad_w.begin(), grad_w.end(), 0.0);
            for (int64_t s = start; s < stop; ++s) {
                int64_t row = order[static_cast<size_t>(s)];
                const double* x = &images.data[static_cast<size_t>(row * d)];
                for (int c = 0; c < classes; ++c) {
                    double acc = b.data[static_cast<size_t>(c)];
                    for (int64_t k = 0; k < d; ++k)
                        acc += x[k] * w.data[static_cast<size_t>(k * classes + c)];
                    logits[static_cast<size_t>(c)] = acc;
                }
                double mx = *std::max_element(logits.begin(), logits.end());
                double z = 0;
                for (int c = 0; c < classes; ++c) {
                    probs[static_cast<size_t>(c)] = std::exp(logits[static_cast<size_t>(c)] - mx);
                    z += probs[static_cast<size_t>(c)];
                }
                int y = labels[static_cast<size_t>(row)];
                if (y < 0 || y >= classes)
                    fail(ErrorCode::InvalidArgument, "label out of range");
                for (int c = 0; c < classes; ++c) {
                    double p = probs[static_cast<size_t>(c)] / z;
                    if (c == y) loss_sum -= std::log(std::max(p, 1e-300));
                    double g = p - (c == y ? 1.0 : 0.0);
                    grad_b[static_cast<size_t>(c)] += g;
                    for (int64_t k = 0; k < d; ++k)
                        grad_w[static_cast<size_t>(k * classes + c)] += g * x[k];
                }
            }
            for (int c = 0; c < classes; ++c)
                b.data[static_cast<size_t>(c)] -= lr * grad_b[static_cast<size_t>(c)] / bs;
            for (int64_t k = 0; k < d * classes; ++k)
                w.data[static_cast<size_t>(k)] -= lr * grad_w[static_cast<size_t>(k)] / bs;
        }
        res.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    }

    res.weights["fc1.w"] = std::move(w);
    res.weights["fc1.b"] = std::move(b);
    return res;
}

SynthData synth_mnist(int64_t count, uint64_t seed, int64_t rows, int64_t cols, int classes) {
    if (count <= 0 || rows <= 0 || cols <= 0 || classes <= 0)
        fail(ErrorCode::InvalidArgument, "count, dims and classes must be positive");
    int64_t d = rows * cols;

    // Each class gets a sparse bright prototype; samples add modest noise so
    // the classes stay far apart in pixel space.
    Prg proto_prg(seed, "synth/proto");
    std::vector<double> proto(static_cast<size_t>(classes * d), 0.0);
    for (int c = 0; c < classes; ++c)
        for (int64_t k = 0; k < d; ++k)
            if (uniform01(proto_prg) < 0.25)
                proto[static_cast<size_t>(c * d + k)] = 0.5 + 0.5 * uniform01(proto_prg);

    SynthData out;
    out.count = count;
    out.rows = rows;
    out.cols = cols;
    out.pixels.resize(static_cast<size_t>(count * d));
    out.labels.resize(static_cast<size_t>(count));
    Prg sample_prg(seed, "synth/sample");
    for (int64_t i = 0; i < count; ++i) {
        int c = static_cast<int>(sample_prg.next_below(static_cast<uint64_t>(classes)));
        out.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(c);
        for (int64_t k = 0; k < d; ++k) {
            double v = 0.85 * proto[static_cast<size_t>(c * d + k)] + 0.15 * uniform01(sample_prg);
            int q = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            out.pixels[static_cast<size_t>(i * d + k)] = static_cast<uint8_t>(q);
        }
    }
    return out;
}

}  // namespace trishare
