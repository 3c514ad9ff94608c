#include "bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "errors.hpp"
#include "prg.hpp"

namespace trishare {

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                     double smoothing) {
    if (p.size() != q.size() || p.empty())
        fail(ErrorCode::ShapeMismatch, "KL needs two distributions of equal length");
    double n = static_cast<double>(p.size());
    double kl = 0;
    for (size_t i = 0; i < p.size(); ++i) {
        double ps = (p[i] + smoothing) / (1.0 + n * smoothing);
        double qs = (q[i] + smoothing) / (1.0 + n * smoothing);
        kl += ps * std::log(ps / qs);
    }
    return kl;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    std::vector<double> out(logits.size());
    double mx = *std::max_element(logits.begin(), logits.end());
    double z = 0;
    for (size_t i = 0; i < logits.size(); ++i) z += out[i] = std::exp(logits[i] - mx);
    for (double& v : out) v /= z;
    return out;
}

double classification_accuracy(const RealTensor& logits, const std::vector<int>& labels) {
    if (logits.shape.size() != 2)
        fail(ErrorCode::ShapeMismatch, "expected [N, classes] logits");
    int64_t n = logits.shape[0], c = logits.shape[1];
    if (static_cast<int64_t>(labels.size()) != n)
        fail(ErrorCode::ShapeMismatch, "label count does not match logits rows");
    int64_t hits = 0;
    for (int64_t i = 0; i < n; ++i) {
        const double* row = &logits.data[static_cast<size_t>(i * c)];
        int64_t best = static_cast<int64_t>(std::max_element(row, row + c) - row);
        if (best == labels[static_cast<size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

namespace {

std::vector<double> tensor_row(const RealTensor& t, int64_t row) {
    int64_t c = t.shape.back();
    auto* base = &t.data[static_cast<size_t>(row * c)];
    return std::vector<double>(base, base + c);
}

// Batch of model inputs: rows of `images` starting at `start` (wrapping), or
// synthetic in-range samples when no images were supplied.
RealTensor input_batch(const ModelSpec& m, int64_t batch, const RealTensor* images,
                       int64_t start, Prg& synth) {
    Shape shape{batch};
    shape.insert(shape.end(), m.input_shape.begin(), m.input_shape.end());
    RealTensor x = RealTensor::zeros(shape);
    int64_t per = shape_numel(m.input_shape);
    if (images) {
        int64_t n = images->shape[0];
        int64_t img = images->numel() / n;
        if (img != per) fail(ErrorCode::ShapeMismatch, "image size does not match the model input");
        for (int64_t i = 0; i < batch; ++i) {
            int64_t row = (start + i) % n;
            std::memcpy(&x.data[static_cast<size_t>(i * per)],
                        &images->data[static_cast<size_t>(row * per)],
                        static_cast<size_t>(per) * sizeof(double));
        }
    } else {
        for (double& v : x.data) v = (synth.next_u64() >> 11) * 0x1.0p-53;
    }
    return x;
}

}  // namespace

BenchReport run_bench(const ModelSpec& model, const WeightsMap& weights, const BenchOptions& opts,
                      const RealTensor* images, const std::vector<int>* labels) {
    if (opts.runs <= 0) fail(ErrorCode::InvalidArgument, "runs must be positive");
    if (labels && !images) fail(ErrorCode::InvalidArgument, "labels need images");
    BenchReport rep;
    rep.network = model.name;
    rep.trunc = opts.trunc;

    for (Backend backend : opts.backends) {
        FixedPointConfig fp = nn_fixed_point(backend);
        for (int64_t batch : opts.batch_sizes) {
            InferenceIo io;
            io.batch = batch;
            ComputationPlan plan =
                build_inference_plan(model, backend, fp, opts.trunc, weights, io);
            SessionConfig cfg;
            cfg.backend = backend;
            cfg.trunc = opts.trunc;
            cfg.fp = fp;
            cfg.seeded = true;
            cfg.seed = opts.seed;
            cfg.timeout_ms = opts.timeout_ms;

            Prg synth(opts.seed, "bench/input");
            BenchRow row;
            row.backend = backend;
            row.batch = batch;
            row.runs = opts.runs;
            std::vector<double> per_inf_ms;
            double kl_sum = 0;
            int64_t kl_count = 0, hits_secure = 0, hits_float = 0, labeled = 0;
            for (int r = 0; r < opts.runs; ++r) {
                RealTensor x = input_batch(model, batch, images, r * batch, synth);
                SessionInputs inputs;
                inputs[io.input_party]["x"] = x;
                inputs[io.owner_party] = owner_inputs(model, weights);
                auto t0 = std::chrono::steady_clock::now();
                SessionResult sr = run_inmemory(plan, cfg, inputs);
                auto t1 = std::chrono::steady_clock::now();
                per_inf_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count() /
                                     static_cast<double>(batch));

                const RealTensor& secure = sr.outputs.at(io.output_name).decoded;
                RealTensor ref = eval_float(model, weights, x);
                for (int64_t i = 0; i < batch; ++i) {
                    std::vector<double> pf = softmax(tensor_row(ref, i));
                    std::vector<double> qs = softmax(tensor_row(secure, i));
                    kl_sum += kl_divergence(pf, qs);
                    ++kl_count;
                    if (labels) {
                        int y = (*labels)[static_cast<size_t>((r * batch + i) %
                                                              static_cast<int64_t>(labels->size()))];
                        auto am = [](const std::vector<double>& v) {
                            return std::max_element(v.begin(), v.end()) - v.begin();
                        };
                        if (am(qs) == y) ++hits_secure;
                        if (am(pf) == y) ++hits_float;
                        ++labeled;
                    }
                }
            }
            double mean = 0;
            for (double v : per_inf_ms) mean += v;
            mean /= static_cast<double>(per_inf_ms.size());
            double var = 0;
            for (double v : per_inf_ms) var += (v - mean) * (v - mean);
            row.mean_ms = mean;
            row.stddev_ms = per_inf_ms.size() > 1
                                ? std::sqrt(var / static_cast<double>(per_inf_ms.size() - 1))
                                : 0.0;
            row.mean_kl = kl_sum / static_cast<double>(kl_count);
            if (labeled) {
                row.acc_secure = static_cast<double>(hits_secure) / static_cast<double>(labeled);
                row.acc_float = static_cast<double>(hits_float) / static_cast<double>(labeled);
            }
            rep.total_inputs += static_cast<int>(kl_count);
            rep.rows.push_back(row);
        }
    }
    return rep;
}

std::string BenchReport::text() const {
    std::ostringstream os;
    os << "network " << network << ", trunc " << trunc_name(trunc)
       << "; times are wall clock per inference; stddev across runs\n"
       << "kl = mean over inputs of KL(P_float || P_secure), smoothing 1e-9\n";
    os << std::left << std::setw(9) << "backend" << std::right << std::setw(7) << "batch"
       << std::setw(6) << "runs" << std::setw(12) << "mean_ms" << std::setw(12) << "stddev_ms"
       << std::setw(14) << "mean_kl" << std::setw(12) << "acc_secure" << std::setw(11)
       << "acc_float" << "\n";
    for (const BenchRow& r : rows) {
        os << std::left << std::setw(9) << backend_name(r.backend) << std::right << std::setw(7)
           << r.batch << std::setw(6) << r.runs << std::fixed << std::setprecision(3)
           << std::setw(12) << r.mean_ms << std::setw(12) << r.stddev_ms << std::scientific
           << std::setprecision(3) << std::setw(14) << r.mean_kl;
        os << std::fixed << std::setprecision(4);
        if (r.acc_secure >= 0)
            os << std::setw(12) << r.acc_secure << std::setw(11) << r.acc_float;
        else
            os << std::setw(12) << "-" << std::setw(11) << "-";
        os << "\n";
        os.unsetf(std::ios::floatfield);
    }
    return os.str();
}

std::string BenchReport::csv() const {
    std::ostringstream os;
    os << "network,trunc,backend,batch,runs,mean_ms_per_inference,stddev_ms_per_inference,"
          "mean_kl_float_vs_secure,acc_secure,acc_float\n";
    for (const BenchRow& r : rows) {
        os << network << "," << trunc_name(trunc) << "," << backend_name(r.backend) << ","
           << r.batch << "," << r.runs << "," << std::setprecision(17) << r.mean_ms << ","
           << r.stddev_ms << "," << r.mean_kl << ",";
        if (r.acc_secure >= 0)
            os << r.acc_secure << "," << r.acc_float;
        else
            os << ",";
        os << "\n";
    }
    return os.str();
}

}  // namespace trishare
