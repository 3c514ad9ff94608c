#include "nn.hpp"

#include <cmath>
#include <sstream>

namespace trishare {

NetworkId network_from_string(const std::string& s) {
    if (s == "A" || s == "a") return NetworkId::A;
    if (s == "B" || s == "b") return NetworkId::B;
    if (s == "C" || s == "c") return NetworkId::C;
    if (s == "logreg") return NetworkId::LogReg;
    fail(ErrorCode::InvalidArgument, "unknown network '" + s + "' (A, B, C, logreg)");
}

const char* network_name(NetworkId id) {
    switch (id) {
        case NetworkId::A: return "A";
        case NetworkId::B: return "B";
        case NetworkId::C: return "C";
        case NetworkId::LogReg: return "logreg";
    }
    return "?";
}

PolyFit poly_relu_fit(int degree, double lo, double hi) {
    if (degree < 2) fail(ErrorCode::DegreeTooLow, "activation fit needs degree >= 2");
    int k = degree + 1;
    const int grid = 1001;
    // Normal equations sum_j A^T A c = A^T y over the grid, in long double.
    std::vector<long double> ata(static_cast<size_t>(k) * k, 0.0L), aty(k, 0.0L);
    for (int g = 0; g < grid; ++g) {
        long double t = lo + (hi - lo) * g / (grid - 1);
        long double y = t > 0 ? t : 0.0L;
        std::vector<long double> pw(k);
        pw[0] = 1.0L;
        for (int i = 1; i < k; ++i) pw[i] = pw[i - 1] * t;
        for (int i = 0; i < k; ++i) {
            aty[i] += pw[i] * y;
            for (int j = 0; j < k; ++j) ata[i * k + j] += pw[i] * pw[j];
        }
    }
    // Gaussian elimination with partial pivoting.
    for (int col = 0; col < k; ++col) {
        int piv = col;
        for (int r = col + 1; r < k; ++r)
            if (fabsl(ata[r * k + col]) > fabsl(ata[piv * k + col])) piv = r;
        for (int j = 0; j < k; ++j) std::swap(ata[col * k + j], ata[piv * k + j]);
        std::swap(aty[col], aty[piv]);
        long double d = ata[col * k + col];
        for (int r = 0; r < k; ++r) {
            if (r == col || ata[r * k + col] == 0.0L) continue;
            long double m = ata[r * k + col] / d;
            for (int j = col; j < k; ++j) ata[r * k + j] -= m * ata[col * k + j];
            aty[r] -= m * aty[col];
        }
    }
    PolyFit fit;
    fit.coeffs.resize(k);
    for (int i = 0; i < k; ++i)
        fit.coeffs[i] = static_cast<double>(aty[i] / ata[i * k + i]);
    const int fine = 10001;
    for (int g = 0; g < fine; ++g) {
        double t = lo + (hi - lo) * g / (fine - 1);
        double p = 0;
        for (int i = k - 1; i >= 0; --i) p = p * t + fit.coeffs[i];
        fit.max_err = std::max(fit.max_err, std::fabs(p - std::max(0.0, t)));
    }
    return fit;
}

namespace {

struct LayerNamer {
    int fc = 0, conv = 0, bn = 0;
    std::string dense() { return "fc" + std::to_string(++fc); }
    std::string convl() { return "conv" + std::to_string(++conv); }
    std::string batchnorm() { return "bn" + std::to_string(++bn); }
};

LayerSpec dense(LayerNamer& nm, int64_t in, int64_t out) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::Dense;
    l.prefix = nm.dense();
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec conv(LayerNamer& nm, int64_t field, int64_t channels) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::Conv2D;
    l.prefix = nm.convl();
    l.field = field;
    l.channels = channels;
    l.stride = 1;
    return l;
}

LayerSpec batchnorm(LayerNamer& nm) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::BatchNormFolded;
    l.prefix = nm.batchnorm();
    return l;
}

LayerSpec avgpool(int64_t window) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::AvgPool;
    l.window = window;
    return l;
}

LayerSpec activation(const PolyFit& fit) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::PolyActivation;
    l.coeffs = fit.coeffs;
    return l;
}

}  // namespace

ModelSpec build_network(NetworkId which, int poly_degree) {
    ModelSpec m;
    m.name = network_name(which);
    LayerNamer nm;
    if (which == NetworkId::LogReg) {
        m.input_shape = {784};
        m.layers.push_back(dense(nm, 784, 10));
        return m;
    }
    PolyFit fit = poly_relu_fit(poly_degree);
    if (which == NetworkId::A) {
        m.input_shape = {784};
        m.layers.push_back(dense(nm, 784, 128));
        m.layers.push_back(batchnorm(nm));
        m.layers.push_back(activation(fit));
        m.layers.push_back(dense(nm, 128, 128));
        m.layers.push_back(batchnorm(nm));
        m.layers.push_back(activation(fit));
        m.layers.push_back(dense(nm, 128, 10));
        return m;
    }
    m.input_shape = {28, 28, 1};
    int64_t ch = which == NetworkId::B ? 16 : 20;
    int64_t ch2 = which == NetworkId::B ? 16 : 50;
    int64_t fc_in = which == NetworkId::B ? 256 : 800;
    int64_t fc_mid = which == NetworkId::B ? 100 : 500;
    m.layers.push_back(conv(nm, 5, ch));
    m.layers.push_back(batchnorm(nm));
    m.layers.push_back(activation(fit));
    m.layers.push_back(avgpool(2));
    m.layers.push_back(conv(nm, 5, ch2));
    m.layers.push_back(batchnorm(nm));
    m.layers.push_back(activation(fit));
    m.layers.push_back(avgpool(2));
    m.layers.push_back(dense(nm, fc_in, fc_mid));
    m.layers.push_back(batchnorm(nm));
    m.layers.push_back(activation(fit));
    m.layers.push_back(dense(nm, fc_mid, 10));
    return m;
}

std::string model_manifest(const ModelSpec& m) {
    std::ostringstream os;
    os << "model " << m.name << " input " << shape_str(m.input_shape) << "\n";
    for (const LayerSpec& l : m.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::Dense:
                os << "dense in=" << l.in << " out=" << l.out << " w=" << l.prefix << ".w b="
                   << l.prefix << ".b\n";
                break;
            case LayerSpec::Kind::Conv2D:
                os << "conv2d field=" << l.field << " channels=" << l.channels
                   << " stride=" << l.stride << " padding=valid k=" << l.prefix << ".k\n";
                break;
            case LayerSpec::Kind::AvgPool:
                os << "avgpool window=" << l.window << "\n";
                break;
            case LayerSpec::Kind::BatchNormFolded:
                os << "batchnorm params=" << l.prefix << ".{gamma,beta,mean,var}\n";
                break;
            case LayerSpec::Kind::PolyActivation: {
                os << "poly_activation coeffs=";
                for (size_t i = 0; i < l.coeffs.size(); ++i)
                    os << (i ? "," : "") << l.coeffs[i];
                os << "\n";
                break;
            }
        }
    }
    return os.str();
}

namespace {

// Channel count a batchnorm layer acts on, given the shape flowing into it.
int64_t trailing_dim(const Shape& s) { return s.back(); }

Shape shape_after(const LayerSpec& l, const Shape& in) {
    switch (l.kind) {
        case LayerSpec::Kind::Dense:
            return {in[0], l.out};
        case LayerSpec::Kind::Conv2D:
            return conv2d_output_shape(in, {l.field, l.field, in[3], l.channels}, l.stride);
        case LayerSpec::Kind::AvgPool: {
            if (in.size() != 4 || in[1] % l.window || in[2] % l.window)
                fail(ErrorCode::ShapeMismatch,
                     "avgpool window " + std::to_string(l.window) + " on " + shape_str(in));
            return {in[0], in[1] / l.window, in[2] / l.window, in[3]};
        }
        default:
            return in;
    }
}

Shape flattened(const Shape& in) {
    int64_t d = 1;
    for (size_t i = 1; i < in.size(); ++i) d *= in[i];
    return {in[0], d};
}

}  // namespace

std::vector<std::pair<std::string, Shape>> model_weight_shapes(const ModelSpec& m) {
    std::vector<std::pair<std::string, Shape>> out;
    Shape cur = m.input_shape;
    cur.insert(cur.begin(), 1);  // dummy batch
    for (const LayerSpec& l : m.layers) {
        if (l.kind == LayerSpec::Kind::Dense) {
            cur = flattened(cur);
            if (cur[1] != l.in)
                fail(ErrorCode::ShapeMismatch, "dense " + l.prefix + " expects " +
                                                   std::to_string(l.in) + " inputs, gets " +
                                                   std::to_string(cur[1]));
            out.push_back({l.prefix + ".w", {l.in, l.out}});
            out.push_back({l.prefix + ".b", {l.out}});
        } else if (l.kind == LayerSpec::Kind::Conv2D) {
            out.push_back({l.prefix + ".k", {l.field, l.field, cur[3], l.channels}});
        } else if (l.kind == LayerSpec::Kind::BatchNormFolded) {
            int64_t c = trailing_dim(cur);
            for (const char* p : {".gamma", ".beta", ".mean", ".var"})
                out.push_back({l.prefix + p, {c}});
        }
        cur = shape_after(l, cur);
    }
    return out;
}

WeightsMap random_weights(const ModelSpec& m, uint64_t seed) {
    WeightsMap w;
    for (const auto& [name, shape] : model_weight_shapes(m)) {
        Prg prg(seed, "weights/" + name);
        RealTensor t = RealTensor::zeros(shape);
        auto uniform = [&](double lo, double hi) {
            return lo + (hi - lo) * (static_cast<double>(prg.next_u64() >> 11) * 0x1.0p-53);
        };
        if (name.ends_with(".w") || name.ends_with(".k")) {
            // Fan-in scaled so layer outputs stay within the activation
            // interval for inputs in [0, 1].
            int64_t fan_in = shape.size() == 2 ? shape[0] : shape[0] * shape[1] * shape[2];
            double s = std::sqrt(3.0 / static_cast<double>(fan_in));
            for (double& v : t.data) v = uniform(-s, s);
        } else if (name.ends_with(".b") || name.ends_with(".beta") || name.ends_with(".mean")) {
            for (double& v : t.data) v = uniform(-0.1, 0.1);
        } else if (name.ends_with(".gamma")) {
            for (double& v : t.data) v = uniform(0.8, 1.2);
        } else {  // .var
            for (double& v : t.data) v = uniform(0.5, 1.5);
        }
        w[name] = std::move(t);
    }
    return w;
}

std::pair<RealTensor, RealTensor> fold_batchnorm(const RealTensor& gamma, const RealTensor& beta,
                                                 const RealTensor& mean, const RealTensor& var,
                                                 double eps) {
    if (gamma.shape != beta.shape || gamma.shape != mean.shape || gamma.shape != var.shape)
        fail(ErrorCode::ShapeMismatch, "batchnorm parameter shapes differ");
    RealTensor scale = RealTensor::zeros(gamma.shape), shift = RealTensor::zeros(gamma.shape);
    for (size_t i = 0; i < gamma.data.size(); ++i) {
        if (var.data[i] < 0)
            fail(ErrorCode::NegativeVariance, "variance " + std::to_string(var.data[i]));
        scale.data[i] = gamma.data[i] / std::sqrt(var.data[i] + eps);
        shift.data[i] = beta.data[i] - mean.data[i] * scale.data[i];
    }
    return {scale, shift};
}

namespace {

const RealTensor& weight(const WeightsMap& w, const std::string& name) {
    auto it = w.find(name);
    if (it == w.end()) fail(ErrorCode::MissingWeights, "weight " + name + " not supplied");
    return it->second;
}

}  // namespace

ComputationPlan build_inference_plan(const ModelSpec& m, Backend backend, FixedPointConfig fp,
                                     TruncationMode trunc, const WeightsMap& weights,
                                     const InferenceIo& io) {
    PlanBuilder b(backend, fp, trunc);
    Shape xshape = m.input_shape;
    xshape.insert(xshape.begin(), io.batch);
    uint32_t x = b.input(io.input_party, "x", xshape);
    Shape cur = xshape;
    for (const LayerSpec& l : m.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::Dense: {
                if (cur.size() > 2) {
                    cur = flattened(cur);
                    x = b.reshape(x, cur);
                }
                uint32_t w = b.input(io.owner_party, l.prefix + ".w", {l.in, l.out});
                uint32_t bias = b.input(io.owner_party, l.prefix + ".b", {l.out});
                uint32_t w_aug = b.concat({w, b.reshape(bias, {1, l.out})}, 0);
                uint32_t ones = b.promote(
                    b.public_const_real(RealTensor({cur[0], 1},
                                                   std::vector<double>(cur[0], 1.0))));
                uint32_t x_aug = b.concat({x, ones}, 1);
                x = b.truncate(b.matmul(b.mask(x_aug), b.mask(w_aug)));
                break;
            }
            case LayerSpec::Kind::Conv2D: {
                uint32_t k = b.input(io.owner_party, l.prefix + ".k",
                                     {l.field, l.field, cur[3], l.channels});
                x = b.truncate(b.conv2d(b.mask(x), b.mask(k), l.stride));
                break;
            }
            case LayerSpec::Kind::AvgPool: {
                int64_t win = l.window;
                Shape split = {cur[0], cur[1] / win, win, cur[2] / win, win, cur[3]};
                uint32_t t = b.reshape(x, split);
                t = b.reduce_sum_axis(t, 4);
                t = b.reduce_sum_axis(t, 2);
                double inv = 1.0 / static_cast<double>(win * win);
                x = b.truncate(b.mul_plain(t, b.public_const_real(RealTensor::scalar(inv))));
                break;
            }
            case LayerSpec::Kind::BatchNormFolded: {
                auto [scale, shift] = fold_batchnorm(
                    weight(weights, l.prefix + ".gamma"), weight(weights, l.prefix + ".beta"),
                    weight(weights, l.prefix + ".mean"), weight(weights, l.prefix + ".var"));
                x = b.truncate(b.mul_plain(x, b.public_const_real(scale)));
                x = b.add_plain(x, b.public_const_real(shift));
                break;
            }
            case LayerSpec::Kind::PolyActivation: {
                int deg = static_cast<int>(l.coeffs.size()) - 1;
                uint32_t tm = b.mask(x);
                uint32_t acc = b.truncate(b.mul_plain(
                    x, b.public_const_real(RealTensor::scalar(l.coeffs[deg]))));
                acc = b.add_plain(acc,
                                  b.public_const_real(RealTensor::scalar(l.coeffs[deg - 1])));
                for (int d = deg - 2; d >= 0; --d) {
                    acc = b.truncate(b.mul(b.mask(acc), tm));
                    acc = b.add_plain(acc, b.public_const_real(RealTensor::scalar(l.coeffs[d])));
                }
                x = acc;
                break;
            }
        }
        cur = shape_after(l, cur);
    }
    b.output(x, io.receiver_party, io.output_name, io.post);
    return b.finish();
}

PartyInputs owner_inputs(const ModelSpec& m, const WeightsMap& weights) {
    PartyInputs in;
    for (const LayerSpec& l : m.layers) {
        if (l.kind == LayerSpec::Kind::Dense) {
            in[l.prefix + ".w"] = weight(weights, l.prefix + ".w");
            in[l.prefix + ".b"] = weight(weights, l.prefix + ".b");
        } else if (l.kind == LayerSpec::Kind::Conv2D) {
            in[l.prefix + ".k"] = weight(weights, l.prefix + ".k");
        }
    }
    return in;
}

namespace {

RealTensor dense_forward(const RealTensor& x, const RealTensor& w, const RealTensor& bias) {
    int64_t r = x.shape[0], s = x.shape[1], t = w.shape[1];
    RealTensor out = RealTensor::zeros({r, t});
    for (int64_t i = 0; i < r; ++i)
        for (int64_t kk = 0; kk < s; ++kk) {
            double xv = x.data[i * s + kk];
            if (xv == 0) continue;
            for (int64_t j = 0; j < t; ++j) out.data[i * t + j] += xv * w.data[kk * t + j];
        }
    for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < t; ++j) out.data[i * t + j] += bias.data[j];
    return out;
}

RealTensor conv_forward(const RealTensor& x, const RealTensor& k, int64_t stride) {
    int64_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    int64_t KH = k.shape[0], KW = k.shape[1], CO = k.shape[3];
    int64_t OH = (H - KH) / stride + 1, OW = (W - KW) / stride + 1;
    RealTensor out = RealTensor::zeros({B, OH, OW, CO});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t oh = 0; oh < OH; ++oh)
            for (int64_t ow = 0; ow < OW; ++ow)
                for (int64_t kh = 0; kh < KH; ++kh)
                    for (int64_t kw = 0; kw < KW; ++kw)
                        for (int64_t c = 0; c < C; ++c) {
                            double xv = x.data[((b * H + oh * stride + kh) * W + ow * stride +
                                                kw) * C + c];
                            if (xv == 0) continue;
                            const double* krow = k.data.data() + ((kh * KW + kw) * C + c) * CO;
                            double* orow = out.data.data() + ((b * OH + oh) * OW + ow) * CO;
                            for (int64_t co = 0; co < CO; ++co) orow[co] += xv * krow[co];
                        }
    return out;
}

RealTensor avgpool_forward(const RealTensor& x, int64_t win) {
    int64_t B = x.shape[0], H = x.shape[1], W = x.shape[2], C = x.shape[3];
    RealTensor out = RealTensor::zeros({B, H / win, W / win, C});
    double inv = 1.0 / static_cast<double>(win * win);
    for (int64_t b = 0; b < B; ++b)
        for (int64_t h = 0; h < H; ++h)
            for (int64_t w = 0; w < W; ++w)
                for (int64_t c = 0; c < C; ++c)
                    out.data[((b * (H / win) + h / win) * (W / win) + w / win) * C + c] +=
                        inv * x.data[((b * H + h) * W + w) * C + c];
    return out;
}

}  // namespace

RealTensor eval_float(const ModelSpec& m, const WeightsMap& weights, const RealTensor& x) {
    RealTensor cur = x;
    for (const LayerSpec& l : m.layers) {
        switch (l.kind) {
            case LayerSpec::Kind::Dense: {
                if (cur.shape.size() > 2) cur.shape = flattened(cur.shape);
                cur = dense_forward(cur, weight(weights, l.prefix + ".w"),
                                    weight(weights, l.prefix + ".b"));
                break;
            }
            case LayerSpec::Kind::Conv2D:
                cur = conv_forward(cur, weight(weights, l.prefix + ".k"), l.stride);
                break;
            case LayerSpec::Kind::AvgPool:
                cur = avgpool_forward(cur, l.window);
                break;
            case LayerSpec::Kind::BatchNormFolded: {
                auto [scale, shift] = fold_batchnorm(
                    weight(weights, l.prefix + ".gamma"), weight(weights, l.prefix + ".beta"),
                    weight(weights, l.prefix + ".mean"), weight(weights, l.prefix + ".var"));
                int64_t c = scale.numel();
                for (int64_t i = 0; i < cur.numel(); ++i)
                    cur.data[i] = cur.data[i] * scale.data[i % c] + shift.data[i % c];
                break;
            }
            case LayerSpec::Kind::PolyActivation: {
                for (double& v : cur.data) {
                    double p = 0;
                    for (size_t d = l.coeffs.size(); d-- > 0;) p = p * v + l.coeffs[d];
                    v = p;
                }
                break;
            }
        }
    }
    return cur;
}

}  // namespace trishare
