#pragma once

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "distillfed/common.hpp"
#include "distillfed/dataset.hpp"
#include "distillfed/rng.hpp"

namespace distillfed {

/// Fully connected ReLU net, linear output layer.
struct ModelSpec {
    std::vector<int> widths;  // [input_dim, hidden..., num_classes]
    std::uint64_t seed = 0;

    void validate() const {
        if (widths.size() < 2) throw std::invalid_argument("ModelSpec: need input and output widths");
        for (int w : widths)
            if (w < 1) throw std::invalid_argument("ModelSpec: widths must be positive");
    }
};

struct Weights {
    std::vector<Matrix> w;  // per layer, fan_in x fan_out
    std::vector<Vector> b;  // per layer, fan_out

    std::size_t layers() const { return w.size(); }

    long param_count() const {
        long p = 0;
        for (std::size_t l = 0; l < w.size(); ++l)
            p += static_cast<long>(w[l].size()) + static_cast<long>(b[l].size());
        return p;
    }

    void check_same_shape(const Weights& o) const {
        if (o.w.size() != w.size()) throw std::invalid_argument("Weights: layer count mismatch");
        for (std::size_t l = 0; l < w.size(); ++l)
            if (o.w[l].rows() != w[l].rows() || o.w[l].cols() != w[l].cols())
                throw std::invalid_argument("Weights: shape mismatch at layer " + std::to_string(l));
    }

    Weights& operator+=(const Weights& o) {
        check_same_shape(o);
        for (std::size_t l = 0; l < w.size(); ++l) {
            w[l] += o.w[l];
            b[l] += o.b[l];
        }
        return *this;
    }
    Weights& operator-=(const Weights& o) {
        check_same_shape(o);
        for (std::size_t l = 0; l < w.size(); ++l) {
            w[l] -= o.w[l];
            b[l] -= o.b[l];
        }
        return *this;
    }
    Weights& operator*=(double s) {
        for (std::size_t l = 0; l < w.size(); ++l) {
            w[l] *= s;
            b[l] *= s;
        }
        return *this;
    }
    friend Weights operator+(Weights a, const Weights& c) { return a += c; }
    friend Weights operator-(Weights a, const Weights& c) { return a -= c; }
    friend Weights operator*(double s, Weights a) { return a *= s; }

    double squared_norm() const {
        double s = 0.0;
        for (std::size_t l = 0; l < w.size(); ++l) s += w[l].squaredNorm() + b[l].squaredNorm();
        return s;
    }

    bool all_finite() const {
        for (const auto& m : w)
            if (!m.allFinite()) return false;
        for (const auto& v : b)
            if (!v.allFinite()) return false;
        return true;
    }

    static Weights zeros_like(const Weights& o) {
        Weights z;
        for (std::size_t l = 0; l < o.w.size(); ++l) {
            z.w.push_back(Matrix::Zero(o.w[l].rows(), o.w[l].cols()));
            z.b.push_back(Vector::Zero(o.b[l].size()));
        }
        return z;
    }
};

/// He-scaled Gaussian weights (std = sqrt(2/fan_in)), zero biases.
inline Weights mlp_init(const ModelSpec& spec) {
    spec.validate();
    auto rng = make_rng(derive_seed(spec.seed, kSeedModelInit));
    std::normal_distribution<double> unit(0.0, 1.0);
    Weights out;
    for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
        const Index fan_in = spec.widths[l], fan_out = spec.widths[l + 1];
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
        Matrix m(fan_in, fan_out);
        for (Index i = 0; i < fan_in; ++i)
            for (Index j = 0; j < fan_out; ++j) m(i, j) = std_dev * unit(rng);
        out.w.push_back(std::move(m));
        out.b.push_back(Vector::Zero(fan_out));
    }
    return out;
}

struct TrainConfig {
    int epochs = 1;
    double lr = 0.01;
    double momentum = 0.9;
    int batch_size = 50;
    std::uint64_t seed = 0;

    // FedProx proximal pull toward anchor weights (non-owning, must outlive
    // the call). mu = 0 is bitwise identical to the plain loss.
    double prox_mu = 0.0;
    const Weights* prox_anchor = nullptr;

    // Control-variate correction added to every minibatch gradient.
    const Weights* correction = nullptr;

    void validate() const {
        if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
        if (lr < 0.0) throw std::invalid_argument("TrainConfig: negative learning rate");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("TrainConfig: momentum in [0, 1)");
        if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size >= 1");
        if (prox_mu < 0.0) throw std::invalid_argument("TrainConfig: negative prox_mu");
        if (prox_mu > 0.0 && prox_anchor == nullptr)
            throw std::invalid_argument("TrainConfig: prox_mu set without anchor weights");
    }
};

inline Matrix mlp_logits(const Weights& weights, const Matrix& X) {
    Matrix a = X;
    for (std::size_t l = 0; l < weights.layers(); ++l) {
        a = (a * weights.w[l]).rowwise() + weights.b[l].transpose();
        if (l + 1 < weights.layers()) a = a.cwiseMax(0.0);
    }
    return a;
}

/// Mean softmax cross-entropy over the batch and its backprop gradient.
inline std::pair<double, Weights> loss_grad(const Weights& weights, const Matrix& X,
                                            const Matrix& Y, const TrainConfig& cfg) {
    if (X.rows() != Y.rows()) throw std::invalid_argument("loss_grad: batch row mismatch");
    const Index n = X.rows();

    std::vector<Matrix> acts;  // post-activation outputs, acts[0] = input
    acts.reserve(weights.layers() + 1);
    acts.push_back(X);
    for (std::size_t l = 0; l < weights.layers(); ++l) {
        Matrix z = (acts.back() * weights.w[l]).rowwise() + weights.b[l].transpose();
        if (l + 1 < weights.layers()) z = z.cwiseMax(0.0);
        if (!z.allFinite())
            throw NumericError("loss_grad: non-finite activations at layer " + std::to_string(l));
        acts.push_back(std::move(z));
    }

    // Row-max-stabilized softmax.
    Matrix logits = acts.back();
    Vector row_max = logits.rowwise().maxCoeff();
    Matrix shifted = logits.colwise() - row_max;
    Matrix exps = shifted.array().exp().matrix();
    Vector denom = exps.rowwise().sum();
    double loss = 0.0;
    for (Index i = 0; i < n; ++i)
        loss -= (Y.row(i) * shifted.row(i).transpose())(0, 0) - std::log(denom[i]);
    loss /= static_cast<double>(n);

    Weights grad = Weights::zeros_like(weights);
    Matrix delta = (exps.array().colwise() / denom.array()).matrix() - Y;
    delta /= static_cast<double>(n);
    for (std::size_t l = weights.layers(); l-- > 0;) {
        grad.w[l] = acts[l].transpose() * delta;
        grad.b[l] = delta.colwise().sum().transpose();
        if (l > 0) {
            delta = delta * weights.w[l].transpose();
            delta = (acts[l].array() > 0.0).cast<double>().matrix().cwiseProduct(delta);
        }
    }

    if (cfg.prox_mu > 0.0) {
        Weights pull = weights;
        pull -= *cfg.prox_anchor;
        loss += 0.5 * cfg.prox_mu * pull.squared_norm();
        pull *= cfg.prox_mu;
        grad += pull;
    }
    if (!std::isfinite(loss)) throw NumericError("loss_grad: non-finite loss");
    return {loss, std::move(grad)};
}

struct TrainResult {
    Weights weights;
    std::vector<double> loss_trace;  // batch loss before each update
    int steps = 0;
};

/// Momentum SGD with seeded per-epoch shuffling. The optional correction is
/// added to every minibatch gradient before the momentum update.
inline TrainResult sgd_train(Weights weights, const Dataset& data, const TrainConfig& cfg) {
    data.validate();
    cfg.validate();
    if (cfg.correction != nullptr) weights.check_same_shape(*cfg.correction);

    Matrix one_hot = data.one_hot();
    const Index n = data.size();
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    auto rng = make_rng(cfg.seed);

    TrainResult out;
    Weights velocity = Weights::zeros_like(weights);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Index start = 0; start < n; start += cfg.batch_size) {
            const Index len = std::min<Index>(cfg.batch_size, n - start);
            Matrix xb(len, data.dim());
            Matrix yb(len, data.num_classes);
            for (Index r = 0; r < len; ++r) {
                xb.row(r) = data.features.row(order[static_cast<std::size_t>(start + r)]);
                yb.row(r) = one_hot.row(order[static_cast<std::size_t>(start + r)]);
            }
            auto [loss, grad] = loss_grad(weights, xb, yb, cfg);
            if (cfg.correction != nullptr) grad += *cfg.correction;
            velocity *= cfg.momentum;
            velocity += grad;
            Weights step = velocity;
            step *= cfg.lr;
            weights -= step;
            out.loss_trace.push_back(loss);
            ++out.steps;
        }
    }
    out.weights = std::move(weights);
    return out;
}

/// Argmax accuracy; ties resolve to the lowest class index.
inline double evaluate(const Weights& weights, const Dataset& data) {
    if (data.size() < 1) throw std::invalid_argument("evaluate: empty dataset");
    Matrix logits = mlp_logits(weights, data.features);
    Index hits = 0;
    for (Index i = 0; i < logits.rows(); ++i) {
        int arg = 0;
        for (Index c = 1; c < logits.cols(); ++c)
            if (logits(i, c) > logits(i, arg)) arg = static_cast<int>(c);
        if (arg == data.labels[static_cast<std::size_t>(i)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

// Binary checkpoint: "DFWT" magic, u32 version, u32 width count, u32 widths,
// then per layer the row-major weight matrix followed by the bias vector, all
// 64-bit reals in host (little-endian) byte order. Round trip is lossless.
inline void save_weights(const std::string& path, const Weights& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_weights: cannot create " + path);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    out.write("DFWT", 4);
    put_u32(1);
    put_u32(static_cast<std::uint32_t>(weights.layers() + 1));
    put_u32(static_cast<std::uint32_t>(weights.w.front().rows()));
    for (const auto& m : weights.w) put_u32(static_cast<std::uint32_t>(m.cols()));
    for (std::size_t l = 0; l < weights.layers(); ++l) {
        const Matrix& m = weights.w[l];
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) {
                double v = m(i, j);
                out.write(reinterpret_cast<const char*>(&v), 8);
            }
        out.write(reinterpret_cast<const char*>(weights.b[l].data()),
                  static_cast<std::streamsize>(weights.b[l].size()) * 8);
    }
    if (!out) throw std::runtime_error("save_weights: write failed for " + path);
}

inline Weights load_weights(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_weights: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "DFWT", 4) != 0)
        throw std::runtime_error("load_weights: bad magic in " + path);
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        if (!in) throw std::runtime_error("load_weights: truncated header in " + path);
        return v;
    };
    if (std::uint32_t ver = get_u32(); ver != 1)
        throw std::runtime_error("load_weights: unsupported version " + std::to_string(ver));
    std::uint32_t n_widths = get_u32();
    if (n_widths < 2) throw std::runtime_error("load_weights: fewer than two widths in " + path);
    std::vector<Index> widths(n_widths);
    for (auto& v : widths) v = static_cast<Index>(get_u32());

    Weights out;
    for (std::uint32_t l = 0; l + 1 < n_widths; ++l) {
        Matrix m(widths[l], widths[l + 1]);
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) {
                double v;
                in.read(reinterpret_cast<char*>(&v), 8);
                m(i, j) = v;
            }
        Vector bias(widths[l + 1]);
        in.read(reinterpret_cast<char*>(bias.data()), static_cast<std::streamsize>(bias.size()) * 8);
        if (!in) throw std::runtime_error("load_weights: truncated payload in " + path);
        out.w.push_back(std::move(m));
        out.b.push_back(std::move(bias));
    }
    return out;
}

}  // namespace distillfed
