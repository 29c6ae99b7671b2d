#pragma once

// Small dense networks with tanh hidden layers, manual backprop and Adam.

#include <cmath>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dara/core.hpp"

namespace dara {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct Layer {
    Mat W;  // out x in
    Vec b;
};

/// Elementwise tanh through exp, which Eigen vectorizes for doubles (its own
/// double tanh is scalar). Absolute error stays at rounding level.
inline Mat tanh_of(const Mat& z) {
    Eigen::ArrayXXd e = (-2.0 * z.array().abs()).exp();
    return (((1.0 - e) / (1.0 + e)) * z.array().sign()).matrix();
}

/// Column-batched network: inputs are (in_dim x batch). Hidden layers use
/// tanh; the output layer is linear.
struct Mlp {
    std::vector<Layer> layers;

    int in_dim() const { return layers.empty() ? 0 : int(layers.front().W.cols()); }
    int out_dim() const { return layers.empty() ? 0 : int(layers.back().W.rows()); }

    std::vector<int> sizes() const {
        std::vector<int> s;
        if (layers.empty()) return s;
        s.push_back(in_dim());
        for (const auto& l : layers) s.push_back(int(l.W.rows()));
        return s;
    }

    std::size_t num_params() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += std::size_t(l.W.size() + l.b.size());
        return n;
    }

    /// Flat view for finite differences: layer by layer, W column-major then b.
    double& param(std::size_t i) {
        for (auto& l : layers) {
            if (i < std::size_t(l.W.size())) return l.W.data()[i];
            i -= std::size_t(l.W.size());
            if (i < std::size_t(l.b.size())) return l.b.data()[i];
            i -= std::size_t(l.b.size());
        }
        throw InputError("parameter index out of range");
    }

    Mat forward(const Mat& x) const {
        Mat h = x;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            Mat z = layers[i].W * h;
            z.colwise() += layers[i].b;
            if (i + 1 < layers.size()) z = tanh_of(z);
            h = std::move(z);
        }
        return h;
    }

    /// Forward pass keeping every activation (acts[0] is the input).
    Mat forward(const Mat& x, std::vector<Mat>& acts) const {
        acts.clear();
        acts.push_back(x);
        for (std::size_t i = 0; i < layers.size(); ++i) {
            Mat z = layers[i].W * acts.back();
            z.colwise() += layers[i].b;
            if (i + 1 < layers.size()) z = tanh_of(z);
            acts.push_back(std::move(z));
        }
        return acts.back();
    }

    /// Gradients for dL/d(output) = dz, given the cached activations.
    std::vector<Layer> backward(const std::vector<Mat>& acts, Mat dz) const {
        std::vector<Layer> g(layers.size());
        for (std::size_t ii = layers.size(); ii-- > 0;) {
            g[ii].W = dz * acts[ii].transpose();
            g[ii].b = dz.rowwise().sum();
            if (ii == 0) break;
            Mat dh = layers[ii].W.transpose() * dz;
            dz = (dh.array() * (1.0 - acts[ii].array().square())).matrix();
        }
        return g;
    }

    bool finite() const {
        for (const auto& l : layers)
            if (!l.W.allFinite() || !l.b.allFinite()) return false;
        return true;
    }
};

/// Glorot-uniform weights, zero biases.
inline Mlp make_mlp(const std::vector<int>& sizes, Rng& rng) {
    if (sizes.size() < 2) throw InputError("network needs an input and an output size");
    for (int s : sizes)
        if (s <= 0) throw InputError("layer sizes must be positive");
    Mlp m;
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
        Layer l;
        int in = sizes[i], out = sizes[i + 1];
        double lim = std::sqrt(6.0 / double(in + out));
        std::uniform_real_distribution<double> u(-lim, lim);
        l.W.resize(out, in);
        for (int c = 0; c < in; ++c)
            for (int r = 0; r < out; ++r) l.W(r, c) = u(rng);
        l.b = Vec::Zero(out);
        m.layers.push_back(std::move(l));
    }
    return m;
}

inline Mlp zero_mlp(const std::vector<int>& sizes) {
    Rng rng(0);
    Mlp m = make_mlp(sizes, rng);
    for (auto& l : m.layers) {
        l.W.setZero();
        l.b.setZero();
    }
    return m;
}

/// First/second moment adaptive steps with bias correction.
struct Adam {
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    long long t = 0;
    std::vector<Layer> m, v;

    explicit Adam(double lr_ = 1e-3) : lr(lr_) {}

    void step(Mlp& net, const std::vector<Layer>& g) {
        if (m.empty()) {
            for (const auto& l : net.layers) {
                m.push_back({Mat::Zero(l.W.rows(), l.W.cols()), Vec::Zero(l.b.size())});
                v.push_back(m.back());
            }
        }
        ++t;
        double c1 = 1.0 - std::pow(beta1, double(t)), c2 = 1.0 - std::pow(beta2, double(t));
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            m[i].W = beta1 * m[i].W + (1 - beta1) * g[i].W;
            v[i].W = beta2 * v[i].W + (1 - beta2) * g[i].W.cwiseProduct(g[i].W);
            m[i].b = beta1 * m[i].b + (1 - beta1) * g[i].b;
            v[i].b = beta2 * v[i].b + (1 - beta2) * g[i].b.cwiseProduct(g[i].b);
            net.layers[i].W.array() -= lr * (m[i].W.array() / c1) / ((v[i].W.array() / c2).sqrt() + eps);
            net.layers[i].b.array() -= lr * (m[i].b.array() / c1) / ((v[i].b.array() / c2).sqrt() + eps);
        }
    }
};

// ---------------------------------------------------------------------------
// Losses. Each returns the mean loss and writes dL/dz into `dz`.

/// Two-logit cross-entropy; labels are 0 (source) or 1 (target).
inline double cross_entropy(const Mat& z, const std::vector<int>& labels, Mat& dz) {
    const Eigen::Index B = z.cols();
    dz.resize(z.rows(), B);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        double mx = z.col(i).maxCoeff();
        double lse = mx + std::log((z.col(i).array() - mx).exp().sum());
        loss -= z(labels[std::size_t(i)], i) - lse;
        dz.col(i) = (z.col(i).array() - lse).exp().matrix();
        dz(labels[std::size_t(i)], i) -= 1.0;
    }
    dz /= double(B);
    return loss / double(B);
}

/// 0.5 (z[a_i, i] - y_i)^2 averaged over the batch.
inline double selected_squared(const Mat& z, const std::vector<int>& actions, const std::vector<double>& y, Mat& dz) {
    const Eigen::Index B = z.cols();
    dz = Mat::Zero(z.rows(), B);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i) {
        double e = z(actions[std::size_t(i)], i) - y[std::size_t(i)];
        loss += 0.5 * e * e;
        dz(actions[std::size_t(i)], i) = e / double(B);
    }
    return loss / double(B);
}

inline double softplus(double x) { return x > 30 ? x : std::log1p(std::exp(x)); }
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Diagonal Gaussian NLL; z stacks the mean (d rows) over raw scale (d rows),
/// with sigma = floor + softplus(raw).
inline double gaussian_nll(const Mat& z, const Mat& y, double floor, Mat& dz) {
    const Eigen::Index d = y.rows(), B = y.cols();
    dz.resize(z.rows(), B);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < B; ++i)
        for (Eigen::Index k = 0; k < d; ++k) {
            double mu = z(k, i), raw = z(d + k, i);
            double sig = floor + softplus(raw);
            double e = (y(k, i) - mu) / sig;
            loss += 0.5 * e * e + std::log(sig);
            dz(k, i) = -(e / sig) / double(B);
            dz(d + k, i) = ((1.0 - e * e) / sig) * sigmoid(raw) / double(B);
        }
    return loss / double(B);
}

using LossFn = std::function<double(const Mlp&, std::vector<Layer>* grad)>;

/// Max relative error between analytic and central-difference gradients over
/// a random subset of coordinates. Relative error is |a-n| / max(|a|+|n|, 1e-6).
inline double grad_check(Mlp net, const LossFn& loss, std::size_t n_coords = 100, double h = 1e-5,
                         std::uint64_t seed = 0) {
    std::vector<Layer> g;
    loss(net, &g);
    Mlp probe = net;
    std::vector<double> flat;
    for (auto& l : g) {
        flat.insert(flat.end(), l.W.data(), l.W.data() + l.W.size());
        flat.insert(flat.end(), l.b.data(), l.b.data() + l.b.size());
    }
    std::size_t P = net.num_params();
    std::vector<std::size_t> idx(P);
    for (std::size_t i = 0; i < P; ++i) idx[i] = i;
    Rng rng(seed);
    std::size_t k = std::min(n_coords, P);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + std::size_t(std::uniform_int_distribution<std::size_t>(0, P - 1 - i)(rng));
        std::swap(idx[i], idx[j]);
    }
    double worst = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        std::size_t i = idx[c];
        double orig = probe.param(i);
        probe.param(i) = orig + h;
        double lp = loss(probe, nullptr);
        probe.param(i) = orig - h;
        double lm = loss(probe, nullptr);
        probe.param(i) = orig;
        double num = (lp - lm) / (2 * h);
        double an = flat[i];
        worst = std::max(worst, std::abs(an - num) / std::max(std::abs(an) + std::abs(num), 1e-6));
    }
    return worst;
}

inline LossFn classifier_loss(const Mat& x, const std::vector<int>& labels) {
    return [x, labels](const Mlp& m, std::vector<Layer>* g) {
        std::vector<Mat> acts;
        Mat z = m.forward(x, acts), dz;
        double l = cross_entropy(z, labels, dz);
        if (g) *g = m.backward(acts, dz);
        return l;
    };
}

inline LossFn q_regression_loss(const Mat& x, const std::vector<int>& actions, const std::vector<double>& y) {
    return [x, actions, y](const Mlp& m, std::vector<Layer>* g) {
        std::vector<Mat> acts;
        Mat z = m.forward(x, acts), dz;
        double l = selected_squared(z, actions, y, dz);
        if (g) *g = m.backward(acts, dz);
        return l;
    };
}

// ---------------------------------------------------------------------------
// Text serialization: sizes line, then one row-major line per matrix/vector.

inline void write_mlp(std::ostream& os, const Mlp& m) {
    auto s = m.sizes();
    os << "layers=";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "\n";
    for (const auto& l : m.layers) {
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) os << (r || c ? "," : "") << fmt(l.W(r, c));
        os << "\n";
        for (Eigen::Index r = 0; r < l.b.size(); ++r) os << (r ? "," : "") << fmt(l.b[r]);
        os << "\n";
    }
}

namespace detail {
inline std::vector<double> read_row(std::istream& is, std::size_t n, const std::string& what) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("unexpected end of file reading " + what);
    auto f = split(line, ',');
    if (f.size() != n) throw IoError(what + ": expected " + std::to_string(n) + " values, got " + std::to_string(f.size()));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        char* end = nullptr;
        out[i] = std::strtod(f[i].c_str(), &end);
        if (end != f[i].c_str() + f[i].size() || !std::isfinite(out[i])) throw IoError(what + ": malformed value '" + f[i] + "'");
    }
    return out;
}

inline std::string read_kv(std::istream& is, const std::string& key) {
    std::string line;
    if (!std::getline(is, line)) throw IoError("unexpected end of file, expected '" + key + "='");
    auto eq = line.find('=');
    if (eq == std::string::npos || line.substr(0, eq) != key) throw IoError("expected '" + key + "=', got '" + line + "'");
    return line.substr(eq + 1);
}
}  // namespace detail

inline Mlp read_mlp(std::istream& is) {
    std::vector<int> sizes;
    try {
        for (auto& p : split(detail::read_kv(is, "layers"), ',')) sizes.push_back(int(parse_int(p, "layer size")));
    } catch (const InputError& e) {
        throw IoError(e.what());
    }
    if (sizes.size() < 2) throw IoError("network needs at least two layer sizes");
    Mlp m = zero_mlp(sizes);
    for (auto& l : m.layers) {
        auto w = detail::read_row(is, std::size_t(l.W.size()), "weights");
        for (Eigen::Index r = 0, i = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = w[std::size_t(i++)];
        auto b = detail::read_row(is, std::size_t(l.b.size()), "biases");
        for (Eigen::Index r = 0; r < l.b.size(); ++r) l.b[r] = b[std::size_t(r)];
    }
    return m;
}

}  // namespace dara
