#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fusionmap/error.hpp"

namespace fusionmap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Activation { leaky_relu, tanh };

inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "leaky_relu"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "tanh") return Activation::tanh;
    throw DataError("unknown activation '" + s + "'");
}

/// Fully connected network. Hidden layers apply the activation; the last layer is linear.
struct Mlp {
    std::vector<Matrix> weights;  // weights[l] is out x in
    std::vector<Vector> biases;
    Activation activation = Activation::leaky_relu;
    double leaky_slope = 0.01;

    std::size_t layers() const { return weights.size(); }
    Eigen::Index input_size() const { return weights.empty() ? 0 : weights.front().cols(); }
    Eigen::Index output_size() const { return weights.empty() ? 0 : weights.back().rows(); }

    std::vector<int> sizes() const {
        std::vector<int> s;
        if (weights.empty()) return s;
        s.push_back(static_cast<int>(weights.front().cols()));
        for (const auto& w : weights) s.push_back(static_cast<int>(w.rows()));
        return s;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
        return n;
    }

    void validate() const {
        if (weights.empty() || weights.size() != biases.size()) throw DataError("mlp has no layers or mismatched biases");
        for (std::size_t l = 0; l < weights.size(); ++l) {
            if (biases[l].size() != weights[l].rows()) throw DataError("mlp bias size mismatch");
            if (l > 0 && weights[l].cols() != weights[l - 1].rows()) throw DataError("mlp layer sizes are incompatible");
            if (!weights[l].allFinite() || !biases[l].allFinite()) throw DataError("mlp parameters are not finite");
        }
    }

    friend bool operator==(const Mlp& a, const Mlp& b) {
        if (a.activation != b.activation || a.leaky_slope != b.leaky_slope || a.weights.size() != b.weights.size())
            return false;
        for (std::size_t l = 0; l < a.weights.size(); ++l) {
            if (a.weights[l].rows() != b.weights[l].rows() || a.weights[l].cols() != b.weights[l].cols()) return false;
            if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
        }
        return true;
    }
};

/// Glorot-uniform weights scaled by `init_scale`, zero biases.
inline Mlp make_mlp(const std::vector<int>& sizes, std::mt19937_64& rng, double init_scale = 1.0,
                    Activation act = Activation::leaky_relu) {
    if (sizes.size() < 2) throw ConfigError("an mlp needs at least an input and an output size");
    for (int s : sizes)
        if (s <= 0) throw ConfigError("mlp layer sizes must be positive");
    Mlp m;
    m.activation = act;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int in = sizes[l];
        const int out = sizes[l + 1];
        const double bound = init_scale * std::sqrt(6.0 / (in + out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        Matrix w(out, in);
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Vector::Zero(out));
    }
    return m;
}

/// Intermediate values kept from a batched forward pass (one column per sample).
struct MlpCache {
    std::vector<Matrix> inputs;       // inputs[l] feeds layer l
    std::vector<Matrix> preactivations;
};

namespace detail {

inline double activate(Activation a, double slope, double z) {
    if (a == Activation::tanh) return std::tanh(z);
    return z > 0.0 ? z : slope * z;
}

inline double activate_derivative(Activation a, double slope, double z) {
    if (a == Activation::tanh) {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    return z > 0.0 ? 1.0 : slope;
}

}  // namespace detail

inline Matrix mlp_forward_batch(const Mlp& m, const Matrix& x, MlpCache* cache = nullptr) {
    if (m.weights.empty()) throw DataError("mlp has no layers");
    if (x.rows() != m.input_size())
        throw DataError("mlp expects input width " + std::to_string(m.input_size()) + ", got " +
                        std::to_string(x.rows()));
    if (cache) {
        cache->inputs.clear();
        cache->preactivations.clear();
    }
    Matrix a = x;
    for (std::size_t l = 0; l < m.layers(); ++l) {
        Matrix z = m.weights[l] * a;
        z.colwise() += m.biases[l];
        if (cache) {
            cache->inputs.push_back(std::move(a));
            cache->preactivations.push_back(z);
        }
        if (l + 1 < m.layers()) {
            a = z.unaryExpr([&](double v) { return detail::activate(m.activation, m.leaky_slope, v); });
        } else {
            a = std::move(z);
        }
    }
    return a;
}

inline Vector mlp_forward(const Mlp& m, const Vector& x) {
    if (x.size() != m.input_size())
        throw DataError("mlp expects input width " + std::to_string(m.input_size()) + ", got " +
                        std::to_string(x.size()));
    return mlp_forward_batch(m, x);
}

struct MlpGradients {
    std::vector<Matrix> d_weights;
    std::vector<Vector> d_biases;
    Matrix d_input;  // one column per sample

    static MlpGradients zeros_like(const Mlp& m) {
        MlpGradients g;
        for (std::size_t l = 0; l < m.layers(); ++l) {
            g.d_weights.push_back(Matrix::Zero(m.weights[l].rows(), m.weights[l].cols()));
            g.d_biases.push_back(Vector::Zero(m.biases[l].size()));
        }
        return g;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& w : d_weights) s += w.squaredNorm();
        for (const auto& b : d_biases) s += b.squaredNorm();
        return s;
    }

    void scale(double f) {
        for (auto& w : d_weights) w *= f;
        for (auto& b : d_biases) b *= f;
    }
};

/// Reverse-mode gradients summed over the batch, given dLoss/dOutput per sample.
inline MlpGradients mlp_backward_batch(const Mlp& m, const MlpCache& cache, const Matrix& d_output) {
    if (cache.inputs.size() != m.layers()) throw DataError("mlp cache does not match the network");
    const Eigen::Index batch = cache.inputs.front().cols();
    if (d_output.rows() != m.output_size() || d_output.cols() != batch)
        throw DataError("upstream gradient shape does not match the mlp output");
    MlpGradients g;
    g.d_weights.resize(m.layers());
    g.d_biases.resize(m.layers());
    Matrix delta = d_output;  // dLoss/d(preactivation) of the current layer
    for (std::size_t l = m.layers(); l-- > 0;) {
        g.d_weights[l] = delta * cache.inputs[l].transpose();
        g.d_biases[l] = delta.rowwise().sum();
        Matrix upstream = m.weights[l].transpose() * delta;
        if (l > 0) {
            const Matrix& z = cache.preactivations[l - 1];
            delta = upstream.cwiseProduct(
                z.unaryExpr([&](double v) { return detail::activate_derivative(m.activation, m.leaky_slope, v); }));
        } else {
            g.d_input = std::move(upstream);
        }
    }
    return g;
}

inline MlpGradients mlp_backward(const Mlp& m, const Vector& x, const Vector& d_output) {
    MlpCache cache;
    mlp_forward_batch(m, x, &cache);
    if (d_output.size() != m.output_size()) throw DataError("upstream gradient size does not match the mlp output");
    return mlp_backward_batch(m, cache, d_output);
}

/// Adaptive-moment optimizer state for one network.
class Adam {
public:
    explicit Adam(const Mlp& m, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(MlpGradients::zeros_like(m)),
          v_(MlpGradients::zeros_like(m)) {}

    void step(Mlp& net, const MlpGradients& g) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t l = 0; l < net.layers(); ++l) {
            update(net.weights[l], m_.d_weights[l], v_.d_weights[l], g.d_weights[l], c1, c2);
            update(net.biases[l], m_.d_biases[l], v_.d_biases[l], g.d_biases[l], c1, c2);
        }
    }

private:
    template <class P>
    void update(P& param, P& m, P& v, const P& g, double c1, double c2) {
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        if (lr_ == 0.0) return;
        param.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }

    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    MlpGradients m_, v_;
};

}  // namespace fusionmap
