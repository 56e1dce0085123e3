#include "sal/nn.hpp"

#include "sal/error.hpp"

#include <cmath>
#include <cstring>
#include <random>
#include <string>

namespace sal {

namespace {

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw NumericError(std::string(what) + " contains non-finite values");
    }
}

Matrix activate(Activation act, const Matrix& z) {
    switch (act) {
    case Activation::sigmoid:
        return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
    case Activation::relu:
        return z.cwiseMax(0.0);
    case Activation::tanh:
        return z.array().tanh().matrix();
    }
    return z;
}

// s'(z) expressed through z and a = s(z).
Matrix activation_derivative(Activation act, const Matrix& z, const Matrix& a) {
    switch (act) {
    case Activation::sigmoid:
        return (a.array() * (1.0 - a.array())).matrix();
    case Activation::relu:
        return z.unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::tanh:
        return (1.0 - a.array().square()).matrix();
    }
    return Matrix::Ones(z.rows(), z.cols());
}

Matrix affine(const LayerParams& layer, const Matrix& x) {
    Matrix z = x * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    return z;
}

// Row-wise log-sum-exp.
Vector log_sum_exp(const Matrix& logits) {
    Vector max = logits.rowwise().maxCoeff();
    Vector out(logits.rows());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        out(i) = max(i) + std::log((logits.row(i).array() - max(i)).exp().sum());
    }
    return out;
}

} // namespace

std::string_view to_string(Activation act) noexcept {
    switch (act) {
    case Activation::sigmoid:
        return "sigmoid";
    case Activation::relu:
        return "relu";
    case Activation::tanh:
        return "tanh";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "sigmoid") return Activation::sigmoid;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

Network::Network(int in_dim, int out_dim, int depth, int width, Activation act)
    : in_dim_(in_dim), out_dim_(out_dim), width_(width), activation_(act) {
    if (in_dim < 1 || out_dim < 1) throw ConfigError("network dimensions must be positive");
    if (depth < 1) throw ConfigError("network depth must be at least 1");
    if (depth > 1 && width < 1) throw ConfigError("hidden width must be at least 1");
    layers_.reserve(static_cast<std::size_t>(depth));
    int fan_in = in_dim;
    for (int l = 0; l < depth; ++l) {
        const int fan_out = (l + 1 == depth) ? out_dim : width;
        layers_.push_back({Matrix::Zero(fan_out, fan_in), Vector::Zero(fan_out)});
        fan_in = fan_out;
    }
}

Network Network::initialized(int in_dim, int out_dim, int depth, int width, Activation act,
                             std::uint64_t seed) {
    Network net(in_dim, out_dim, depth, width, act);
    std::mt19937_64 rng(seed);
    for (auto& layer : net.layers_) {
        const auto fan_in = static_cast<double>(layer.in_dim());
        const auto fan_out = static_cast<double>(layer.out_dim());
        const double limit = act == Activation::relu ? std::sqrt(6.0 / fan_in)
                                                     : std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        // Fill row-major so the draw order does not depend on Eigen's storage.
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
                layer.weights(r, c) = dist(rng);
            }
        }
        layer.bias.setZero();
    }
    return net;
}

std::size_t Network::param_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        n += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    }
    return n;
}

void Network::set_zero() {
    for (auto& layer : layers_) {
        layer.weights.setZero();
        layer.bias.setZero();
    }
}

std::uint64_t Network::param_hash() const noexcept {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const double* data, Eigen::Index count) {
        for (Eigen::Index i = 0; i < count; ++i) {
            std::uint64_t bits = 0;
            std::memcpy(&bits, data + i, sizeof bits);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xffU;
                h *= 1099511628211ULL;
            }
        }
    };
    for (const auto& layer : layers_) {
        mix(layer.weights.data(), layer.weights.size());
        mix(layer.bias.data(), layer.bias.size());
    }
    return h;
}

bool Network::same_architecture(const Network& other) const noexcept {
    if (in_dim_ != other.in_dim_ || out_dim_ != other.out_dim_ || depth() != other.depth() ||
        activation_ != other.activation_) {
        return false;
    }
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (layers_[l].weights.rows() != other.layers_[l].weights.rows() ||
            layers_[l].weights.cols() != other.layers_[l].weights.cols()) {
            return false;
        }
    }
    return true;
}

ActivationTrace forward(const Network& net, const Matrix& batch) {
    if (batch.cols() != net.in_dim()) {
        throw ShapeError("forward: batch has " + std::to_string(batch.cols()) + " columns, network expects " +
                         std::to_string(net.in_dim()));
    }
    ActivationTrace trace;
    trace.input = batch;
    const auto& layers = net.layers();
    const int hidden = net.hidden_count();
    trace.pre.reserve(static_cast<std::size_t>(hidden));
    trace.post.reserve(static_cast<std::size_t>(hidden));
    const Matrix* x = &trace.input;
    for (int l = 0; l < hidden; ++l) {
        trace.pre.push_back(affine(layers[static_cast<std::size_t>(l)], *x));
        trace.post.push_back(activate(net.activation(), trace.pre.back()));
        x = &trace.post.back();
    }
    trace.logits = affine(layers.back(), *x);
    return trace;
}

Matrix predict_logits(const Network& net, const Matrix& batch) {
    if (batch.cols() != net.in_dim()) {
        throw ShapeError("predict_logits: batch column count does not match network input");
    }
    Matrix x = batch;
    const auto& layers = net.layers();
    for (int l = 0; l < net.hidden_count(); ++l) {
        x = activate(net.activation(), affine(layers[static_cast<std::size_t>(l)], x));
    }
    return affine(layers.back(), x);
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double max = logits.row(i).maxCoeff();
        auto e = (logits.row(i).array() - max).exp();
        out.row(i) = e / e.sum();
    }
    return out;
}

VectorLoss softmax_ce(const Vector& logits, const Vector& target) {
    if (logits.size() != target.size() || logits.size() == 0) {
        throw ShapeError("softmax_ce: logits and target must be non-empty and of equal length");
    }
    if (!logits.allFinite()) throw NumericError("softmax_ce: non-finite logits");
    const double max = logits.maxCoeff();
    const double lse = max + std::log((logits.array() - max).exp().sum());
    const Vector log_prob = logits.array() - lse;
    VectorLoss out;
    out.loss = -(target.array() * log_prob.array()).sum();
    out.grad = target.sum() * log_prob.array().exp().matrix() - target;
    return out;
}

LossValue softmax_ce(const Matrix& logits, std::span<const int> labels) {
    if (static_cast<Eigen::Index>(labels.size()) != logits.rows()) {
        throw ShapeError("softmax_ce: label count does not match batch size");
    }
    require_finite(logits, "softmax_ce logits");
    const Eigen::Index m = logits.rows();
    const Vector lse = log_sum_exp(logits);
    LossValue out;
    out.grad.resize(logits.rows(), logits.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= logits.cols()) throw ShapeError("softmax_ce: label out of range");
        total += lse(i) - logits(i, y);
        out.grad.row(i) = (logits.row(i).array() - lse(i)).exp();
        out.grad(i, y) -= 1.0;
    }
    const double scale = m > 0 ? 1.0 / static_cast<double>(m) : 0.0;
    out.loss = total * scale;
    out.grad *= scale;
    return out;
}

LossValue mse(const Matrix& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("mse: prediction is " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                         ", target is " + std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
    }
    LossValue out;
    const auto count = static_cast<double>(pred.size());
    if (count == 0) {
        out.grad = Matrix::Zero(pred.rows(), pred.cols());
        return out;
    }
    const Matrix diff = pred - target;
    out.loss = diff.squaredNorm() / count;
    out.grad = (2.0 / count) * diff;
    return out;
}

GradientSet backward(const Network& net, const ActivationTrace& trace, const OutputGradients& head) {
    const int hidden = net.hidden_count();
    if (static_cast<int>(trace.post.size()) != hidden || static_cast<int>(trace.pre.size()) != hidden ||
        trace.input.cols() != net.in_dim() || trace.logits.cols() != net.out_dim()) {
        throw ShapeError("backward: trace was not produced by this network");
    }
    for (int l = 0; l < hidden; ++l) {
        if (trace.post[static_cast<std::size_t>(l)].cols() != net.layers()[static_cast<std::size_t>(l)].out_dim()) {
            throw ShapeError("backward: trace layer width does not match network");
        }
    }
    const Eigen::Index m = trace.batch_size();
    if (head.logits.rows() != m || head.logits.cols() != net.out_dim()) {
        throw ShapeError("backward: logit gradient shape does not match trace");
    }
    if (!head.hidden.empty() && static_cast<int>(head.hidden.size()) != hidden) {
        throw ShapeError("backward: hidden gradient list must be empty or cover every hidden layer");
    }

    const auto& layers = net.layers();
    GradientSet grads(layers.size());
    Matrix delta = head.logits;
    for (int l = net.depth() - 1; l >= 0; --l) {
        const auto idx = static_cast<std::size_t>(l);
        const Matrix& x = l == 0 ? trace.input : trace.post[idx - 1];
        grads[idx].weights = delta.transpose() * x;
        grads[idx].bias = delta.colwise().sum().transpose();
        if (l == 0) break;
        Matrix upstream = delta * layers[idx].weights;
        const auto below = idx - 1;
        if (!head.hidden.empty() && head.hidden[below].size() != 0) {
            const Matrix& extra = head.hidden[below];
            if (extra.rows() != upstream.rows() || extra.cols() != upstream.cols()) {
                throw ShapeError("backward: hidden gradient shape does not match layer " + std::to_string(l));
            }
            upstream += extra;
        }
        delta = upstream.cwiseProduct(activation_derivative(net.activation(), trace.pre[below], trace.post[below]));
    }
    return grads;
}

GradientSet zero_gradients(const Network& net) {
    GradientSet grads;
    grads.reserve(net.layers().size());
    for (const auto& layer : net.layers()) {
        grads.push_back({Matrix::Zero(layer.weights.rows(), layer.weights.cols()), Vector::Zero(layer.bias.size())});
    }
    return grads;
}

} // namespace sal
