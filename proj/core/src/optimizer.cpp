#include "sal/optimizer.hpp"

#include "sal/error.hpp"

#include <cmath>
#include <string>

namespace sal {

std::string_view to_string(OptimizerKind kind) noexcept {
    return kind == OptimizerKind::sgd ? "sgd" : "adam";
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(OptimizerConfig config, const Network& net) : config_(config) {
    if (config_.kind == OptimizerKind::adam) {
        first_moment_ = zero_gradients(net);
        second_moment_ = zero_gradients(net);
    }
}

void Optimizer::step(Network& net, const GradientSet& grads) {
    auto& layers = net.layers();
    if (grads.size() != layers.size()) throw ShapeError("optimizer: gradient layer count mismatch");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        if (grads[l].weights.rows() != layers[l].weights.rows() ||
            grads[l].weights.cols() != layers[l].weights.cols() || grads[l].bias.size() != layers[l].bias.size()) {
            throw ShapeError("optimizer: gradient shape mismatch at layer " + std::to_string(l));
        }
    }
    ++steps_;
    const double lr = config_.lr;
    if (config_.kind == OptimizerKind::sgd) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].weights -= lr * grads[l].weights;
            layers[l].bias -= lr * grads[l].bias;
        }
        return;
    }

    if (first_moment_.size() != layers.size()) throw ShapeError("optimizer: state belongs to another network");
    const double b1 = config_.beta1;
    const double b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
    const double eps = config_.eps;
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights, first_moment_[l].weights, second_moment_[l].weights, grads[l].weights);
        update(layers[l].bias, first_moment_[l].bias, second_moment_[l].bias, grads[l].bias);
    }
}

} // namespace sal
