#pragma once

#include "sal/nn.hpp"

#include <string_view>

namespace sal {

enum class OptimizerKind { sgd, adam };

std::string_view to_string(OptimizerKind kind) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Holds the per-model moment estimates. One instance belongs to one network and
// lives as long as that network trains, across direct and guidance phases.
class Optimizer {
public:
    Optimizer(OptimizerConfig config, const Network& net);

    void step(Network& net, const GradientSet& grads);

    const OptimizerConfig& config() const noexcept { return config_; }
    long steps() const noexcept { return steps_; }

private:
    OptimizerConfig config_;
    long steps_ = 0;
    GradientSet first_moment_;
    GradientSet second_moment_;
};

} // namespace sal
