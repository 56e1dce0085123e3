#include "sal/floors.hpp"

#include "sal/error.hpp"

#include <string>

namespace sal {

std::vector<FloorSpec> floor_specs(int base_depth, int base_width, int floors) {
    if (floors < 1) throw ConfigError("model.floors", "floor count must be at least 1");
    if (floors > 30) throw ConfigError("model.floors", "floor count too large");
    const long top_divisor = 1L << (floors - 1);
    if (base_depth < top_divisor) {
        throw ConfigError("model.floors", "base depth " + std::to_string(base_depth) + " cannot host " +
                                              std::to_string(floors) + " floors (needs >= " +
                                              std::to_string(top_divisor) + ")");
    }
    if (base_width < top_divisor) {
        throw ConfigError("model.floors", "base width " + std::to_string(base_width) + " cannot host " +
                                              std::to_string(floors) + " floors (needs >= " +
                                              std::to_string(top_divisor) + ")");
    }
    std::vector<FloorSpec> specs;
    specs.reserve(static_cast<std::size_t>(floors));
    for (int f = 1; f <= floors; ++f) {
        const int divisor = 1 << (f - 1);
        specs.push_back({f, base_depth / divisor, base_width / divisor});
    }
    return specs;
}

FloorStack::FloorStack(std::vector<Floor> top_to_bottom) : floors_(std::move(top_to_bottom)) {
    if (floors_.empty()) throw ConfigError("floor stack must hold at least one floor");
    for (std::size_t i = 1; i < floors_.size(); ++i) {
        const auto& upper = floors_[i - 1].spec;
        const auto& lower = floors_[i].spec;
        if (upper.depth > lower.depth || upper.width > lower.width) {
            throw ConfigError("floor stack must not grow toward the top");
        }
        if (floors_[i - 1].net.in_dim() != floors_[i].net.in_dim() ||
            floors_[i - 1].net.out_dim() != floors_[i].net.out_dim()) {
            throw ConfigError("floors must share input and output dimensions");
        }
    }
}

Floor& FloorStack::floor(int index) {
    if (index < 1 || index > size()) throw std::out_of_range("floor index " + std::to_string(index));
    return floors_[static_cast<std::size_t>(size() - index)];
}

const Floor& FloorStack::floor(int index) const {
    if (index < 1 || index > size()) throw std::out_of_range("floor index " + std::to_string(index));
    return floors_[static_cast<std::size_t>(size() - index)];
}

nlohmann::json FloorStack::summary() const {
    auto out = nlohmann::json::array();
    for (const auto& f : floors_) {
        out.push_back({{"floor", f.spec.index},
                       {"depth", f.spec.depth},
                       {"width", f.spec.width},
                       {"params", f.net.param_count()}});
    }
    return out;
}

FloorStack build_floor_stack(int base_depth, int base_width, int floors, int in_dim, int out_dim,
                             Activation act, std::uint64_t seed) {
    const auto specs = floor_specs(base_depth, base_width, floors);
    std::vector<Floor> stack;
    stack.reserve(specs.size());
    for (auto it = specs.rbegin(); it != specs.rend(); ++it) {
        const std::uint64_t floor_seed = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(it->index);
        stack.push_back({*it, Network::initialized(in_dim, out_dim, it->depth, it->width, act, floor_seed)});
    }
    return FloorStack(std::move(stack));
}

GuidanceMapping map_layers(const FloorSpec& upper, const FloorSpec& lower) {
    if (upper.depth < 1 || lower.depth < 1) throw ConfigError("map_layers: depths must be positive");
    if (upper.depth > lower.depth) {
        throw ConfigError("map_layers: upper floor depth " + std::to_string(upper.depth) + " exceeds lower depth " +
                          std::to_string(lower.depth));
    }
    if (upper.width > lower.width) {
        throw ConfigError("map_layers: upper floor width " + std::to_string(upper.width) + " exceeds lower width " +
                          std::to_string(lower.width));
    }
    GuidanceMapping mapping;
    for (int j = 1; j < upper.depth; ++j) {
        const int target = (j * lower.depth + upper.depth - 1) / upper.depth;
        mapping.hidden.push_back({j, target, upper.width});
    }
    return mapping;
}

GuidanceTargets extract_targets(const ActivationTrace& upper_trace, const GuidanceMapping& mapping) {
    GuidanceTargets targets;
    targets.hidden.reserve(mapping.hidden.size());
    for (const auto& link : mapping.hidden) {
        if (link.upper_layer < 1 || link.upper_layer > static_cast<int>(upper_trace.post.size())) {
            throw ShapeError("extract_targets: mapping references upper hidden layer " +
                             std::to_string(link.upper_layer) + " but the trace has " +
                             std::to_string(upper_trace.post.size()));
        }
        const Matrix& a = upper_trace.post[static_cast<std::size_t>(link.upper_layer - 1)];
        if (a.cols() != link.width_overlap) {
            throw ShapeError("extract_targets: upper layer width does not match the mapping overlap");
        }
        targets.hidden.push_back(a);
    }
    if (mapping.output) targets.logits = upper_trace.logits;
    return targets;
}

GuidanceLoss guidance_loss(const ActivationTrace& lower_trace, const GuidanceTargets& targets,
                           const GuidanceMapping& mapping) {
    if (targets.hidden.size() != mapping.hidden.size()) {
        throw ShapeError("guidance_loss: target count does not match mapping");
    }
    const auto hidden = lower_trace.post.size();
    const auto m = lower_trace.batch_size();
    GuidanceLoss out;
    out.grads.hidden.assign(hidden, Matrix());
    for (std::size_t k = 0; k < mapping.hidden.size(); ++k) {
        const auto& link = mapping.hidden[k];
        if (link.lower_layer < 1 || link.lower_layer > static_cast<int>(hidden)) {
            throw ShapeError("guidance_loss: mapping references lower hidden layer " +
                             std::to_string(link.lower_layer));
        }
        const auto idx = static_cast<std::size_t>(link.lower_layer - 1);
        const Matrix& a = lower_trace.post[idx];
        if (a.cols() < link.width_overlap) throw ShapeError("guidance_loss: lower layer narrower than overlap");
        const auto term = mse(a.leftCols(link.width_overlap), targets.hidden[k]);
        out.total += term.loss;
        out.per_layer.push_back(term.loss);
        Matrix& g = out.grads.hidden[idx];
        if (g.size() == 0) g = Matrix::Zero(m, a.cols());
        g.leftCols(link.width_overlap) += term.grad;
    }
    if (mapping.output) {
        const auto term = mse(lower_trace.logits, targets.logits);
        out.total += term.loss;
        out.per_layer.push_back(term.loss);
        out.grads.logits = term.grad;
    } else {
        out.grads.logits = Matrix::Zero(m, lower_trace.logits.cols());
    }
    return out;
}

} // namespace sal
