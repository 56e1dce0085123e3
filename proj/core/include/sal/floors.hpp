#pragma once

// The floor hierarchy: each floor above the bottom halves depth and width, and
// a guidance mapping ties the layers of an upper floor to the floor below.

#include "sal/nn.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace sal {

struct FloorSpec {
    int index = 1; // 1 = bottom
    int depth = 1; // trainable layers, output included
    int width = 1; // hidden units per hidden layer

    friend bool operator==(const FloorSpec&, const FloorSpec&) = default;
};

// Specs for floors 1..floors in bottom-to-top order:
// depth = floor(D / 2^(f-1)), width = floor(W0 / 2^(f-1)).
std::vector<FloorSpec> floor_specs(int base_depth, int base_width, int floors);

struct Floor {
    FloorSpec spec;
    Network net;
};

// Floors ordered topmost (simplest) first, bottom (deployed) last.
class FloorStack {
public:
    explicit FloorStack(std::vector<Floor> top_to_bottom);

    int size() const noexcept { return static_cast<int>(floors_.size()); }

    // Access by floor index, 1 = bottom.
    Floor& floor(int index);
    const Floor& floor(int index) const;

    Floor& bottom() { return floors_.back(); }
    const Floor& bottom() const { return floors_.back(); }
    Floor& top() { return floors_.front(); }
    const Floor& top() const { return floors_.front(); }

    const std::vector<Floor>& floors() const noexcept { return floors_; }

    // Per-floor depth/width/parameter count, topmost first.
    nlohmann::json summary() const;

private:
    std::vector<Floor> floors_;
};

// Each floor gets its own initialisation seed derived from `seed`.
FloorStack build_floor_stack(int base_depth, int base_width, int floors, int in_dim, int out_dim,
                             Activation act, std::uint64_t seed);

// Upper hidden layer -> lower hidden layer, 1-based hidden indices.
struct LayerLink {
    int upper_layer = 0;
    int lower_layer = 0;
    int width_overlap = 0;

    friend bool operator==(const LayerLink&, const LayerLink&) = default;
};

// Hidden links plus the implicit output -> output entry.
struct GuidanceMapping {
    std::vector<LayerLink> hidden;
    bool output = true;
};

// Upper hidden layer j maps to lower hidden layer ceil(j * lower.depth / upper.depth);
// the first upper.width units of the lower layer are compared.
GuidanceMapping map_layers(const FloorSpec& upper, const FloorSpec& lower);

// Stored upper-floor values for one mini-batch. Owned copies, so nothing done to
// the lower network can reach them.
struct GuidanceTargets {
    std::vector<Matrix> hidden; // one per mapping.hidden entry, post-activation values
    Matrix logits;
};

GuidanceTargets extract_targets(const ActivationTrace& upper_trace, const GuidanceMapping& mapping);

struct GuidanceLoss {
    double total = 0.0;
    std::vector<double> per_layer; // hidden links in mapping order, then the output entry
    OutputGradients grads;         // head to feed `backward` on the lower network
};

// Sum over mapped entries of mse(lower slice, target); slice = first width_overlap units.
GuidanceLoss guidance_loss(const ActivationTrace& lower_trace, const GuidanceTargets& targets,
                           const GuidanceMapping& mapping);

} // namespace sal
