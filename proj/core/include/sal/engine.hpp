#pragma once

// Top-down hierarchical training: in every step each floor is trained on the
// labels, then used as a frozen teacher for the floor below, ending with the
// bottom floor. Also the plain single-network baseline and the wall-clock
// matched comparison of the two.

#include "sal/data.hpp"
#include "sal/floors.hpp"
#include "sal/nn.hpp"
#include "sal/optimizer.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace sal {

enum class Timing { wall, none };

struct TrainConfig {
    int t = 5;           // direct-training epochs per phase
    int r = 10;          // guidance epochs per phase
    int max_steps = 100; // S_max
    int floors = 3;
    int patience = 10; // steps for SAL, epochs for plain
    int base_depth = 8;
    int base_width = 256;
    double lr = 1e-3;
    int batch_size = 64;
    Activation activation = Activation::sigmoid;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    std::string monitor = "val_accuracy"; // or "val_loss"
    int max_epochs = 0;                   // plain cap; 0 selects the default
    Timing timing = Timing::wall;

    void validate() const;
    OptimizerConfig optimizer_config() const;
    // 10 * S_max * (t*F + r*(F-1)) unless max_epochs is set.
    int plain_epoch_cap() const;
};

// Stream of per-epoch shuffle seeds.
class ShuffleStream {
public:
    explicit ShuffleStream(std::uint64_t seed) : rng_(seed ^ 0x5DEECE66DULL) {}
    std::uint64_t next() { return rng_(); }

private:
    std::mt19937_64 rng_;
};

// Mini-batch CE training for `epochs` epochs; returns the sample-weighted mean
// loss of each epoch.
std::vector<double> train_direct(Network& net, Optimizer& opt, const Dataset& data, int epochs,
                                 std::size_t batch_size, ShuffleStream& shuffle);

// Per mini-batch: forward the frozen upper network, store its hidden and output
// values, take one optimizer step on the lower network against the guidance
// loss. Returns the mean guidance loss of each epoch.
std::vector<double> train_guided(Network& lower, Optimizer& opt, const Network& upper, const GuidanceMapping& mapping,
                                 const Dataset& data, int epochs, std::size_t batch_size, ShuffleStream& shuffle);

// Spec of an already-built network, for map_layers.
FloorSpec spec_of(const Network& net, int floor_index = 0);

struct Evaluation {
    double accuracy = 0.0;
    double loss = 0.0;
};

Evaluation evaluate(const Network& net, const Dataset& data);

enum class PhaseKind { direct, guide };

struct PhaseEvent {
    int step = 0;
    PhaseKind kind = PhaseKind::direct;
    int floor = 0; // floor being trained

    friend bool operator==(const PhaseEvent&, const PhaseEvent&) = default;
};

using FloorLosses = std::vector<std::pair<std::string, double>>;

struct StepResult {
    int step = 0;
    FloorLosses floor_losses; // "F<k>.ce" / "F<k>.mse", loss of the last epoch of each phase
    double train_loss = 0.0;  // bottom floor CE, last direct epoch
};

// The floor stack with one optimizer per floor; optimizer state survives across
// phases and steps.
class SalTrainer {
public:
    SalTrainer(const TrainConfig& config, int in_dim, int classes);

    // for f = F-1 .. 1 { direct(f+1, t); guide(f <- f+1, r) }; direct(1, t).
    StepResult run_step(const Dataset& train);

    FloorStack& stack() noexcept { return stack_; }
    const FloorStack& stack() const noexcept { return stack_; }
    const std::vector<PhaseEvent>& phases() const noexcept { return phases_; }
    int steps_done() const noexcept { return step_; }

    // Invoked around every guidance phase with (upper floor index, hash before, hash after).
    std::function<void(int, std::uint64_t, std::uint64_t)> on_guidance_checked;

private:
    TrainConfig config_;
    FloorStack stack_;
    std::vector<Optimizer> optimizers_; // index f-1
    ShuffleStream shuffle_;
    std::vector<PhaseEvent> phases_;
    int step_ = 0;
};

// Literal phase order for one step of an F-floor stack.
std::vector<PhaseEvent> expected_phase_order(int floors, int step);

// Patience counter on a monitored metric. update() returns true once `patience`
// consecutive units passed without strict improvement.
class EarlyStopping {
public:
    explicit EarlyStopping(int patience, bool higher_is_better = true);

    bool update(int unit, double metric);

    bool last_improved() const noexcept { return last_improved_; }
    int best_unit() const noexcept { return best_unit_; }
    double best_metric() const noexcept { return best_; }
    int stale() const noexcept { return stale_; }

private:
    int patience_;
    bool higher_is_better_;
    bool have_best_ = false;
    bool last_improved_ = false;
    double best_ = 0.0;
    int best_unit_ = 0;
    int stale_ = 0;
};

struct DataSplits {
    Dataset train;
    Dataset val;
    Dataset test;
};

enum class Method { sal, plain };

std::string_view to_string(Method m) noexcept;

struct HistoryRecord {
    int unit_index = 0;
    std::string phase; // "step" or "epoch"
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double test_accuracy = 0.0;
    double wall_clock_seconds = 0.0;
    FloorLosses floor_losses;
};

struct RunHistory {
    Method method = Method::sal;
    std::vector<HistoryRecord> records;
    std::vector<PhaseEvent> phases; // SAL only
    int best_unit = 0;
    double best_val = 0.0;
    double best_test_accuracy = 0.0;
    bool stopped_early = false;
    std::optional<Network> best_model; // bottom floor at best_unit
    nlohmann::json floors;             // architecture summary

    int units() const noexcept { return static_cast<int>(records.size()); }
    double final_wall_clock() const noexcept { return records.empty() ? 0.0 : records.back().wall_clock_seconds; }
};

struct RunOptions {
    bool early_stopping = true;
    // Plain only: stop once accumulated training time reaches this many seconds.
    std::optional<double> wall_budget;
    // Called after each unit with (unit index, bottom network).
    std::function<void(int, const Network&)> observer;
};

RunHistory run_sal(const TrainConfig& config, const DataSplits& data, const RunOptions& options = {});
RunHistory run_plain(const TrainConfig& config, const DataSplits& data, const RunOptions& options = {});

// The plain network: floor 1 of the stack the same config would build.
Network make_plain_network(const TrainConfig& config, int in_dim, int classes);

struct TimeMatched {
    RunHistory sal;
    RunHistory plain;
};

// SAL to early stop, then plain until its training time reaches SAL's total.
TimeMatched run_time_matched(const TrainConfig& config, const DataSplits& data);

} // namespace sal
