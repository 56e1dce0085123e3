#include "sal/engine.hpp"

#include "sal/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace sal {

namespace {

using Clock = std::chrono::steady_clock;

// Accumulates time spent inside training phases only.
class PhaseTimer {
public:
    explicit PhaseTimer(Timing timing) : timing_(timing) {}

    template <typename F>
    auto time(F&& body) {
        if (timing_ == Timing::none) return body();
        const auto start = Clock::now();
        struct Guard {
            PhaseTimer& self;
            Clock::time_point start;
            ~Guard() { self.total_ += std::chrono::duration<double>(Clock::now() - start).count(); }
        } guard{*this, start};
        return body();
    }

    double total() const noexcept { return total_; }

private:
    Timing timing_;
    double total_ = 0.0;
};

struct Batch {
    Matrix inputs;
    std::vector<int> labels;
};

std::vector<Batch> epoch_batches(const Dataset& data, std::size_t batch_size, ShuffleStream& shuffle) {
    std::vector<Batch> out;
    for (const auto& idx : batches(data.size(), batch_size, shuffle.next())) {
        out.push_back({gather_rows(data.inputs, idx), gather(data.labels, idx)});
    }
    return out;
}

void require_data(const Dataset& data, const char* who) {
    if (data.size() == 0) throw ShapeError(std::string(who) + ": empty dataset");
}

std::string floor_key(int floor, const char* suffix) {
    return "F" + std::to_string(floor) + "." + suffix;
}

bool monitor_higher_is_better(const std::string& monitor) {
    if (monitor == "val_accuracy") return true;
    if (monitor == "val_loss") return false;
    throw ConfigError("train.monitor", "unknown monitor '" + monitor + "'");
}

double monitored(const std::string& monitor, const Evaluation& val) {
    return monitor == "val_loss" ? val.loss : val.accuracy;
}

} // namespace

void TrainConfig::validate() const {
    if (t < 1) throw ConfigError("train.t", "must be >= 1");
    if (r < 1) throw ConfigError("train.r", "must be >= 1");
    if (max_steps < 1) throw ConfigError("train.S_max", "must be >= 1");
    if (patience < 1) throw ConfigError("train.patience", "must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr", "must be finite and non-negative");
    if (max_epochs < 0) throw ConfigError("train.max_epochs", "must be >= 0");
    if (base_depth < 1) throw ConfigError("model.base_depth", "must be >= 1");
    if (base_width < 1) throw ConfigError("model.base_width", "must be >= 1");
    monitor_higher_is_better(monitor);
    floor_specs(base_depth, base_width, floors);
}

OptimizerConfig TrainConfig::optimizer_config() const {
    OptimizerConfig cfg;
    cfg.kind = optimizer;
    cfg.lr = lr;
    return cfg;
}

int TrainConfig::plain_epoch_cap() const {
    if (max_epochs > 0) return max_epochs;
    const long cap = 10L * max_steps * (static_cast<long>(t) * floors + static_cast<long>(r) * (floors - 1));
    return static_cast<int>(std::min<long>(cap, std::numeric_limits<int>::max()));
}

std::vector<double> train_direct(Network& net, Optimizer& opt, const Dataset& data, int epochs,
                                 std::size_t batch_size, ShuffleStream& shuffle) {
    require_data(data, "train_direct");
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(std::max(epochs, 0)));
    for (int e = 0; e < epochs; ++e) {
        double total = 0.0;
        for (const auto& batch : epoch_batches(data, batch_size, shuffle)) {
            const auto trace = forward(net, batch.inputs);
            const auto ce = softmax_ce(trace.logits, batch.labels);
            const auto grads = backward(net, trace, OutputGradients{ce.grad, {}});
            opt.step(net, grads);
            total += ce.loss * static_cast<double>(batch.labels.size());
        }
        losses.push_back(total / static_cast<double>(data.size()));
    }
    return losses;
}

std::vector<double> train_guided(Network& lower, Optimizer& opt, const Network& upper, const GuidanceMapping& mapping,
                                 const Dataset& data, int epochs, std::size_t batch_size, ShuffleStream& shuffle) {
    require_data(data, "train_guided");
    if (upper.in_dim() != lower.in_dim() || upper.out_dim() != lower.out_dim()) {
        throw ShapeError("train_guided: floors disagree on input or output dimension");
    }
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(std::max(epochs, 0)));
    for (int e = 0; e < epochs; ++e) {
        double total = 0.0;
        for (const auto& batch : epoch_batches(data, batch_size, shuffle)) {
            const auto targets = extract_targets(forward(upper, batch.inputs), mapping);
            const auto trace = forward(lower, batch.inputs);
            const auto loss = guidance_loss(trace, targets, mapping);
            opt.step(lower, backward(lower, trace, loss.grads));
            total += loss.total * static_cast<double>(batch.labels.size());
        }
        losses.push_back(total / static_cast<double>(data.size()));
    }
    return losses;
}

FloorSpec spec_of(const Network& net, int floor_index) {
    return {floor_index, net.depth(), net.width()};
}

Evaluation evaluate(const Network& net, const Dataset& data) {
    require_data(data, "evaluate");
    constexpr Eigen::Index chunk = 2048;
    const auto m = static_cast<Eigen::Index>(data.size());
    double loss = 0.0;
    std::size_t correct = 0;
    for (Eigen::Index start = 0; start < m; start += chunk) {
        const auto rows = std::min(chunk, m - start);
        const Matrix logits = predict_logits(net, data.inputs.middleRows(start, rows));
        const std::span<const int> labels(data.labels.data() + start, static_cast<std::size_t>(rows));
        loss += softmax_ce(logits, labels).loss * static_cast<double>(rows);
        for (Eigen::Index i = 0; i < rows; ++i) {
            Eigen::Index arg = 0;
            logits.row(i).maxCoeff(&arg);
            if (arg == labels[static_cast<std::size_t>(i)]) ++correct;
        }
    }
    return {static_cast<double>(correct) / static_cast<double>(m), loss / static_cast<double>(m)};
}

SalTrainer::SalTrainer(const TrainConfig& config, int in_dim, int classes)
    : config_(config),
      stack_(build_floor_stack(config.base_depth, config.base_width, config.floors, in_dim, classes,
                               config.activation, config.seed)),
      shuffle_(config.seed) {
    config_.validate();
    optimizers_.reserve(static_cast<std::size_t>(stack_.size()));
    for (int f = 1; f <= stack_.size(); ++f) optimizers_.emplace_back(config_.optimizer_config(), stack_.floor(f).net);
}

StepResult SalTrainer::run_step(const Dataset& train) {
    ++step_;
    StepResult result;
    result.step = step_;
    const auto batch = static_cast<std::size_t>(config_.batch_size);
    auto direct = [&](int f) {
        phases_.push_back({step_, PhaseKind::direct, f});
        const auto losses =
            train_direct(stack_.floor(f).net, optimizers_[static_cast<std::size_t>(f - 1)], train, config_.t, batch, shuffle_);
        result.floor_losses.emplace_back(floor_key(f, "ce"), losses.back());
        return losses.back();
    };
    for (int f = stack_.size() - 1; f >= 1; --f) {
        direct(f + 1);
        phases_.push_back({step_, PhaseKind::guide, f});
        const Floor& upper = stack_.floor(f + 1);
        Floor& lower = stack_.floor(f);
        const auto mapping = map_layers(upper.spec, lower.spec);
        const auto before = upper.net.param_hash();
        const auto losses = train_guided(lower.net, optimizers_[static_cast<std::size_t>(f - 1)], upper.net, mapping,
                                         train, config_.r, batch, shuffle_);
        if (on_guidance_checked) on_guidance_checked(f + 1, before, upper.net.param_hash());
        result.floor_losses.emplace_back(floor_key(f, "mse"), losses.back());
    }
    result.train_loss = direct(1);
    return result;
}

std::vector<PhaseEvent> expected_phase_order(int floors, int step) {
    std::vector<PhaseEvent> out;
    for (int f = floors - 1; f >= 1; --f) {
        out.push_back({step, PhaseKind::direct, f + 1});
        out.push_back({step, PhaseKind::guide, f});
    }
    out.push_back({step, PhaseKind::direct, 1});
    return out;
}

EarlyStopping::EarlyStopping(int patience, bool higher_is_better)
    : patience_(patience), higher_is_better_(higher_is_better) {
    if (patience < 1) throw ConfigError("train.patience", "must be >= 1");
}

bool EarlyStopping::update(int unit, double metric) {
    const bool better = !have_best_ || (higher_is_better_ ? metric > best_ : metric < best_);
    last_improved_ = better;
    if (better) {
        have_best_ = true;
        best_ = metric;
        best_unit_ = unit;
        stale_ = 0;
        return false;
    }
    ++stale_;
    return stale_ >= patience_;
}

std::string_view to_string(Method m) noexcept {
    return m == Method::sal ? "sal" : "plain";
}

RunHistory run_sal(const TrainConfig& config, const DataSplits& data, const RunOptions& options) {
    config.validate();
    data.train.validate();
    data.val.validate();
    data.test.validate();
    SalTrainer trainer(config, data.train.in_dim(), data.train.classes);
    EarlyStopping stopper(config.patience, monitor_higher_is_better(config.monitor));
    PhaseTimer timer(config.timing);

    RunHistory history;
    history.method = Method::sal;
    history.floors = trainer.stack().summary();
    for (int step = 1; step <= config.max_steps; ++step) {
        const auto result = timer.time([&] { return trainer.run_step(data.train); });
        const Network& bottom = trainer.stack().bottom().net;
        const auto val = evaluate(bottom, data.val);
        const auto test = evaluate(bottom, data.test);
        history.records.push_back({step, "step", result.train_loss, val.loss, val.accuracy, test.accuracy,
                                   timer.total(), result.floor_losses});
        if (options.observer) options.observer(step, bottom);
        const bool stop = stopper.update(step, monitored(config.monitor, val));
        if (stopper.last_improved()) {
            history.best_unit = step;
            history.best_val = stopper.best_metric();
            history.best_test_accuracy = test.accuracy;
            history.best_model = bottom;
        }
        if (options.early_stopping && stop) {
            history.stopped_early = true;
            break;
        }
    }
    history.phases = trainer.phases();
    return history;
}

Network make_plain_network(const TrainConfig& config, int in_dim, int classes) {
    auto stack = build_floor_stack(config.base_depth, config.base_width, config.floors, in_dim, classes,
                                   config.activation, config.seed);
    return stack.bottom().net;
}

RunHistory run_plain(const TrainConfig& config, const DataSplits& data, const RunOptions& options) {
    config.validate();
    data.train.validate();
    data.val.validate();
    data.test.validate();
    Network net = make_plain_network(config, data.train.in_dim(), data.train.classes);
    Optimizer opt(config.optimizer_config(), net);
    ShuffleStream shuffle(config.seed);
    EarlyStopping stopper(config.patience, monitor_higher_is_better(config.monitor));
    PhaseTimer timer(options.wall_budget ? Timing::wall : config.timing);

    RunHistory history;
    history.method = Method::plain;
    history.floors = nlohmann::json::array(
        {{{"floor", 1}, {"depth", net.depth()}, {"width", net.width()}, {"params", net.param_count()}}});
    const int cap = options.wall_budget ? std::numeric_limits<int>::max() : config.plain_epoch_cap();
    const auto batch = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 1; epoch <= cap; ++epoch) {
        const auto losses = timer.time([&] { return train_direct(net, opt, data.train, 1, batch, shuffle); });
        const auto val = evaluate(net, data.val);
        const auto test = evaluate(net, data.test);
        history.records.push_back({epoch, "epoch", losses.back(), val.loss, val.accuracy, test.accuracy,
                                   timer.total(), {{"F1.ce", losses.back()}}});
        if (options.observer) options.observer(epoch, net);
        const bool stop = stopper.update(epoch, monitored(config.monitor, val));
        if (stopper.last_improved()) {
            history.best_unit = epoch;
            history.best_val = stopper.best_metric();
            history.best_test_accuracy = test.accuracy;
            history.best_model = net;
        }
        if (options.wall_budget && timer.total() >= *options.wall_budget) break;
        if (options.early_stopping && !options.wall_budget && stop) {
            history.stopped_early = true;
            break;
        }
    }
    return history;
}

TimeMatched run_time_matched(const TrainConfig& config, const DataSplits& data) {
    TrainConfig timed = config;
    timed.timing = Timing::wall;
    TimeMatched out;
    out.sal = run_sal(timed, data);
    RunOptions plain_options;
    plain_options.early_stopping = false;
    plain_options.wall_budget = out.sal.final_wall_clock();
    out.plain = run_plain(timed, data, plain_options);
    return out;
}

} // namespace sal
