#include "sal/experiment.hpp"

#include "sal/error.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#ifndef SAL_BUILD_ID
#define SAL_BUILD_ID "unknown"
#endif

namespace sal {

namespace {

using nlohmann::json;

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_quote(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& doc) {
    write_text(path, doc.dump(2) + "\n");
}

// Runs fn(0..count-1) over at most `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(std::max<std::size_t>(count, 1))));
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

json architecture_of(const Network& net) {
    auto shapes = json::array();
    for (const auto& layer : net.layers()) shapes.push_back({layer.out_dim(), layer.in_dim()});
    return {{"depth", net.depth()},
            {"width", net.width()},
            {"in_dim", net.in_dim()},
            {"out_dim", net.out_dim()},
            {"activation", std::string(to_string(net.activation()))},
            {"layer_shapes", shapes},
            {"params", net.param_count()}};
}

json checkpoint_of(const Network& net) {
    auto layers = json::array();
    for (const auto& layer : net.layers()) {
        std::vector<std::vector<double>> w(static_cast<std::size_t>(layer.weights.rows()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w[static_cast<std::size_t>(r)].push_back(layer.weights(r, c));
        }
        layers.push_back({{"weights", w}, {"bias", std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size())}});
    }
    return {{"architecture", architecture_of(net)}, {"layers", layers}};
}

json data_summary(const DataSplits& data) {
    return {{"train", data.train.size()},
            {"val", data.val.size()},
            {"test", data.test.size()},
            {"classes", data.train.classes},
            {"in_dim", data.train.in_dim()},
            {"provenance", data.train.provenance}};
}

json phase_order_json(const std::vector<PhaseEvent>& phases, int step) {
    auto out = json::array();
    for (const auto& p : phases) {
        if (p.step != step) continue;
        out.push_back(std::string(p.kind == PhaseKind::direct ? "direct" : "guide") + "(F" + std::to_string(p.floor) + ")");
    }
    return out;
}

json run_meta(const RunConfig& cfg, const DataSplits& data, const RunHistory& h, const std::string& run_id) {
    json meta = {{"run_id", run_id},
                 {"method", std::string(to_string(h.method))},
                 {"unit_kind", h.method == Method::sal ? "step" : "epoch"},
                 {"seed", cfg.train.seed},
                 {"build_id", build_id()},
                 {"config", cfg.to_json()},
                 {"floors", h.floors},
                 {"data", data_summary(data)},
                 {"units_trained", h.units()},
                 {"stopped_early", h.stopped_early},
                 {"best", {{"unit", h.best_unit}, {"val_metric", h.best_val}, {"test_accuracy", h.best_test_accuracy}}}};
    if (h.best_model) meta["deployed_architecture"] = architecture_of(*h.best_model);
    if (h.method == Method::sal) meta["phase_order"] = phase_order_json(h.phases, 1);
    return meta;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

RunConfig with_seed(const RunConfig& cfg, std::uint64_t seed) {
    RunConfig out = cfg;
    out.train.seed = seed;
    return out;
}

} // namespace

std::string build_id() {
    return std::string(SAL_VERSION) + "+" + SAL_BUILD_ID;
}

fs::path resolve_output_dir(const RunConfig& cfg, const std::string& flag_value) {
    if (!flag_value.empty()) return flag_value;
    if (!cfg.output.dir.empty()) return cfg.output.dir;
    if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
    return "runs";
}

void write_metrics_header(std::ostream& out) {
    out << kMetricsHeader << '\n';
}

void write_metrics_rows(std::ostream& out, const std::string& run_id, const RunHistory& history) {
    const char* kind = history.method == Method::sal ? "step" : "epoch";
    for (const auto& rec : history.records) {
        json losses = json::object();
        for (const auto& [key, value] : rec.floor_losses) losses[key] = value;
        out << run_id << ',' << to_string(history.method) << ',' << kind << ',' << rec.unit_index << ','
            << format_double(rec.wall_clock_seconds) << ',' << format_double(rec.train_loss) << ','
            << format_double(rec.val_accuracy) << ',' << format_double(rec.test_accuracy) << ','
            << csv_quote(losses.dump()) << '\n';
    }
}

std::string run_id_for(Method method, std::uint64_t seed) {
    return std::string(to_string(method)) + "-s" + std::to_string(seed);
}

TrainOutcome run_and_record(const RunConfig& cfg, const DataSplits& data, Method method, const fs::path& dir,
                            const std::string& run_id) {
    ensure_dir(dir);
    TrainOutcome outcome;
    outcome.dir = dir;
    outcome.history = method == Method::sal ? run_sal(cfg.train, data) : run_plain(cfg.train, data);
    outcome.meta = run_meta(cfg, data, outcome.history, run_id);

    write_json(dir / "config.json", cfg.to_json());
    write_json(dir / "run_meta.json", outcome.meta);
    std::ostringstream csv;
    write_metrics_header(csv);
    write_metrics_rows(csv, run_id, outcome.history);
    write_text(dir / "metrics.csv", csv.str());
    if (cfg.output.save_checkpoint && outcome.history.best_model) {
        write_json(dir / "checkpoint.json", checkpoint_of(*outcome.history.best_model));
    }
    return outcome;
}

TrainOutcome cmd_train(const RunConfig& cfg, Method method, const fs::path& out_dir) {
    const auto data = prepare_data(cfg);
    return run_and_record(cfg, data, method, out_dir, run_id_for(method, cfg.train.seed));
}

SummaryRow summarize(const std::string& method, const std::vector<double>& values) {
    SummaryRow row;
    row.method = method;
    row.k = static_cast<int>(values.size());
    if (values.empty()) return row;
    row.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - row.mean) * (v - row.mean);
        row.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return row;
}

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows) {
    out << "method,mean,std,k\n";
    for (const auto& r : rows) {
        out << r.method << ',' << format_double(r.mean) << ',' << format_double(r.std) << ',' << r.k << '\n';
    }
}

CompareResult cmd_compare(const RunConfig& cfg, int seeds, const fs::path& out_dir, int jobs) {
    if (seeds < 1) throw ConfigError("--seeds", "must be >= 1");
    const auto data = prepare_data(cfg);
    const Method methods[] = {Method::sal, Method::plain};
    std::vector<double> accuracy(2 * static_cast<std::size_t>(seeds));
    parallel_for(accuracy.size(), jobs, [&](std::size_t i) {
        const Method method = methods[i % 2];
        const auto seed = cfg.train.seed + i / 2;
        const auto run_cfg = with_seed(cfg, seed);
        const auto id = run_id_for(method, seed);
        accuracy[i] = run_and_record(run_cfg, data, method, out_dir / id, id).history.best_test_accuracy;
    });
    CompareResult result;
    for (std::size_t i = 0; i < accuracy.size(); ++i) {
        result.per_seed[std::string(to_string(methods[i % 2]))].push_back(accuracy[i]);
    }
    result.rows = {summarize("sal", result.per_seed["sal"]), summarize("plain", result.per_seed["plain"])};
    std::ostringstream csv;
    write_summary_csv(csv, result.rows);
    write_text(out_dir / "compare.csv", csv.str());
    return result;
}

std::vector<std::vector<std::size_t>> capture_batches(const Dataset& val, int batch_rows, int repeats,
                                                      std::uint64_t seed) {
    if (batch_rows < 1 || repeats < 1) throw ConfigError("capture batch size and repeat count must be >= 1");
    std::mt19937_64 rng(seed ^ 0xC0FFEEULL);
    std::vector<std::vector<std::size_t>> out;
    for (int rep = 0; rep < repeats; ++rep) {
        std::vector<std::size_t> idx(val.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(std::min(idx.size(), static_cast<std::size_t>(batch_rows)));
        std::sort(idx.begin(), idx.end());
        out.push_back(std::move(idx));
    }
    return out;
}

GradientRatioProfile profile_at_midpoint(const TrainConfig& cfg, const DataSplits& data, Method method,
                                         const std::vector<std::vector<std::size_t>>& batches, int* total_units) {
    std::vector<Matrix> inputs;
    std::vector<std::vector<int>> labels;
    for (const auto& idx : batches) {
        inputs.push_back(gather_rows(data.val.inputs, idx));
        labels.push_back(gather(data.val.labels, idx));
    }
    std::vector<GradientRatioProfile> per_unit;
    RunOptions options;
    options.observer = [&](int, const Network& net) {
        GradientRatioProfile mean;
        for (std::size_t b = 0; b < inputs.size(); ++b) {
            const auto p = gradient_ratio_profile(net, inputs[b], labels[b]);
            if (mean.layers.empty()) {
                mean = p;
            } else {
                for (std::size_t l = 0; l < p.layers.size(); ++l) mean.layers[l].ratio += p.layers[l].ratio;
            }
        }
        for (auto& l : mean.layers) {
            l.ratio /= static_cast<double>(inputs.size());
            l.log10_ratio = std::log10(l.ratio);
        }
        per_unit.push_back(std::move(mean));
    };
    const auto history = method == Method::sal ? run_sal(cfg, data, options) : run_plain(cfg, data, options);
    const int units = history.units();
    if (total_units) *total_units = units;
    const int capture = midpoint_capture(units);
    GradientRatioProfile profile = per_unit.at(static_cast<std::size_t>(capture - 1));
    profile.capture_unit = capture;
    profile.method = std::string(to_string(method));
    return profile;
}

json GradProbeResult::to_json() const {
    return {{"sal", sal.to_json()},
            {"plain", plain.to_json()},
            {"meta",
             {{"sal_total_steps", sal_units},
              {"plain_total_epochs", plain_units},
              {"sal_capture_unit", sal.capture_unit},
              {"plain_capture_unit", plain.capture_unit}}}};
}

GradProbeResult cmd_gradprobe(const RunConfig& cfg, int layers, const fs::path& out_dir, int batch_rows, int repeats) {
    RunConfig probe = cfg;
    if (layers > 0) probe.train.base_depth = layers;
    probe.train.validate();
    const auto data = prepare_data(probe);
    const auto batches = capture_batches(data.val, batch_rows, repeats, probe.data.seed);
    GradProbeResult result;
    result.sal = profile_at_midpoint(probe.train, data, Method::sal, batches, &result.sal_units);
    result.plain = profile_at_midpoint(probe.train, data, Method::plain, batches, &result.plain_units);
    ensure_dir(out_dir);
    json doc = result.to_json();
    doc["meta"]["layers"] = probe.train.base_depth;
    doc["meta"]["capture_batch_rows"] = batches.front().size();
    doc["meta"]["repeats"] = repeats;
    doc["meta"]["build_id"] = build_id();
    write_json(out_dir / "gradprobe.json", doc);
    write_json(out_dir / "config.json", probe.to_json());
    return result;
}

json cmd_bounds(const BoundsRequest& req) {
    const auto& in = req.inputs;
    in.validate();
    const auto onehot = validate_grad_norm(in.n, req.trials, req.seed, true);
    const auto general = validate_grad_norm(in.n, req.trials, req.seed + 1, false);
    const long m_min = hoeffding_sample_size(in);
    auto report_of = [](const GradNormReport& r) {
        return json{{"trials", r.trials}, {"max_norm", r.max_norm}, {"bound", r.bound}, {"violations", r.violations}};
    };
    const double confidence = 3.0 * std::sqrt(std::log(2.0 / in.delta) / (2.0 * static_cast<double>(in.m)));
    return {{"inputs",
             {{"n", in.n},
              {"delta", in.delta},
              {"eps", in.eps},
              {"mu", in.mu},
              {"m", in.m},
              {"C", in.lipschitz_constant()},
              {"one_hot", in.one_hot},
              {"empirical_loss", in.empirical_loss},
              {"rademacher", in.rademacher}}},
            {"lipschitz", {{"general", lipschitz_bound_general(in.n)}, {"one_hot", lipschitz_bound_onehot()}}},
            {"hoeffding",
             {{"m_min", m_min},
              {"exact", hoeffding_sample_size_exact(in)},
              {"tail_at_m_min", hoeffding_tail(in, m_min)}}},
            {"generalization_bound",
             {{"value", generalization_bound(in)},
              {"empirical_loss", in.empirical_loss},
              {"rademacher_term", 2.0 * in.rademacher},
              {"confidence_term", confidence},
              {"alignment_term", in.lipschitz_constant() * in.eps}}},
            {"grad_norm_validation", {{"one_hot", report_of(onehot)}, {"general", report_of(general)}}}};
}

void write_timematch_csv(std::ostream& out, const TimeMatched& runs) {
    out << "method,time_s,test_acc\n";
    for (const RunHistory* h : {&runs.sal, &runs.plain}) {
        for (const auto& rec : h->records) {
            out << to_string(h->method) << ',' << format_double(rec.wall_clock_seconds) << ','
                << format_double(rec.test_accuracy) << '\n';
        }
    }
}

TimeMatched cmd_timematch(const RunConfig& cfg, const fs::path& out_dir) {
    const auto data = prepare_data(cfg);
    auto runs = run_time_matched(cfg.train, data);
    ensure_dir(out_dir);
    RunConfig echoed = cfg;
    echoed.output.timing = Timing::wall;
    write_json(out_dir / "config.json", echoed.to_json());
    const auto sal_id = run_id_for(Method::sal, cfg.train.seed);
    const auto plain_id = run_id_for(Method::plain, cfg.train.seed);
    write_json(out_dir / "run_meta.json",
               {{"mode", "timematch"},
                {"build_id", build_id()},
                {"sal", run_meta(echoed, data, runs.sal, sal_id)},
                {"plain", run_meta(echoed, data, runs.plain, plain_id)},
                {"sal_total_s", runs.sal.final_wall_clock()},
                {"plain_total_s", runs.plain.final_wall_clock()}});
    std::ostringstream metrics;
    write_metrics_header(metrics);
    write_metrics_rows(metrics, sal_id, runs.sal);
    write_metrics_rows(metrics, plain_id, runs.plain);
    write_text(out_dir / "metrics.csv", metrics.str());
    std::ostringstream curves;
    write_timematch_csv(curves, runs);
    write_text(out_dir / "timematch.csv", curves.str());
    return runs;
}

SweepGrid parse_grid(const std::vector<std::string>& axes, const TrainConfig& base) {
    SweepGrid grid{{base.t}, {base.r}, {base.floors}};
    for (const auto& axis : axes) {
        const auto eq = axis.find('=');
        if (eq == std::string::npos) throw ConfigError("--grid", "axis '" + axis + "' is not name=v1,v2,...");
        const std::string name = axis.substr(0, eq);
        std::vector<int> values;
        std::stringstream list(axis.substr(eq + 1));
        std::string item;
        while (std::getline(list, item, ',')) {
            int v = 0;
            const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
            if (res.ec != std::errc{} || res.ptr != item.data() + item.size() || v < 1) {
                throw ConfigError("--grid", "bad value '" + item + "' for axis " + name);
            }
            values.push_back(v);
        }
        if (values.empty()) throw ConfigError("--grid", "axis " + name + " has no values");
        if (name == "t") {
            grid.t = values;
        } else if (name == "r") {
            grid.r = values;
        } else if (name == "F") {
            grid.floors = values;
        } else {
            throw ConfigError("--grid", "unknown axis '" + name + "' (expected t, r or F)");
        }
    }
    return grid;
}

std::vector<SweepCell> cmd_sweep(const RunConfig& cfg, const SweepGrid& grid, int seeds, const fs::path& out_dir,
                                 int jobs) {
    if (seeds < 1) throw ConfigError("--seeds", "must be >= 1");
    std::vector<SweepCell> cells;
    for (int t : grid.t) {
        for (int r : grid.r) {
            for (int f : grid.floors) {
                SweepCell cell;
                cell.t = t;
                cell.r = r;
                cell.floors = f;
                cell.main = t == 5 && r == 10;
                TrainConfig probe = cfg.train;
                probe.t = t;
                probe.r = r;
                probe.floors = f;
                probe.validate();
                cells.push_back(cell);
            }
        }
    }
    const auto data = prepare_data(cfg);
    struct Job {
        std::size_t cell;
        std::uint64_t seed;
        double accuracy = 0.0;
        int best_unit = 0;
    };
    std::vector<Job> work;
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (int s = 0; s < seeds; ++s) work.push_back({c, cfg.train.seed + static_cast<std::uint64_t>(s)});
    }
    auto cell_dir = [&](const SweepCell& c) {
        return out_dir / ("t" + std::to_string(c.t) + "_r" + std::to_string(c.r) + "_F" + std::to_string(c.floors));
    };
    parallel_for(work.size(), jobs, [&](std::size_t i) {
        auto& job = work[i];
        const auto& cell = cells[job.cell];
        RunConfig run_cfg = with_seed(cfg, job.seed);
        run_cfg.train.t = cell.t;
        run_cfg.train.r = cell.r;
        run_cfg.train.floors = cell.floors;
        const auto id = run_id_for(Method::sal, job.seed);
        const auto outcome = run_and_record(run_cfg, data, Method::sal, cell_dir(cell) / id, id);
        job.accuracy = outcome.history.best_test_accuracy;
        job.best_unit = outcome.history.best_unit;
    });

    std::ostringstream runs;
    runs << "t,r,F,seed,run_id,best_test_acc,best_unit\n";
    for (const auto& job : work) {
        auto& cell = cells[job.cell];
        cell.accuracies.push_back(job.accuracy);
        runs << cell.t << ',' << cell.r << ',' << cell.floors << ',' << job.seed << ','
             << run_id_for(Method::sal, job.seed) << ',' << format_double(job.accuracy) << ',' << job.best_unit << '\n';
    }
    std::ostringstream summary;
    summary << "t,r,F,method,mean,std,k,main\n";
    for (auto& cell : cells) {
        cell.summary = summarize("sal", cell.accuracies);
        summary << cell.t << ',' << cell.r << ',' << cell.floors << ",sal," << format_double(cell.summary.mean) << ','
                << format_double(cell.summary.std) << ',' << cell.summary.k << ',' << (cell.main ? 1 : 0) << '\n';
    }
    ensure_dir(out_dir);
    write_text(out_dir / "sweep_runs.csv", runs.str());
    write_text(out_dir / "sweep.csv", summary.str());
    write_json(out_dir / "config.json", cfg.to_json());
    return cells;
}

} // namespace sal
