#pragma once

// Drivers behind the `sal` subcommands. Every run directory holds config.json
// (effective config), run_meta.json and metrics.csv.

#include "sal/bounds.hpp"
#include "sal/config.hpp"
#include "sal/engine.hpp"
#include "sal/metrics.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace sal {

namespace fs = std::filesystem;

inline constexpr const char* kMetricsHeader =
    "run_id,method,unit_kind,unit_index,wall_clock_s,train_loss,val_acc,test_acc,floor_losses";

// Environment variable naming the default output directory.
inline constexpr const char* kOutputDirEnv = "SAL_OUTPUT_DIR";

// Build identifier compiled into run metadata.
std::string build_id();

// Resolution order: explicit flag, config output.dir, $SAL_OUTPUT_DIR, "runs".
fs::path resolve_output_dir(const RunConfig& cfg, const std::string& flag_value = {});

void write_metrics_header(std::ostream& out);
void write_metrics_rows(std::ostream& out, const std::string& run_id, const RunHistory& history);

std::string run_id_for(Method method, std::uint64_t seed);

struct TrainOutcome {
    RunHistory history;
    fs::path dir;
    nlohmann::json meta;
};

// One training run written to `dir`.
TrainOutcome run_and_record(const RunConfig& cfg, const DataSplits& data, Method method, const fs::path& dir,
                            const std::string& run_id);

TrainOutcome cmd_train(const RunConfig& cfg, Method method, const fs::path& out_dir);

struct SummaryRow {
    std::string method;
    double mean = 0.0;
    double std = 0.0; // sample standard deviation; 0 when k = 1
    int k = 0;
};

SummaryRow summarize(const std::string& method, const std::vector<double>& values);

struct CompareResult {
    std::vector<SummaryRow> rows; // sal, plain
    std::map<std::string, std::vector<double>> per_seed;
};

// Both methods over seeds train.seed .. train.seed + k - 1. Writes
// <out>/<method>-s<seed>/ run directories and <out>/compare.csv.
CompareResult cmd_compare(const RunConfig& cfg, int seeds, const fs::path& out_dir, int jobs = 1);

void write_summary_csv(std::ostream& out, const std::vector<SummaryRow>& rows);

// Two methods, each profiled at floor(T/2) of its own early-stopped duration T on a
// fixed validation batch. `repeats` > 1 averages ratios over that many batches.
struct GradProbeResult {
    GradientRatioProfile sal;
    GradientRatioProfile plain;
    int sal_units = 0;
    int plain_units = 0;
    nlohmann::json to_json() const;
};

// Capture batches: `repeats` seeded draws of `batch_rows` rows from the validation split.
std::vector<std::vector<std::size_t>> capture_batches(const Dataset& val, int batch_rows, int repeats,
                                                      std::uint64_t seed);

// Records a profile at every unit of a run and keeps the one at the midpoint of the
// final duration. Equivalent to the two-pass reference protocol because runs are
// deterministic.
GradientRatioProfile profile_at_midpoint(const TrainConfig& cfg, const DataSplits& data, Method method,
                                         const std::vector<std::vector<std::size_t>>& batches, int* total_units);

GradProbeResult cmd_gradprobe(const RunConfig& cfg, int layers, const fs::path& out_dir, int batch_rows = 256,
                              int repeats = 1);

struct BoundsRequest {
    BoundInputs inputs;
    long trials = 10000;
    std::uint64_t seed = 0;
};

nlohmann::json cmd_bounds(const BoundsRequest& req);

// Writes metrics.csv (both histories) and timematch.csv (method,time_s,test_acc).
TimeMatched cmd_timematch(const RunConfig& cfg, const fs::path& out_dir);

void write_timematch_csv(std::ostream& out, const TimeMatched& runs);

struct SweepGrid {
    std::vector<int> t;
    std::vector<int> r;
    std::vector<int> floors;
};

// Parses "t=2,5" style axis specs; an axis not given keeps the config value.
SweepGrid parse_grid(const std::vector<std::string>& axes, const TrainConfig& base);

struct SweepCell {
    int t = 0;
    int r = 0;
    int floors = 0;
    std::vector<double> accuracies;
    SummaryRow summary;
    bool main = false; // t=5, r=10
};

// SAL over the cartesian grid times `seeds`. Writes per-run directories,
// sweep_runs.csv (one row per run) and sweep.csv (per-cell mean/std).
std::vector<SweepCell> cmd_sweep(const RunConfig& cfg, const SweepGrid& grid, int seeds, const fs::path& out_dir,
                                 int jobs = 1);

} // namespace sal
