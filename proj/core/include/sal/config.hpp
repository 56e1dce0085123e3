#pragma once

// Run configuration files: a JSON document with data/model/train/output sections.
// Parsing is strict; unknown keys and ill-typed values raise ConfigError naming the
// dotted field path.

#include "sal/data.hpp"
#include "sal/engine.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace sal {

struct IdxPaths {
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
};

struct BlobsConfig {
    int samples_per_class = 200;
    int dim = 2;
    int classes = 2;
    double separation = 6.0;
};

struct DataConfig {
    std::string source = "blobs"; // "idx" or "blobs"
    IdxPaths paths;
    double subset_ratio = 1.0;      // applied to the training pool
    double test_subset_ratio = 1.0; // applied to the test set (idx)
    bool stratified = true;
    double val_fraction = 0.1; // idx: held out of the training pool
    SplitSpec split;           // blobs: three-way split of the generated set
    BlobsConfig blobs;
    std::uint64_t seed = 0;
};

struct OutputConfig {
    std::string dir;
    std::vector<std::string> formats{"csv", "json"};
    Timing timing = Timing::none;
    bool save_checkpoint = false;
};

struct RunConfig {
    DataConfig data;
    TrainConfig train;
    OutputConfig output;
    std::filesystem::path base_dir; // relative data paths resolve against this

    nlohmann::json to_json() const;
};

// Defaults filled in; throws ConfigError(path, ...) on any schema violation.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});

// Reads a JSON file, applies `overrides` ("train.t=5", value parsed as JSON when it
// parses, else taken as a string), then parses.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

void apply_override(nlohmann::json& doc, const std::string& assignment);

// Loads and splits the data described by `cfg`: idx uses the test files as the test
// set and holds out a stratified validation fraction of the (subsampled) training
// pool; blobs are generated and split three ways.
DataSplits prepare_data(const RunConfig& cfg);

} // namespace sal
