#pragma once

#include "sal/nn.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace sal {

using IndexList = std::vector<std::size_t>;

struct Dataset {
    Matrix inputs;           // m x in_dim, finite
    std::vector<int> labels; // m entries in [0, classes)
    int classes = 0;
    std::string provenance;

    std::size_t size() const noexcept { return labels.size(); }
    int in_dim() const noexcept { return static_cast<int>(inputs.cols()); }

    // Throws ShapeError when m < 1, a label falls outside [0, classes) or an input is non-finite.
    void validate() const;

    Dataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> class_counts() const;
};

// IDX image/label pair: magic 0x00000803 with dims [count, rows, cols] and
// magic 0x00000801 with dims [count], big-endian, u8 payload. Pixels are
// divided by 255. `classes` of 0 means max(label) + 1.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int classes = 0);

// Inverse of load_idx for [0,1] inputs; pixels are rounded to the nearest u8.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& ds,
               int rows, int cols);

std::vector<std::uint8_t> encode_idx_images(const Dataset& ds, int rows, int cols);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds);
Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels, int classes = 0);

struct SubsampleResult {
    IndexList indices;              // ascending
    std::vector<int> forced_classes; // classes whose quota rounded to 0 and were kept with one sample
};

// Per-class sampling without replacement; quotas by largest-remainder apportionment of
// round(m * ratio). With stratified = false the draw is uniform over all samples.
SubsampleResult subsample_indices(std::span<const int> labels, int classes, double ratio, std::uint64_t seed,
                                  bool stratified = true);
Dataset subsample(const Dataset& ds, double ratio, std::uint64_t seed, bool stratified = true);

struct SplitSpec {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
    bool stratified = true;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Splits {
    Dataset train;
    Dataset val;
    Dataset test;
};

// Disjoint and exhaustive partition by fractions (sum 1). When stratified every
// class is spread over the parts in proportion, each part's total fixed by
// largest-remainder rounding. Throws ConfigError when a class has fewer samples
// than there are parts.
std::vector<IndexList> split_indices(std::span<const int> labels, int classes, std::span<const double> fractions,
                                     bool stratified, std::uint64_t seed);

Splits split(const Dataset& ds, const SplitSpec& spec);

// Unit-covariance Gaussian clusters. Centres sit pairwise `separation` apart
// (simplex on random orthonormal directions when classes <= dim).
Dataset synth_blobs(int samples_per_class, int dim, int classes, double separation, std::uint64_t seed);

// One epoch of mini-batches over `count` samples, shuffled by `shuffle_seed`.
// The last batch may be short.
std::vector<IndexList> batches(std::size_t count, std::size_t batch_size, std::uint64_t shuffle_seed);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
std::vector<int> gather(std::span<const int> values, std::span<const std::size_t> rows);

} // namespace sal
