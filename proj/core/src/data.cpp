#include "sal/data.hpp"

#include "sal/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

namespace sal {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

class ByteReader {
public:
    ByteReader(std::span<const std::uint8_t> bytes, std::string name) : bytes_(bytes), name_(std::move(name)) {}

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
        pos_ += 4;
        return v;
    }

    std::span<const std::uint8_t> take(std::size_t n, const char* field) {
        need(n, field);
        auto out = bytes_.subspan(pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t offset() const noexcept { return pos_; }

    [[noreturn]] void fail(const std::string& what, std::size_t at) const {
        std::ostringstream msg;
        msg << name_ << ": " << what << " at offset " << at;
        throw ParseError(msg.str());
    }

private:
    void need(std::size_t n, const char* field) const {
        if (bytes_.size() - pos_ < n) {
            fail(std::string("truncated file while reading ") + field + " (need " + std::to_string(n) +
                     " bytes, have " + std::to_string(bytes_.size() - pos_) + ")",
                 pos_);
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
    std::string name_;
};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xffU));
}

// Integer apportionment of `total` proportional to `quotas` (which sum to total).
std::vector<std::size_t> largest_remainder(const std::vector<double>& quotas, std::size_t total) {
    std::vector<std::size_t> counts(quotas.size());
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < quotas.size(); ++i) {
        const double fl = std::floor(quotas[i] + 1e-9);
        counts[i] = static_cast<std::size_t>(std::max(0.0, fl));
        assigned += counts[i];
        remainders.emplace_back(quotas[i] - fl, i);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t k = 0; assigned < total && k < remainders.size(); ++k) {
        ++counts[remainders[k].second];
        ++assigned;
    }
    while (assigned > total) {
        // Only reachable through the epsilon above; take back from the smallest remainder.
        for (auto it = remainders.rbegin(); it != remainders.rend() && assigned > total; ++it) {
            if (counts[it->second] > 0) {
                --counts[it->second];
                --assigned;
            }
        }
    }
    return counts;
}

std::vector<IndexList> indices_by_class(std::span<const int> labels, int classes) {
    std::vector<IndexList> by_class(static_cast<std::size_t>(classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= classes) throw ShapeError("label " + std::to_string(y) + " outside [0, classes)");
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    return by_class;
}

} // namespace

void Dataset::validate() const {
    if (labels.empty()) throw ShapeError("dataset must hold at least one sample");
    if (inputs.rows() != static_cast<Eigen::Index>(labels.size())) {
        throw ShapeError("dataset inputs and labels disagree on sample count");
    }
    if (classes < 1) throw ShapeError("dataset must have at least one class");
    for (int y : labels) {
        if (y < 0 || y >= classes) throw ShapeError("dataset label " + std::to_string(y) + " outside [0, classes)");
    }
    if (!inputs.allFinite()) throw NumericError("dataset inputs contain non-finite values");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.inputs = gather_rows(inputs, indices);
    out.labels = gather(labels, indices);
    out.classes = classes;
    out.provenance = provenance;
    return out;
}

std::vector<std::size_t> Dataset::class_counts() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(classes, 0)), 0);
    for (int y : labels) {
        if (y >= 0 && y < classes) ++counts[static_cast<std::size_t>(y)];
    }
    return counts;
}

Dataset decode_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels, int classes) {
    ByteReader img(images, "images");
    if (const auto magic = img.u32("magic"); magic != kImageMagic) {
        img.fail("bad image magic 0x" + [&] {
            std::ostringstream s;
            s << std::hex << magic;
            return s.str();
        }(), 0);
    }
    const std::uint32_t count = img.u32("image count");
    const std::uint32_t rows = img.u32("row count");
    const std::uint32_t cols = img.u32("column count");
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;

    ByteReader lab(labels, "labels");
    if (const auto magic = lab.u32("magic"); magic != kLabelMagic) {
        lab.fail("bad label magic 0x" + [&] {
            std::ostringstream s;
            s << std::hex << magic;
            return s.str();
        }(), 0);
    }
    const std::uint32_t label_count = lab.u32("label count");
    if (label_count != count) {
        lab.fail("label count " + std::to_string(label_count) + " does not match image count " +
                     std::to_string(count),
                 4);
    }

    const auto pixel_bytes = img.take(static_cast<std::size_t>(count) * pixels, "pixel data");
    const auto label_bytes = lab.take(count, "label data");

    Dataset ds;
    ds.inputs.resize(count, static_cast<Eigen::Index>(pixels));
    for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) {
            ds.inputs(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
                static_cast<double>(pixel_bytes[i * pixels + p]) / 255.0;
        }
    }
    ds.labels.assign(label_bytes.begin(), label_bytes.end());
    const int max_label = ds.labels.empty() ? -1 : *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.classes = classes > 0 ? classes : max_label + 1;
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (ds.labels[i] >= ds.classes) {
            lab.fail("label " + std::to_string(ds.labels[i]) + " outside [0, " + std::to_string(ds.classes) + ")",
                     8 + i);
        }
    }
    ds.provenance = "idx";
    ds.validate();
    return ds;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, int classes) {
    const auto img = read_file(images);
    const auto lab = read_file(labels);
    try {
        Dataset ds = decode_idx(img, lab, classes);
        ds.provenance = "idx:" + images.filename().string();
        return ds;
    } catch (const ParseError& e) {
        throw ParseError(images.string() + " / " + labels.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& ds, int rows, int cols) {
    if (static_cast<long>(rows) * cols != ds.inputs.cols()) throw ShapeError("encode_idx_images: rows*cols != in_dim");
    std::vector<std::uint8_t> out;
    out.reserve(16 + static_cast<std::size_t>(ds.inputs.size()));
    put_u32(out, kImageMagic);
    put_u32(out, static_cast<std::uint32_t>(ds.inputs.rows()));
    put_u32(out, static_cast<std::uint32_t>(rows));
    put_u32(out, static_cast<std::uint32_t>(cols));
    for (Eigen::Index i = 0; i < ds.inputs.rows(); ++i) {
        for (Eigen::Index p = 0; p < ds.inputs.cols(); ++p) {
            const double v = std::clamp(ds.inputs(i, p), 0.0, 1.0);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
        }
    }
    return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds) {
    std::vector<std::uint8_t> out;
    out.reserve(8 + ds.labels.size());
    put_u32(out, kLabelMagic);
    put_u32(out, static_cast<std::uint32_t>(ds.labels.size()));
    for (int y : ds.labels) {
        if (y < 0 || y > 255) throw ShapeError("encode_idx_labels: label does not fit in u8");
        out.push_back(static_cast<std::uint8_t>(y));
    }
    return out;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& ds,
               int rows, int cols) {
    write_file(images, encode_idx_images(ds, rows, cols));
    write_file(labels, encode_idx_labels(ds));
}

SubsampleResult subsample_indices(std::span<const int> labels, int classes, double ratio, std::uint64_t seed,
                                  bool stratified) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("subsample ratio must lie in (0, 1]");
    const std::size_t m = labels.size();
    SubsampleResult result;
    if (ratio == 1.0) {
        result.indices.resize(m);
        std::iota(result.indices.begin(), result.indices.end(), std::size_t{0});
        return result;
    }
    std::mt19937_64 rng(seed);
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(m) * ratio));

    if (!stratified) {
        IndexList all(m);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::shuffle(all.begin(), all.end(), rng);
        all.resize(std::max<std::size_t>(target, 1));
        std::sort(all.begin(), all.end());
        result.indices = std::move(all);
        return result;
    }

    auto by_class = indices_by_class(labels, classes);
    std::vector<double> quotas;
    quotas.reserve(by_class.size());
    for (const auto& members : by_class) quotas.push_back(static_cast<double>(members.size()) * ratio);
    auto counts = largest_remainder(quotas, target);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        auto& members = by_class[c];
        if (!members.empty() && counts[c] == 0) {
            counts[c] = 1;
            result.forced_classes.push_back(static_cast<int>(c));
        }
        std::shuffle(members.begin(), members.end(), rng);
        result.indices.insert(result.indices.end(), members.begin(),
                              members.begin() + static_cast<std::ptrdiff_t>(std::min(counts[c], members.size())));
    }
    std::sort(result.indices.begin(), result.indices.end());
    return result;
}

Dataset subsample(const Dataset& ds, double ratio, std::uint64_t seed, bool stratified) {
    const auto picked = subsample_indices(ds.labels, ds.classes, ratio, seed, stratified);
    Dataset out = ds.subset(picked.indices);
    out.validate();
    return out;
}

void SplitSpec::validate() const {
    if (!(train > 0.0 && val > 0.0 && test > 0.0)) throw ConfigError("data.split", "fractions must be positive");
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("data.split", "fractions must sum to 1");
}

std::vector<IndexList> split_indices(std::span<const int> labels, int classes, std::span<const double> fractions,
                                     bool stratified, std::uint64_t seed) {
    if (fractions.empty()) throw ConfigError("split: at least one fraction required");
    double sum = 0.0;
    for (double f : fractions) {
        if (!(f > 0.0)) throw ConfigError("data.split", "fractions must be positive");
        sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("data.split", "fractions must sum to 1");

    const std::size_t m = labels.size();
    const std::size_t parts = fractions.size();
    std::vector<double> global_quota;
    for (double f : fractions) global_quota.push_back(f * static_cast<double>(m));
    const auto totals = largest_remainder(global_quota, m);

    std::mt19937_64 rng(seed);
    std::vector<IndexList> out(parts);

    if (!stratified) {
        IndexList all(m);
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::shuffle(all.begin(), all.end(), rng);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < parts; ++k) {
            out[k].assign(all.begin() + static_cast<std::ptrdiff_t>(pos),
                          all.begin() + static_cast<std::ptrdiff_t>(pos + totals[k]));
            pos += totals[k];
            std::sort(out[k].begin(), out[k].end());
        }
        return out;
    }

    auto by_class = indices_by_class(labels, classes);
    const std::size_t n = by_class.size();
    std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(parts, 0));
    std::vector<std::size_t> class_left(n, 0);
    std::vector<std::size_t> part_left = totals;
    struct Candidate {
        double remainder;
        std::size_t cls;
        std::size_t part;
    };
    std::vector<Candidate> candidates;
    for (std::size_t c = 0; c < n; ++c) {
        const auto size = by_class[c].size();
        if (size == 0) continue;
        if (size < parts) {
            throw ConfigError("data.split", "class " + std::to_string(c) + " has " + std::to_string(size) +
                                                " samples, too few to stratify into " + std::to_string(parts) +
                                                " parts");
        }
        std::size_t used = 0;
        for (std::size_t k = 0; k < parts; ++k) {
            const double ideal = fractions[k] * static_cast<double>(size);
            const double fl = std::floor(ideal + 1e-9);
            counts[c][k] = static_cast<std::size_t>(fl);
            used += counts[c][k];
            part_left[k] -= std::min(part_left[k], counts[c][k]);
            candidates.push_back({ideal - fl, c, k});
        }
        class_left[c] = size - used;
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& b) { return a.remainder > b.remainder; });
    std::vector<std::vector<bool>> bumped(n, std::vector<bool>(parts, false));
    for (const auto& cand : candidates) {
        if (class_left[cand.cls] > 0 && part_left[cand.part] > 0) {
            ++counts[cand.cls][cand.part];
            bumped[cand.cls][cand.part] = true;
            --class_left[cand.cls];
            --part_left[cand.part];
        }
    }
    for (std::size_t c = 0; c < n; ++c) {
        while (class_left[c] > 0) {
            std::size_t best = parts;
            for (std::size_t k = 0; k < parts; ++k) {
                if (part_left[k] == 0) continue;
                if (best == parts || (bumped[c][best] && !bumped[c][k]) ||
                    (bumped[c][best] == bumped[c][k] && part_left[k] > part_left[best])) {
                    best = k;
                }
            }
            if (best == parts) break;
            ++counts[c][best];
            bumped[c][best] = true;
            --class_left[c];
            --part_left[best];
        }
    }

    for (std::size_t c = 0; c < n; ++c) {
        auto& members = by_class[c];
        std::shuffle(members.begin(), members.end(), rng);
        std::size_t pos = 0;
        for (std::size_t k = 0; k < parts; ++k) {
            out[k].insert(out[k].end(), members.begin() + static_cast<std::ptrdiff_t>(pos),
                          members.begin() + static_cast<std::ptrdiff_t>(pos + counts[c][k]));
            pos += counts[c][k];
        }
    }
    for (auto& part : out) std::sort(part.begin(), part.end());
    return out;
}

Splits split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    const double fractions[] = {spec.train, spec.val, spec.test};
    const auto parts = split_indices(ds.labels, ds.classes, fractions, spec.stratified, spec.seed);
    Splits out{ds.subset(parts[0]), ds.subset(parts[1]), ds.subset(parts[2])};
    out.train.validate();
    out.val.validate();
    out.test.validate();
    return out;
}

Dataset synth_blobs(int samples_per_class, int dim, int classes, double separation, std::uint64_t seed) {
    if (samples_per_class < 1 || dim < 1 || classes < 1) throw DomainError("synth_blobs: sizes must be positive");
    if (!(separation >= 0.0) || !std::isfinite(separation)) {
        throw DomainError("synth_blobs: separation must be finite and non-negative");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Matrix centres = Matrix::Zero(classes, dim);
    if (classes <= dim) {
        Matrix gauss(dim, classes);
        for (Eigen::Index c = 0; c < gauss.cols(); ++c) {
            for (Eigen::Index r = 0; r < gauss.rows(); ++r) gauss(r, c) = normal(rng);
        }
        Eigen::HouseholderQR<Matrix> qr(gauss);
        const Matrix q = qr.householderQ() * Matrix::Identity(dim, classes);
        centres = (separation / std::sqrt(2.0)) * q.transpose();
    } else {
        // Rejection sampling keeps every pair at least `separation` apart.
        std::uniform_real_distribution<double> unif(-1.0, 1.0);
        const double half_side = separation * static_cast<double>(classes);
        for (int c = 0; c < classes; ++c) {
            for (int attempt = 0;; ++attempt) {
                Vector p(dim);
                for (int d = 0; d < dim; ++d) p(d) = half_side * unif(rng);
                bool ok = true;
                for (int o = 0; o < c && ok; ++o) ok = (centres.row(o).transpose() - p).norm() >= separation;
                if (ok || attempt > 100000) {
                    centres.row(c) = p.transpose();
                    break;
                }
            }
        }
    }

    Dataset ds;
    const auto m = static_cast<Eigen::Index>(samples_per_class) * classes;
    ds.inputs.resize(m, dim);
    ds.labels.resize(static_cast<std::size_t>(m));
    Eigen::Index row = 0;
    for (int c = 0; c < classes; ++c) {
        for (int s = 0; s < samples_per_class; ++s, ++row) {
            for (int d = 0; d < dim; ++d) ds.inputs(row, d) = centres(c, d) + normal(rng);
            ds.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    ds.classes = classes;
    ds.provenance = "blobs";
    return ds;
}

std::vector<IndexList> batches(std::size_t count, std::size_t batch_size, std::uint64_t shuffle_seed) {
    if (batch_size == 0) throw ConfigError("train.batch_size", "batch size must be positive");
    IndexList order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<IndexList> out;
    out.reserve((count + batch_size - 1) / batch_size);
    for (std::size_t pos = 0; pos < count; pos += batch_size) {
        const auto end = std::min(count, pos + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(m.rows())) throw std::out_of_range("gather_rows: row index");
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

std::vector<int> gather(std::span<const int> values, std::span<const std::size_t> rows) {
    std::vector<int> out;
    out.reserve(rows.size());
    for (auto r : rows) out.push_back(values[r]);
    return out;
}

} // namespace sal
