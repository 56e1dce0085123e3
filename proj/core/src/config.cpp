#include "sal/config.hpp"

#include "sal/error.hpp"

#include <fstream>
#include <initializer_list>
#include <set>

namespace sal {

namespace {

using nlohmann::json;

std::string join(const std::string& prefix, const std::string& key) {
    return prefix.empty() ? key : prefix + "." + key;
}

// View of one JSON object that records which keys were consumed and rejects
// everything else.
class Section {
public:
    Section(const json& doc, std::string path, std::initializer_list<const char*> allowed)
        : doc_(doc), path_(std::move(path)) {
        if (!doc_.is_object()) throw ConfigError(path_, "expected an object");
        std::set<std::string> known(allowed.begin(), allowed.end());
        for (const auto& [key, value] : doc_.items()) {
            if (!known.contains(key)) throw ConfigError(join(path_, key), "unknown key");
        }
    }

    bool has(const char* key) const { return doc_.contains(key); }
    std::string path(const char* key) const { return join(path_, key); }
    const json& raw(const char* key) const { return doc_.at(key); }

    template <typename T>
    void read(const char* key, T& out) const {
        if (!doc_.contains(key)) return;
        const json& v = doc_.at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw ConfigError(path(key), "expected a boolean");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw ConfigError(path(key), "expected an integer");
                if constexpr (std::is_unsigned_v<T>) {
                    if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
                        throw ConfigError(path(key), "expected a non-negative integer");
                    }
                }
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw ConfigError(path(key), "expected a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw ConfigError(path(key), "expected a string");
            }
            out = v.get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(path(key), e.what());
        }
    }

private:
    const json& doc_;
    std::string path_;
};

Timing parse_timing(const std::string& s, const std::string& path) {
    if (s == "wall") return Timing::wall;
    if (s == "none") return Timing::none;
    throw ConfigError(path, "expected \"wall\" or \"none\"");
}

std::string_view to_string(Timing t) {
    return t == Timing::wall ? "wall" : "none";
}

void parse_data(const json& doc, DataConfig& d) {
    Section s(doc, "data",
              {"source", "paths", "subset_ratio", "test_subset_ratio", "stratified", "val_fraction", "split", "blobs",
               "seed"});
    s.read("source", d.source);
    if (d.source != "idx" && d.source != "blobs") throw ConfigError(s.path("source"), "expected \"idx\" or \"blobs\"");
    if (s.has("paths")) {
        Section p(s.raw("paths"), "data.paths", {"train_images", "train_labels", "test_images", "test_labels"});
        p.read("train_images", d.paths.train_images);
        p.read("train_labels", d.paths.train_labels);
        p.read("test_images", d.paths.test_images);
        p.read("test_labels", d.paths.test_labels);
    }
    s.read("subset_ratio", d.subset_ratio);
    s.read("test_subset_ratio", d.test_subset_ratio);
    s.read("stratified", d.stratified);
    s.read("val_fraction", d.val_fraction);
    s.read("seed", d.seed);
    if (s.has("split")) {
        Section p(s.raw("split"), "data.split", {"train", "val", "test", "stratified"});
        p.read("train", d.split.train);
        p.read("val", d.split.val);
        p.read("test", d.split.test);
        p.read("stratified", d.split.stratified);
    }
    if (s.has("blobs")) {
        Section p(s.raw("blobs"), "data.blobs", {"samples_per_class", "dim", "classes", "separation"});
        p.read("samples_per_class", d.blobs.samples_per_class);
        p.read("dim", d.blobs.dim);
        p.read("classes", d.blobs.classes);
        p.read("separation", d.blobs.separation);
    }

    if (!(d.subset_ratio > 0.0 && d.subset_ratio <= 1.0)) throw ConfigError(s.path("subset_ratio"), "must lie in (0, 1]");
    if (!(d.test_subset_ratio > 0.0 && d.test_subset_ratio <= 1.0)) {
        throw ConfigError(s.path("test_subset_ratio"), "must lie in (0, 1]");
    }
    if (!(d.val_fraction > 0.0 && d.val_fraction < 1.0)) throw ConfigError(s.path("val_fraction"), "must lie in (0, 1)");
    d.split.seed = d.seed;
    d.split.validate();
    if (d.source == "idx") {
        const std::pair<const char*, const std::string*> required[] = {
            {"train_images", &d.paths.train_images},
            {"train_labels", &d.paths.train_labels},
            {"test_images", &d.paths.test_images},
            {"test_labels", &d.paths.test_labels}};
        for (const auto& [key, value] : required) {
            if (value->empty()) throw ConfigError(std::string("data.paths.") + key, "required when data.source is \"idx\"");
        }
    } else {
        if (d.blobs.samples_per_class < 1) throw ConfigError("data.blobs.samples_per_class", "must be >= 1");
        if (d.blobs.dim < 1) throw ConfigError("data.blobs.dim", "must be >= 1");
        if (d.blobs.classes < 2) throw ConfigError("data.blobs.classes", "must be >= 2");
        if (!(d.blobs.separation >= 0.0)) throw ConfigError("data.blobs.separation", "must be >= 0");
    }
}

void parse_model(const json& doc, TrainConfig& t) {
    Section s(doc, "model", {"base_depth", "base_width", "activation", "floors"});
    s.read("base_depth", t.base_depth);
    s.read("base_width", t.base_width);
    s.read("floors", t.floors);
    if (s.has("activation")) {
        std::string name;
        s.read("activation", name);
        try {
            t.activation = parse_activation(name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(s.path("activation"), e.what());
        }
    }
}

void parse_train(const json& doc, TrainConfig& t) {
    Section s(doc, "train",
              {"t", "r", "S_max", "patience", "lr", "batch_size", "optimizer", "seed", "monitor", "max_epochs"});
    s.read("t", t.t);
    s.read("r", t.r);
    s.read("S_max", t.max_steps);
    s.read("patience", t.patience);
    s.read("lr", t.lr);
    s.read("batch_size", t.batch_size);
    s.read("seed", t.seed);
    s.read("monitor", t.monitor);
    s.read("max_epochs", t.max_epochs);
    if (s.has("optimizer")) {
        std::string name;
        s.read("optimizer", name);
        try {
            t.optimizer = parse_optimizer(name);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(s.path("optimizer"), e.what());
        }
    }
}

void parse_output(const json& doc, OutputConfig& o) {
    Section s(doc, "output", {"dir", "formats", "timing", "save_checkpoint"});
    s.read("dir", o.dir);
    s.read("save_checkpoint", o.save_checkpoint);
    if (s.has("timing")) {
        std::string timing;
        s.read("timing", timing);
        o.timing = parse_timing(timing, s.path("timing"));
    }
    if (s.has("formats")) {
        const json& f = s.raw("formats");
        if (!f.is_array()) throw ConfigError(s.path("formats"), "expected an array of strings");
        o.formats.clear();
        for (const auto& item : f) {
            if (!item.is_string() || (item != "csv" && item != "json")) {
                throw ConfigError(s.path("formats"), "entries must be \"csv\" or \"json\"");
            }
            o.formats.push_back(item.get<std::string>());
        }
    }
}

} // namespace

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir) {
    Section root(doc, "", {"data", "model", "train", "output"});
    RunConfig cfg;
    cfg.base_dir = base_dir;
    if (!root.has("data")) throw ConfigError("data", "section is required");
    parse_data(doc.at("data"), cfg.data);
    if (root.has("model")) parse_model(doc.at("model"), cfg.train);
    if (root.has("train")) parse_train(doc.at("train"), cfg.train);
    if (root.has("output")) parse_output(doc.at("output"), cfg.output);
    cfg.train.timing = cfg.output.timing;
    cfg.train.validate();
    return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError(key, "empty path component in override");
        if (!node->is_object()) throw ConfigError(key, "override path crosses a non-object value");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = json::object();
        start = dot + 1;
    }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError("", "cannot open config file " + path.string());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw ConfigError("", "config file " + path.string() + " is not valid JSON");
    for (const auto& o : overrides) apply_override(doc, o);
    return parse_config(doc, path.has_parent_path() ? path.parent_path() : std::filesystem::path("."));
}

nlohmann::json RunConfig::to_json() const {
    json data = {{"source", this->data.source},
                 {"subset_ratio", this->data.subset_ratio},
                 {"test_subset_ratio", this->data.test_subset_ratio},
                 {"stratified", this->data.stratified},
                 {"val_fraction", this->data.val_fraction},
                 {"split", {{"train", this->data.split.train},
                            {"val", this->data.split.val},
                            {"test", this->data.split.test},
                            {"stratified", this->data.split.stratified}}},
                 {"seed", this->data.seed}};
    if (this->data.source == "idx") {
        data["paths"] = {{"train_images", this->data.paths.train_images},
                         {"train_labels", this->data.paths.train_labels},
                         {"test_images", this->data.paths.test_images},
                         {"test_labels", this->data.paths.test_labels}};
    } else {
        data["blobs"] = {{"samples_per_class", this->data.blobs.samples_per_class},
                         {"dim", this->data.blobs.dim},
                         {"classes", this->data.blobs.classes},
                         {"separation", this->data.blobs.separation}};
    }
    return {{"data", data},
            {"model",
             {{"base_depth", train.base_depth},
              {"base_width", train.base_width},
              {"activation", std::string(to_string(train.activation))},
              {"floors", train.floors}}},
            {"train",
             {{"t", train.t},
              {"r", train.r},
              {"S_max", train.max_steps},
              {"patience", train.patience},
              {"lr", train.lr},
              {"batch_size", train.batch_size},
              {"optimizer", std::string(to_string(train.optimizer))},
              {"seed", train.seed},
              {"monitor", train.monitor},
              {"max_epochs", train.max_epochs}}},
            {"output",
             {{"dir", output.dir},
              {"formats", output.formats},
              {"timing", std::string(to_string(output.timing))},
              {"save_checkpoint", output.save_checkpoint}}}};
}

DataSplits prepare_data(const RunConfig& cfg) {
    const auto& d = cfg.data;
    if (d.source == "blobs") {
        const auto all = synth_blobs(d.blobs.samples_per_class, d.blobs.dim, d.blobs.classes, d.blobs.separation, d.seed);
        const auto pool = d.subset_ratio < 1.0 ? subsample(all, d.subset_ratio, d.seed, d.stratified) : all;
        auto parts = split(pool, d.split);
        return {std::move(parts.train), std::move(parts.val), std::move(parts.test)};
    }

    auto resolve = [&](const std::string& p, const char* key) {
        std::filesystem::path path(p);
        if (path.is_relative() && !cfg.base_dir.empty()) path = cfg.base_dir / path;
        if (!std::filesystem::exists(path)) {
            throw ConfigError(std::string("data.paths.") + key, "file not found: " + path.string());
        }
        return path;
    };
    const auto train_images = resolve(d.paths.train_images, "train_images");
    const auto train_labels = resolve(d.paths.train_labels, "train_labels");
    const auto test_images = resolve(d.paths.test_images, "test_images");
    const auto test_labels = resolve(d.paths.test_labels, "test_labels");
    const auto train_pool = load_idx(train_images, train_labels);
    auto test = load_idx(test_images, test_labels, train_pool.classes);
    const auto pool = subsample(train_pool, d.subset_ratio, d.seed, d.stratified);
    if (d.test_subset_ratio < 1.0) test = subsample(test, d.test_subset_ratio, d.seed + 1, d.stratified);
    const double fractions[] = {1.0 - d.val_fraction, d.val_fraction};
    const auto parts = split_indices(pool.labels, pool.classes, fractions, d.stratified, d.seed);
    DataSplits out{pool.subset(parts[0]), pool.subset(parts[1]), std::move(test)};
    out.train.validate();
    out.val.validate();
    return out;
}

} // namespace sal
