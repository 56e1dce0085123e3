#include "sal/metrics.hpp"

#include "sal/error.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

namespace sal {

nlohmann::json GradientRatioProfile::to_json() const {
    auto out = nlohmann::json::array();
    for (const auto& l : layers) {
        out.push_back({{"layer_index", l.layer_index},
                       {"ratio", l.ratio},
                       {"log10_ratio", l.log10_ratio},
                       {"capture_unit", capture_unit},
                       {"method", method}});
    }
    return out;
}

GradientRatioProfile gradient_ratio_profile(const GradientSet& grads) {
    if (grads.empty()) throw ShapeError("gradient_ratio_profile: empty gradient set");
    const double out_norm = grads.back().weights.norm();
    if (!(out_norm > 0.0) || !std::isfinite(out_norm)) {
        throw DegenerateProfile("gradient_ratio_profile: output-layer weight gradient is zero or non-finite");
    }
    GradientRatioProfile profile;
    for (std::size_t l = 0; l < grads.size(); ++l) {
        const double ratio = l + 1 == grads.size() ? 1.0 : grads[l].weights.norm() / out_norm;
        profile.layers.push_back({static_cast<int>(l) + 1, ratio, std::log10(ratio)});
    }
    return profile;
}

GradientRatioProfile gradient_ratio_profile(const Network& net, const Matrix& batch, std::span<const int> labels) {
    const auto trace = forward(net, batch);
    const auto ce = softmax_ce(trace.logits, labels);
    return gradient_ratio_profile(backward(net, trace, OutputGradients{ce.grad, {}}));
}

int midpoint_capture(int total_units) {
    if (total_units < 2) throw DomainError("midpoint_capture: total training duration must be >= 2 units");
    return total_units / 2;
}

double auroc_binary(std::span<const double> scores, std::span<const bool> positive) {
    if (scores.size() != positive.size()) throw ShapeError("auroc_binary: length mismatch");
    const std::size_t m = scores.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<double> rank(m);
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j + 1 < m && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
        i = j + 1;
    }
    double pos = 0.0;
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (positive[i]) {
            pos += 1.0;
            rank_sum += rank[i];
        }
    }
    const double neg = static_cast<double>(m) - pos;
    if (pos == 0.0 || neg == 0.0) throw DomainError("auroc_binary: both classes must be present");
    return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

MetricReport classification_metrics(const Matrix& scores, std::span<const int> labels) {
    const auto m = scores.rows();
    const auto n = scores.cols();
    if (m < 1 || n < 1) throw ShapeError("classification_metrics: empty score matrix");
    if (static_cast<Eigen::Index>(labels.size()) != m) throw ShapeError("classification_metrics: label count mismatch");
    MetricReport report;
    report.confusion = Eigen::MatrixXi::Zero(n, n);
    for (Eigen::Index i = 0; i < m; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= n) throw ShapeError("classification_metrics: label out of range");
        Eigen::Index pred = 0;
        scores.row(i).maxCoeff(&pred);
        ++report.confusion(y, pred);
    }
    report.accuracy = static_cast<double>(report.confusion.trace()) / static_cast<double>(m);

    double f1 = 0.0;
    double sens = 0.0;
    double spec = 0.0;
    double auc = 0.0;
    int included = 0;
    std::vector<double> column(static_cast<std::size_t>(m));
    std::unique_ptr<bool[]> positive(new bool[static_cast<std::size_t>(m)]);
    for (Eigen::Index c = 0; c < n; ++c) {
        const double tp = report.confusion(c, c);
        const double support = report.confusion.row(c).sum();
        if (support == 0.0) {
            report.excluded_classes.push_back(static_cast<int>(c));
            continue;
        }
        const double predicted = report.confusion.col(c).sum();
        const double fp = predicted - tp;
        const double fn = support - tp;
        const double tn = static_cast<double>(m) - tp - fp - fn;
        const double precision = predicted > 0.0 ? tp / predicted : 0.0;
        const double recall = tp / support;
        f1 += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        sens += recall;
        spec += tn + fp > 0.0 ? tn / (tn + fp) : 1.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            column[static_cast<std::size_t>(i)] = scores(i, c);
            positive[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == c;
        }
        // A class that is every sample's label has no negatives; count it as uninformative.
        auc += support == static_cast<double>(m)
                   ? 0.5
                   : auroc_binary(column, std::span<const bool>(positive.get(), static_cast<std::size_t>(m)));
        ++included;
    }
    const double k = static_cast<double>(included);
    report.macro_f1 = f1 / k;
    report.sensitivity = sens / k;
    report.specificity = spec / k;
    report.auroc = auc / k;
    return report;
}

nlohmann::json MetricReport::to_json() const {
    auto rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < confusion.rows(); ++r) {
        auto row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < confusion.cols(); ++c) row.push_back(confusion(r, c));
        rows.push_back(row);
    }
    return {{"accuracy", accuracy}, {"macro_f1", macro_f1},   {"sensitivity", sensitivity},
            {"specificity", specificity}, {"auroc", auroc},    {"confusion", rows},
            {"excluded_classes", excluded_classes}};
}

} // namespace sal
