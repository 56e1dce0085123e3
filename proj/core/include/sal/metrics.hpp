#pragma once

#include "sal/nn.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <string>
#include <vector>

namespace sal {

struct LayerRatio {
    int layer_index = 0; // 1-based, output layer = depth
    double ratio = 0.0;  // ||dL/dW_l||_F / ||dL/dW_out||_F
    double log10_ratio = 0.0;
};

struct GradientRatioProfile {
    std::vector<LayerRatio> layers;
    int capture_unit = 0;
    std::string method;

    nlohmann::json to_json() const;
};

// Thrown when the output layer's weight gradient vanishes and ratios are undefined.
class DegenerateProfile : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Weight-gradient Frobenius norms relative to the output layer; biases excluded.
GradientRatioProfile gradient_ratio_profile(const GradientSet& grads);

// One forward/backward pass of the mean CE loss over (batch, labels).
GradientRatioProfile gradient_ratio_profile(const Network& net, const Matrix& batch, std::span<const int> labels);

// Unit at which to capture a profile in a run lasting `total_units`: floor(total/2).
int midpoint_capture(int total_units);

struct MetricReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    double sensitivity = 0.0; // macro recall
    double specificity = 0.0; // macro one-vs-rest
    double auroc = 0.0;       // macro one-vs-rest
    Eigen::MatrixXi confusion; // rows true class, columns predicted class
    std::vector<int> excluded_classes; // absent from labels, left out of macro averages

    nlohmann::json to_json() const;
};

// Predictions are row-wise argmax (lowest index on ties).
MetricReport classification_metrics(const Matrix& scores, std::span<const int> labels);

// Mann-Whitney AUROC with mid-ranks for ties. Requires both classes present.
double auroc_binary(std::span<const double> scores, std::span<const bool> positive);

} // namespace sal
