#pragma once

// Dense feed-forward networks: forward passes that keep every layer's values,
// softmax cross-entropy and MSE losses, exact reverse-mode gradients and the
// SGD/Adam update rules.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace sal {

// Rows are samples, columns are features.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { sigmoid, relu, tanh };

std::string_view to_string(Activation act) noexcept;
Activation parse_activation(std::string_view name);

struct LayerParams {
    Matrix weights; // out_dim x in_dim
    Vector bias;    // out_dim

    Eigen::Index in_dim() const noexcept { return weights.cols(); }
    Eigen::Index out_dim() const noexcept { return weights.rows(); }
};

// A stack of `depth` affine layers. The first depth-1 are hidden layers of a
// shared width followed by the activation; the last one emits raw logits.
class Network {
public:
    Network(int in_dim, int out_dim, int depth, int width, Activation act);

    // Random initialisation: Kaiming-uniform for relu, Xavier-uniform for
    // sigmoid/tanh, zero biases.
    static Network initialized(int in_dim, int out_dim, int depth, int width, Activation act,
                               std::uint64_t seed);

    int in_dim() const noexcept { return in_dim_; }
    int out_dim() const noexcept { return out_dim_; }
    int depth() const noexcept { return static_cast<int>(layers_.size()); }
    int hidden_count() const noexcept { return depth() - 1; }
    int width() const noexcept { return width_; }
    Activation activation() const noexcept { return activation_; }

    std::vector<LayerParams>& layers() noexcept { return layers_; }
    const std::vector<LayerParams>& layers() const noexcept { return layers_; }

    std::size_t param_count() const noexcept;
    void set_zero();

    // FNV-1a over the raw parameter bytes; equal hashes mean bit-identical parameters
    // with overwhelming probability.
    std::uint64_t param_hash() const noexcept;

    bool same_architecture(const Network& other) const noexcept;

private:
    int in_dim_;
    int out_dim_;
    int width_;
    Activation activation_;
    std::vector<LayerParams> layers_;
};

// Values produced by one forward pass over a batch.
struct ActivationTrace {
    Matrix input;
    std::vector<Matrix> pre;  // hidden pre-activations z_l
    std::vector<Matrix> post; // hidden post-activations a_l
    Matrix logits;

    Eigen::Index batch_size() const noexcept { return input.rows(); }
    int layer_count() const noexcept { return static_cast<int>(post.size()) + 1; }
};

using GradientSet = std::vector<LayerParams>;

// Gradients of a scalar loss with respect to the network outputs that feed
// `backward`. `hidden[l]` is dL/da_l for hidden layer l, or an empty matrix when
// the loss does not read that layer directly.
struct OutputGradients {
    Matrix logits;
    std::vector<Matrix> hidden;
};

struct LossValue {
    double loss = 0.0;
    Matrix grad;
};

struct VectorLoss {
    double loss = 0.0;
    Vector grad;
};

ActivationTrace forward(const Network& net, const Matrix& batch);

// Logits only; skips storing intermediate values.
Matrix predict_logits(const Network& net, const Matrix& batch);

Matrix softmax_rows(const Matrix& logits);

// -sum y_i log softmax(z)_i for one sample, with gradient (sum y) * softmax(z) - y.
VectorLoss softmax_ce(const Vector& logits, const Vector& target);

// Mean cross-entropy over a batch with integer labels; grad is w.r.t. the logits
// of the mean loss.
LossValue softmax_ce(const Matrix& logits, std::span<const int> labels);

// Mean squared error over every element.
LossValue mse(const Matrix& pred, const Matrix& target);

GradientSet backward(const Network& net, const ActivationTrace& trace, const OutputGradients& head);

GradientSet zero_gradients(const Network& net);

} // namespace sal
