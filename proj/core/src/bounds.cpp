#include "sal/bounds.hpp"

#include "sal/error.hpp"

#include <cmath>
#include <random>
#include <string>

namespace sal {

void BoundInputs::validate() const {
    if (n < 1) throw DomainError("n must be >= 1");
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("delta must lie in (0, 1)");
    if (!(mu >= 0.0)) throw DomainError("mu must be >= 0");
    if (!(eps > mu)) throw DomainError("eps must exceed mu; the sample-size bound diverges otherwise");
    if (m < 1) throw DomainError("m must be >= 1");
    if (lipschitz < 0.0) throw DomainError("C must be positive");
    if (empirical_loss < 0.0 || rademacher < 0.0) throw DomainError("empirical loss and Rademacher estimate must be >= 0");
}

double BoundInputs::lipschitz_constant() const {
    if (lipschitz > 0.0) return lipschitz;
    return one_hot ? lipschitz_bound_onehot() : lipschitz_bound_general(n);
}

double lipschitz_bound_general(int n) {
    if (n < 1) throw DomainError("lipschitz_bound_general: n must be >= 1");
    const auto nd = static_cast<double>(n);
    return nd * std::sqrt(nd);
}

double lipschitz_bound_onehot() noexcept {
    return std::sqrt(2.0);
}

GradNormReport validate_grad_norm(int n, long trials, std::uint64_t seed, bool one_hot) {
    if (n < 1) throw DomainError("validate_grad_norm: n must be >= 1");
    if (trials < 1) throw DomainError("validate_grad_norm: trials must be >= 1");
    GradNormReport report;
    report.n = n;
    report.trials = trials;
    report.one_hot = one_hot;
    report.bound = one_hot ? lipschitz_bound_onehot() : lipschitz_bound_general(n);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> log_scale(-2.0, 2.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<int> cls(0, n - 1);
    Vector z(n);
    Vector y(n);
    for (long trial = 0; trial < trials; ++trial) {
        const double scale = std::pow(10.0, log_scale(rng));
        for (int k = 0; k < n; ++k) z(k) = scale * normal(rng);
        if (one_hot) {
            y.setZero();
            y(cls(rng)) = 1.0;
        } else {
            for (int k = 0; k < n; ++k) y(k) = unit(rng);
        }
        const double norm = softmax_ce(z, y).grad.norm();
        if (norm > report.max_norm) report.max_norm = norm;
        if (norm > report.bound) ++report.violations;
    }
    return report;
}

double hoeffding_sample_size_exact(const BoundInputs& in) {
    in.validate();
    const double gap = in.eps - in.mu;
    return static_cast<double>(in.n) * std::log(1.0 / in.delta) / (2.0 * gap * gap);
}

long hoeffding_sample_size(const BoundInputs& in) {
    const double exact = hoeffding_sample_size_exact(in);
    return std::max(1L, static_cast<long>(std::ceil(exact)));
}

double hoeffding_tail(const BoundInputs& in, long m) {
    const double gap = in.eps - in.mu;
    return std::exp(-2.0 * static_cast<double>(m) * gap * gap / static_cast<double>(in.n));
}

double generalization_bound(const BoundInputs& in) {
    in.validate();
    const double confidence = 3.0 * std::sqrt(std::log(2.0 / in.delta) / (2.0 * static_cast<double>(in.m)));
    return in.empirical_loss + 2.0 * in.rademacher + confidence + in.lipschitz_constant() * in.eps;
}

double estimate_rademacher(const HypothesisSample& sample, long trials, std::uint64_t seed) {
    if (sample.rows() == 0 || sample.cols() == 0) throw ShapeError("estimate_rademacher: empty hypothesis sample");
    if (trials < 1) throw DomainError("estimate_rademacher: trials must be >= 1");
    if (!sample.allFinite()) throw NumericError("estimate_rademacher: non-finite hypothesis outputs");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    const auto m = sample.rows();
    Vector sigma(m);
    double total = 0.0;
    for (long trial = 0; trial < trials; ++trial) {
        for (Eigen::Index i = 0; i < m; ++i) sigma(i) = coin(rng) ? 1.0 : -1.0;
        total += (sample.transpose() * sigma).maxCoeff() / static_cast<double>(m);
    }
    return total / static_cast<double>(trials);
}

double alignment_gap(const Matrix& f_outputs, const Matrix& h_outputs) {
    if (f_outputs.rows() != h_outputs.rows() || f_outputs.cols() != h_outputs.cols()) {
        throw ShapeError("alignment_gap: output matrices differ in shape");
    }
    if (f_outputs.rows() == 0) throw ShapeError("alignment_gap: empty sample");
    return (f_outputs - h_outputs).rowwise().norm().mean();
}

} // namespace sal
