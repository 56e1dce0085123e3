#pragma once

// Calculators for the softmax-CE Lipschitz constants, the Rademacher-style
// generalization bound of an aligned lower floor, and the Hoeffding sample size,
// plus empirical validators for each.

#include "sal/nn.hpp"

#include <cstdint>

namespace sal {

struct BoundInputs {
    int n = 10;            // class count
    double delta = 0.05;   // failure probability, (0, 1)
    double eps = 0.1;      // alignment tolerance
    double mu = 0.0;       // true mean alignment gap, [0, eps)
    long m = 1;            // sample count
    double lipschitz = 0.0; // C; 0 selects sqrt(2) (one-hot) or n*sqrt(n)
    bool one_hot = true;
    double empirical_loss = 0.0;
    double rademacher = 0.0;

    void validate() const;
    double lipschitz_constant() const;
};

// n * sqrt(n): bound on ||dL/dz||_2 for targets in [0,1]^n.
double lipschitz_bound_general(int n);

// sqrt(2): the same bound when the target is one-hot.
double lipschitz_bound_onehot() noexcept;

struct GradNormReport {
    int n = 0;
    long trials = 0;
    bool one_hot = true;
    double max_norm = 0.0;
    double bound = 0.0;
    long violations = 0;
};

// Max of ||grad softmax_ce|| over random logits (scale drawn log-uniformly from
// [1e-2, 1e2]) and random one-hot or uniform-[0,1] targets.
GradNormReport validate_grad_norm(int n, long trials, std::uint64_t seed, bool one_hot);

// ceil(n ln(1/delta) / (2 (eps - mu)^2)), at least 1.
long hoeffding_sample_size(const BoundInputs& in);

// Unrounded n ln(1/delta) / (2 (eps - mu)^2).
double hoeffding_sample_size_exact(const BoundInputs& in);

// exp(-2 m (eps - mu)^2 / n).
double hoeffding_tail(const BoundInputs& in, long m);

// R_hat + 2 Rad + 3 sqrt(ln(2/delta) / (2m)) + C eps.
double generalization_bound(const BoundInputs& in);

// m x k evaluations of k hypotheses on a fixed sample.
using HypothesisSample = Matrix;

// Monte-Carlo mean over random sign vectors of max_h (1/m) sum_i sigma_i h(x_i).
// A finite sample of hypotheses gives a lower-bound proxy for the class value.
double estimate_rademacher(const HypothesisSample& sample, long trials, std::uint64_t seed);

// Mean over rows of ||f_i - h_i||_2.
double alignment_gap(const Matrix& f_outputs, const Matrix& h_outputs);

} // namespace sal
