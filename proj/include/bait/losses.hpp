#pragma once

#include <span>
#include <string>
#include <vector>

#include "bait/autodiff.hpp"

namespace bait {

// Per-batch partition of sample indices by anchor-prediction entropy.
// Certain samples have H <= tau, uncertain ones H > tau; together they
// cover 0..n-1 exactly once.
struct BatchSplit {
    std::vector<int> certain;
    std::vector<int> uncertain;
    double tau = 0.0;  // realized entropy threshold, nats

    int total() const { return static_cast<int>(certain.size() + uncertain.size()); }
};

struct LossReport {
    std::string name;
    double value = 0.0;
    int batch_size = 0;
};

// Throws DivergenceError on non-finite values.
LossReport make_loss_report(const std::string& name, double value, int batch_size);

// Shannon entropy in nats of one probability row; 0*log 0 handled by the
// epsilon clamp. Input must sum to 1 within 1e-6.
double entropy(std::span<const double> p);

// Entropy of each row of an [n x K] probability tensor.
std::vector<double> row_entropies(const Tensor& probs);

// 0.5 * (KL(a|b) + KL(b|a)), nats. Host-side; also serves as the
// independent value oracle for the taped cast loss.
double symmetric_kl(std::span<const double> a, std::span<const double> b);

// Quantile of a sample by the median-consistent midpoint rule: sorted
// ascending, at cut h = q*n an integer boundary averages the two
// neighbours, otherwise the containing element is taken.
double quantile(std::vector<double> values, double q);

// Entropy split at an explicit threshold (ties go to the certain set).
BatchSplit split_by_tau(const std::vector<double>& entropies, double tau);

// Splits a batch of anchor probabilities at the percentile-quantile of
// their entropies. n must be >= 2 (callers skip undersized batches).
BatchSplit split_batch(const Tensor& probs1, double percentile);

// Mean negative log-likelihood of the labeled rows.
Tensor cross_entropy_source(Tape& tape, const Tensor& probs, const std::vector<int>& labels);

// Step-1 objective: sum of symmetric KL between the two heads' predictions
// over the certain set minus the same sum over the uncertain set. p1 is
// treated as a constant, so gradients reach only p2's parameters.
Tensor cast_loss(Tape& tape, const Tensor& p1, const Tensor& p2, const BatchSplit& split);

// Step-2 objective: symmetric cross-entropy between the heads' predictions,
// summed over all samples and classes.
Tensor bite_loss(Tape& tape, const Tensor& p1, const Tensor& p2);

// KL(mean prediction || uniform) for one head.
Tensor class_balance_term(Tape& tape, const Tensor& probs);

// Class-balance regularizer: both heads' terms added.
Tensor class_balance_loss(Tape& tape, const Tensor& p1, const Tensor& p2);

}  // namespace bait
