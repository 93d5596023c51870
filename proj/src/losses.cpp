#include "bait/losses.hpp"

#include <algorithm>
#include <cmath>

#include "bait/errors.hpp"

namespace bait {

namespace {

void require_probability_row(std::span<const double> p, const char* op) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0 || v > 1.0)
            throw DomainError(std::string(op) + ": entry " + std::to_string(v) +
                              " outside [0, 1]");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw DomainError(std::string(op) + ": probabilities sum to " + std::to_string(sum) +
                          ", expected 1");
}

double kl(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += a[i] * (std::log(std::max(a[i], kLogEps)) - std::log(std::max(b[i], kLogEps)));
    return acc;
}

}  // namespace

LossReport make_loss_report(const std::string& name, double value, int batch_size) {
    if (!std::isfinite(value))
        throw DivergenceError("loss '" + name + "' is non-finite");
    return {name, value, batch_size};
}

double entropy(std::span<const double> p) {
    require_probability_row(p, "entropy");
    double h = 0.0;
    for (double v : p) h -= v * std::log(std::max(v, kLogEps));
    return h;
}

std::vector<double> row_entropies(const Tensor& probs) {
    if (probs.shape().size() != 2)
        throw ShapeError("row_entropies: expected 2-D probabilities, got " +
                         shape_str(probs.shape()));
    const int n = probs.rows(), k = probs.cols();
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i)
        out[i] = entropy(std::span<const double>(probs.values()).subspan(
            static_cast<std::size_t>(i) * k, k));
    return out;
}

double symmetric_kl(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("symmetric_kl: row lengths disagree: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
    require_probability_row(a, "symmetric_kl");
    require_probability_row(b, "symmetric_kl");
    return 0.5 * (kl(a, b) + kl(b, a));
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw DomainError("quantile of empty sample");
    if (q <= 0.0 || q >= 1.0)
        throw DomainError("quantile fraction must lie in (0, 1), got " + std::to_string(q));
    std::sort(values.begin(), values.end());
    const double h = q * static_cast<double>(values.size());
    if (h == std::floor(h)) {
        const auto lo = static_cast<std::size_t>(h) - 1;
        if (lo + 1 < values.size()) return 0.5 * (values[lo] + values[lo + 1]);
        return values[lo];
    }
    return values[static_cast<std::size_t>(std::floor(h))];
}

BatchSplit split_by_tau(const std::vector<double>& entropies, double tau) {
    BatchSplit split;
    split.tau = tau;
    for (int i = 0; i < static_cast<int>(entropies.size()); ++i) {
        if (entropies[i] > tau)
            split.uncertain.push_back(i);
        else
            split.certain.push_back(i);
    }
    return split;
}

BatchSplit split_batch(const Tensor& probs1, double percentile) {
    if (probs1.shape().size() != 2 || probs1.rows() < 2)
        throw SplitError("split_batch: need at least 2 samples, got " + shape_str(probs1.shape()));
    const std::vector<double> ents = row_entropies(probs1);
    return split_by_tau(ents, quantile(ents, percentile));
}

Tensor cross_entropy_source(Tape& tape, const Tensor& probs, const std::vector<int>& labels) {
    if (probs.shape().size() != 2)
        throw ShapeError("cross_entropy: expected 2-D probabilities, got " +
                         shape_str(probs.shape()));
    const int n = probs.rows(), k = probs.cols();
    if (static_cast<int>(labels.size()) != n)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    Tensor onehot = Tensor::zeros({n, k});
    for (int i = 0; i < n; ++i) {
        if (labels[i] < 0 || labels[i] >= k)
            throw DomainError("cross_entropy: label " + std::to_string(labels[i]) +
                              " out of range [0, " + std::to_string(k) + ") at row " +
                              std::to_string(i));
        onehot.at(i, labels[i]) = 1.0;
    }
    return tape.scale(tape.sum(tape.multiply(onehot, tape.log(probs))), -1.0 / n);
}

Tensor cast_loss(Tape& tape, const Tensor& p1, const Tensor& p2, const BatchSplit& split) {
    if (p1.shape() != p2.shape())
        throw ShapeError("cast_loss: prediction shapes disagree: " + shape_str(p1.shape()) +
                         " vs " + shape_str(p2.shape()));
    if (split.total() != p1.rows())
        throw ShapeError("cast_loss: split covers " + std::to_string(split.total()) +
                         " samples, batch has " + std::to_string(p1.rows()));
    const int n = p1.rows(), k = p1.cols();

    // row weights: +1/2 on the certain set, -1/2 on the uncertain set, so the
    // weighted total of (p1-p2)*(log p1 - log p2) is exactly
    // sum_C D_SKL - sum_U D_SKL
    Tensor weights = Tensor::zeros({n, k});
    for (int i : split.certain)
        for (int j = 0; j < k; ++j) weights.at(i, j) = 0.5;
    for (int i : split.uncertain)
        for (int j = 0; j < k; ++j) weights.at(i, j) = -0.5;

    const Tensor p1c = p1.detach();  // anchor predictions act as constants here
    const Tensor diff = tape.subtract(p1c, p2);
    const Tensor logdiff = tape.subtract(tape.log(p1c), tape.log(p2));
    return tape.sum(tape.multiply(weights, tape.multiply(diff, logdiff)));
}

Tensor bite_loss(Tape& tape, const Tensor& p1, const Tensor& p2) {
    if (p1.shape() != p2.shape())
        throw ShapeError("bite_loss: prediction shapes disagree: " + shape_str(p1.shape()) +
                         " vs " + shape_str(p2.shape()));
    const Tensor cross = tape.add(tape.multiply(p2, tape.log(p1)), tape.multiply(p1, tape.log(p2)));
    return tape.scale(tape.sum(cross), -1.0);
}

Tensor class_balance_term(Tape& tape, const Tensor& probs) {
    if (probs.shape().size() != 2)
        throw ShapeError("class_balance: expected 2-D probabilities, got " +
                         shape_str(probs.shape()));
    const int n = probs.rows(), k = probs.cols();
    // column mean via ones-row matmul keeps the graph differentiable
    const Tensor ones_row = Tensor::full({1, n}, 1.0);
    const Tensor mean_pred = tape.scale(tape.matmul(ones_row, probs), 1.0 / n);
    const Tensor log_uniform = Tensor::full({1, k}, std::log(1.0 / k));
    return tape.sum(
        tape.multiply(mean_pred, tape.subtract(tape.log(mean_pred), log_uniform)));
}

Tensor class_balance_loss(Tape& tape, const Tensor& p1, const Tensor& p2) {
    if (p1.shape() != p2.shape())
        throw ShapeError("class_balance_loss: prediction shapes disagree: " +
                         shape_str(p1.shape()) + " vs " + shape_str(p2.shape()));
    return tape.add(class_balance_term(tape, p1), class_balance_term(tape, p2));
}

}  // namespace bait
