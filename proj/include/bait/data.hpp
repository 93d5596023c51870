#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bait/autodiff.hpp"
#include "bait/rng.hpp"

namespace bait {

// Feature matrix with integer class labels.
struct LabeledDataset {
    Tensor features;          // [n x d], no gradient
    std::vector<int> labels;  // values in [0, K)
    std::string domain_tag;
    int num_classes = 0;

    int size() const { return features.rows(); }
    int dim() const { return features.cols(); }
};

// Feature matrix whose labels, when present, exist only for evaluation.
// While the audit is armed (the adaptation loss loop), any access to the
// hidden labels trips a sticky flag; tests assert it never fires.
class UnlabeledDataset {
public:
    UnlabeledDataset() = default;
    UnlabeledDataset(Tensor features, std::string domain_tag);
    static UnlabeledDataset from_labeled(const LabeledDataset& ds);

    const Tensor& features() const { return features_; }
    const std::string& domain_tag() const { return domain_tag_; }
    int size() const { return features_.rows(); }
    int dim() const { return features_.cols(); }

    bool has_hidden_labels() const { return hidden_labels_.has_value(); }
    int hidden_num_classes() const { return hidden_num_classes_; }
    // Evaluation-only accessor; records an audit violation while armed.
    const std::vector<int>& hidden_labels() const;

    void arm_label_audit() const { audit_armed_ = true; }
    void disarm_label_audit() const { audit_armed_ = false; }
    bool label_audit_tripped() const { return audit_tripped_; }

private:
    Tensor features_;
    std::string domain_tag_;
    std::optional<std::vector<int>> hidden_labels_;
    int hidden_num_classes_ = 0;
    mutable bool audit_armed_ = false;
    mutable bool audit_tripped_ = false;
};

// Two inter-twinning moons: class 0 on the arc (cos t, sin t) and class 1 on
// (1 - cos t, 0.5 - sin t), t evenly spaced over [0, pi], plus isotropic
// Gaussian noise. Deterministic for a given seed.
LabeledDataset make_moons(int n_per_class, double noise_std, std::uint64_t seed,
                          std::string domain_tag = "source");

// Rotates every 2-D feature row about the origin; labels and tag unchanged.
LabeledDataset rotate2d(const LabeledDataset& ds, double degrees);

// Header-less CSV: comma-separated decimals, optionally a trailing integer
// label column. Values are written with 17 significant digits so a round
// trip reproduces every double exactly.
LabeledDataset load_features_csv(const std::string& path, bool has_labels,
                                 std::string domain_tag = "");
void save_features_csv(const LabeledDataset& ds, const std::string& path, bool with_labels = true);

// Seeded shuffled mini-batch index stream. One epoch visits every index
// exactly once (minus a dropped tail when drop_last); start_epoch()
// reshuffles with fresh draws from the same stream.
class BatchIterator {
public:
    BatchIterator(int n, int batch_size, std::uint64_t seed, bool drop_last);

    // Index rows of the next batch, or nullopt at the end of the epoch.
    std::optional<std::vector<int>> next();
    void start_epoch();

    int batches_per_epoch() const;

private:
    int n_;
    int batch_size_;
    bool drop_last_;
    Rng rng_;
    std::vector<int> order_;
    int cursor_ = 0;
};

// Materializes the selected rows as a fresh [b x d] tensor.
Tensor gather_rows(const Tensor& features, const std::vector<int>& indices);
std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& indices);

}  // namespace bait
