#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bait/autodiff.hpp"
#include "bait/rng.hpp"

namespace bait {

// Small MLP: relu on every layer except the last, which stays linear.
// widths = [d_in, hidden..., d_feature]. Weights are [in x out] so the
// forward pass is x . W + b; init is uniform in +-1/sqrt(fan_in).
class MlpFeatureExtractor {
public:
    MlpFeatureExtractor() = default;
    MlpFeatureExtractor(std::vector<int> widths, Rng& rng);

    Tensor forward(Tape& tape, const Tensor& x) const;

    // w0, b0, w1, b1, ... in declaration order
    std::vector<Tensor> parameters() const;
    const std::vector<int>& widths() const { return widths_; }
    int input_dim() const { return widths_.front(); }
    int feature_dim() const { return widths_.back(); }

    MlpFeatureExtractor clone() const;

private:
    struct Layer {
        Tensor weight;  // [in x out]
        Tensor bias;    // [1 x out]
    };
    std::vector<int> widths_;
    std::vector<Layer> layers_;
};

// Linear head without bias whose logits are inner products with the
// row-L2-normalized weight. Each normalized row is the class prototype:
// scaling a stored row never changes the head's output.
class WeightNormClassifier {
public:
    WeightNormClassifier() = default;
    WeightNormClassifier(int num_classes, int feature_dim, Rng& rng);

    // feats [n x d] -> logits [n x K]
    Tensor logits(Tape& tape, const Tensor& feats) const;

    int num_classes() const { return weight_.rows(); }
    int feature_dim() const { return weight_.cols(); }
    Tensor weight() const { return weight_; }

    WeightNormClassifier clone() const;

private:
    Tensor weight_;  // [K x d]
};

enum class Head { anchor, bait };

// Feature extractor plus two heads: the anchor classifier (frozen once
// source training ends) and the bait classifier (created at adaptation
// start as an exact copy of the anchor). The bait head does not exist
// until init_bait_from_anchor() runs.
struct BaitModel {
    MlpFeatureExtractor extractor;
    WeightNormClassifier anchor;
    std::optional<WeightNormClassifier> bait;

    static BaitModel create(const std::vector<int>& widths, int num_classes, std::uint64_t seed);

    void init_bait_from_anchor();
    bool has_bait() const { return bait.has_value(); }

    Tensor features(Tape& tape, const Tensor& x) const;
    Tensor logits(Tape& tape, const Tensor& x, Head head) const;
    // softmax probabilities, on the tape
    Tensor predict(Tape& tape, const Tensor& x, Head head) const;
    // evaluation-only forward on a throwaway tape; result carries no graph
    Tensor predict_eval(const Tensor& x, Head head) const;

    std::vector<Tensor> extractor_params() const { return extractor.parameters(); }
    std::vector<Tensor> anchor_params() const { return {anchor.weight()}; }
    std::vector<Tensor> bait_params() const;
    std::vector<Tensor> all_params() const;

    int input_dim() const { return extractor.input_dim(); }
    int feature_dim() const { return extractor.feature_dim(); }
    int num_classes() const { return anchor.num_classes(); }

    BaitModel clone() const;
};

void set_trainable(const std::vector<Tensor>& params, bool trainable);
void freeze(const std::vector<Tensor>& params);
void clear_grads(const std::vector<Tensor>& params);

// Checkpoint file: one JSON header line (version, widths, K, bait flag,
// epoch, RNG state) followed by raw little-endian 64-bit parameter buffers
// in declaration order: extractor w0,b0,w1,b1,..., anchor W, bait W if
// present. Round trips are bit-exact.
inline constexpr int kCheckpointVersion = 1;

struct LoadedCheckpoint {
    BaitModel model;
    long epoch = 0;
    std::string rng_state;
};

void save_checkpoint(const BaitModel& model, const std::string& path, long epoch = 0,
                     const std::string& rng_state = "");
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace bait
