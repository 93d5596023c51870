#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bait/data.hpp"
#include "bait/losses.hpp"
#include "bait/model.hpp"

namespace bait {

enum class AdaptMode { bait, bait_no_split, bait_no_cb, single_classifier_cb };
enum class TauSchedule { constant, linear_decay_to_zero };

AdaptMode parse_adapt_mode(const std::string& s);
TauSchedule parse_tau_schedule(const std::string& s);
std::string to_string(AdaptMode mode);
std::string to_string(TauSchedule schedule);

struct TrainConfig {
    double lr_source = 0.03;
    double lr_adapt = 0.003;  // the source rate reduced 10x
    double momentum = 0.9;
    int batch_size = 64;
    int epochs_source = 20;
    int epochs_adapt = 30;
    double split_percentile = 0.5;
    double cb_weight = 1.0;
    AdaptMode mode = AdaptMode::bait;
    TauSchedule tau_schedule = TauSchedule::constant;
    std::uint64_t seed = 0;
    // toy architecture: smallest MLP that cleanly separates rotated moons
    std::vector<int> hidden_widths = {16, 16};
    int feature_dim = 16;

    void validate() const;
    std::vector<int> extractor_widths(int input_dim) const;
};

// v <- mu * v + g;  w <- w - lr * v. Parameters without a gradient buffer
// are left untouched (their velocity does not decay either); frozen groups
// simply never reach the optimizer.
class SgdMomentum {
public:
    SgdMomentum(std::vector<Tensor> params, double lr, double momentum);

    void step();
    void zero_grad();

private:
    struct Slot {
        Tensor param;
        std::vector<double> velocity;
    };
    std::vector<Slot> slots_;
    double lr_;
    double momentum_;
};

struct EpochMetrics {
    int epoch = 0;
    std::string phase;  // "source" or "adapt"
    std::string domain_tag;
    std::map<std::string, double> losses;    // epoch means, keyed by loss name
    std::map<std::string, double> accuracy;  // per head, when labels exist
    std::optional<double> agreement;
    std::vector<long> pred_histogram;  // anchor-head predictions per class

    std::string to_json_line() const;
    static EpochMetrics from_json_line(const std::string& line);
};

// Streams one JSON object per epoch to an append-only metrics.jsonl.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path);
    void append(const EpochMetrics& m);

private:
    std::string path_;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

// Entropy threshold for one adaptation step. The constant schedule returns
// the percentile-quantile of the batch entropies (the median by default);
// the decay schedule shrinks it linearly to zero over the run.
double tau_for_step(TauSchedule schedule, long step, long total_steps,
                    const std::vector<double>& batch_entropies, double percentile = 0.5);

// Fired after each optimizer sub-step so callers can audit which parameter
// group moved; unused in normal runs.
struct AdaptStepEvent {
    enum class Phase { cast_step, bite_step };
    Phase phase;
    int epoch;
    long step;
};
using StepObserver = std::function<void(const AdaptStepEvent&)>;

struct TrainResult {
    std::vector<EpochMetrics> metrics;
};

// Supervised training of extractor + anchor head on the labeled source
// domain. The bait head is untouched. Aborts with DivergenceError when the
// loss explodes or goes non-finite.
TrainResult train_source(BaitModel& model, const LabeledDataset& source, const TrainConfig& cfg,
                         const MetricsSink& sink = {});

// Two-step per-batch adaptation: the anchor head stays frozen for the whole
// run, the bait head is initialized from it, and every batch first updates
// the bait head on the cast loss, then the extractor on bite + class
// balance. Handles modes bait, bait_no_split and bait_no_cb. The freshly
// copied bait weight receives a vanishing seeded nudge: the cast gradient
// is identically zero while the heads coincide exactly.
TrainResult adapt_bait(BaitModel& model, const UnlabeledDataset& target, const TrainConfig& cfg,
                       const MetricsSink& sink = {}, const StepObserver& observer = {});

// Ablation: one head only, extractor trained on the class-balance loss
// alone. The bait head is never constructed.
TrainResult adapt_single_classifier(BaitModel& model, const UnlabeledDataset& target,
                                    const TrainConfig& cfg, const MetricsSink& sink = {});

// Mode dispatcher used by the CLI.
TrainResult adapt(BaitModel& model, const UnlabeledDataset& target, const TrainConfig& cfg,
                  const MetricsSink& sink = {}, const StepObserver& observer = {});

}  // namespace bait
