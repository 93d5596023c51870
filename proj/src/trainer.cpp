#include "bait/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iostream>

#include "bait/eval.hpp"
#include "json.hpp"

namespace bait {

namespace {

// Loss magnitudes past this point mean the run has diverged; abort rather
// than march NaNs through the metrics.
constexpr double kDivergenceGuard = 1e6;

// Fixed stream-splitting constants so model init, source batching and
// adaptation batching never share RNG draws for the same user seed.
constexpr std::uint64_t kSourceBatchStream = 0x9e3779b97f4a7c15ull;
constexpr std::uint64_t kAdaptBatchStream = 0xc2b2ae3d27d4eb4full;
constexpr std::uint64_t kBaitNudgeStream = 0x165667b19e3779f9ull;

// The cast objective is stationary while both heads coincide: identical
// predictions make its gradient identically zero, so an exact copy would
// pin the bait head to the anchor forever. A vanishing seeded nudge on the
// bait weight (1e-5 of each row norm) breaks the tie without measurably
// moving its predictions.
constexpr double kBaitNudgeScale = 1e-5;

void nudge_bait_weight(BaitModel& model, std::uint64_t seed) {
    Rng rng(seed ^ kBaitNudgeStream);
    Tensor w = model.bait->weight();
    for (int i = 0; i < w.rows(); ++i) {
        double sq = 0.0;
        for (int j = 0; j < w.cols(); ++j) sq += w.at(i, j) * w.at(i, j);
        const double scale = kBaitNudgeScale * std::sqrt(sq);
        for (int j = 0; j < w.cols(); ++j) w.at(i, j) += rng.uniform(-scale, scale);
    }
}

double guarded(const char* name, const Tensor& loss, int batch_size) {
    const LossReport report = make_loss_report(name, loss.value(), batch_size);
    if (std::abs(report.value) > kDivergenceGuard)
        throw DivergenceError("loss '" + std::string(name) + "' exploded to " +
                              std::to_string(report.value));
    return report.value;
}

struct MeanTracker {
    double sum = 0.0;
    long count = 0;
    void add(double v) {
        sum += v;
        ++count;
    }
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
};

// Accuracy/agreement/histogram block shared by the adaptation loops. Label
// access happens only here, with the audit disarmed: this is evaluation,
// not training signal.
void fill_adapt_metrics(EpochMetrics& em, const BaitModel& model, const UnlabeledDataset& target) {
    target.disarm_label_audit();
    if (target.has_hidden_labels()) {
        em.accuracy["anchor"] =
            evaluate(model, target.features(), target.hidden_labels(),
                     target.hidden_num_classes(), Head::anchor)
                .accuracy;
        if (model.has_bait())
            em.accuracy["bait"] = evaluate(model, target.features(), target.hidden_labels(),
                                           target.hidden_num_classes(), Head::bait)
                                      .accuracy;
    }
    if (model.has_bait()) em.agreement = agreement(model, target.features());
    em.pred_histogram = prediction_histogram(model, target.features(), Head::anchor);
}

int effective_batch_size(int requested, int n) { return std::min(requested, n); }

}  // namespace

AdaptMode parse_adapt_mode(const std::string& s) {
    if (s == "bait") return AdaptMode::bait;
    if (s == "bait_no_split") return AdaptMode::bait_no_split;
    if (s == "bait_no_cb") return AdaptMode::bait_no_cb;
    if (s == "single_cb") return AdaptMode::single_classifier_cb;
    throw ConfigError("unknown adaptation mode '" + s +
                      "' (expected bait, bait_no_split, bait_no_cb or single_cb)");
}

TauSchedule parse_tau_schedule(const std::string& s) {
    if (s == "constant") return TauSchedule::constant;
    if (s == "decay") return TauSchedule::linear_decay_to_zero;
    throw ConfigError("unknown tau schedule '" + s + "' (expected constant or decay)");
}

std::string to_string(AdaptMode mode) {
    switch (mode) {
        case AdaptMode::bait: return "bait";
        case AdaptMode::bait_no_split: return "bait_no_split";
        case AdaptMode::bait_no_cb: return "bait_no_cb";
        case AdaptMode::single_classifier_cb: return "single_cb";
    }
    return "?";
}

std::string to_string(TauSchedule schedule) {
    return schedule == TauSchedule::constant ? "constant" : "decay";
}

void TrainConfig::validate() const {
    if (lr_source <= 0.0 || lr_adapt <= 0.0) throw ConfigError("learning rates must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs_source < 0 || epochs_adapt < 0) throw ConfigError("epoch counts must be >= 0");
    if (split_percentile <= 0.0 || split_percentile >= 1.0)
        throw ConfigError("split_percentile must lie in (0, 1)");
    if (cb_weight < 0.0) throw ConfigError("cb_weight must be >= 0");
    if (feature_dim < 1) throw ConfigError("feature_dim must be >= 1");
    for (int w : hidden_widths)
        if (w < 1) throw ConfigError("hidden widths must be >= 1");
}

std::vector<int> TrainConfig::extractor_widths(int input_dim) const {
    std::vector<int> widths{input_dim};
    widths.insert(widths.end(), hidden_widths.begin(), hidden_widths.end());
    widths.push_back(feature_dim);
    return widths;
}

SgdMomentum::SgdMomentum(std::vector<Tensor> params, double lr, double momentum)
    : lr_(lr), momentum_(momentum) {
    for (auto& p : params)
        slots_.push_back({p, std::vector<double>(static_cast<std::size_t>(p.size()), 0.0)});
}

void SgdMomentum::step() {
    for (auto& slot : slots_) {
        if (!slot.param.has_grad()) continue;
        const auto& g = slot.param.grad();
        auto& w = slot.param.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            slot.velocity[i] = momentum_ * slot.velocity[i] + g[i];
            w[i] -= lr_ * slot.velocity[i];
        }
    }
}

void SgdMomentum::zero_grad() {
    for (auto& slot : slots_) slot.param.clear_grad();
}

std::string EpochMetrics::to_json_line() const {
    nlohmann::json j;
    j["epoch"] = epoch;
    j["phase"] = phase;
    j["domain_tag"] = domain_tag;
    j["losses"] = losses;
    j["accuracy"] = accuracy;
    if (agreement) j["agreement"] = *agreement;
    j["pred_histogram"] = pred_histogram;
    return j.dump();
}

EpochMetrics EpochMetrics::from_json_line(const std::string& line) {
    const nlohmann::json j = nlohmann::json::parse(line);
    EpochMetrics m;
    m.epoch = j.at("epoch").get<int>();
    m.phase = j.at("phase").get<std::string>();
    m.domain_tag = j.at("domain_tag").get<std::string>();
    m.losses = j.at("losses").get<std::map<std::string, double>>();
    m.accuracy = j.at("accuracy").get<std::map<std::string, double>>();
    if (j.contains("agreement")) m.agreement = j["agreement"].get<double>();
    m.pred_histogram = j.at("pred_histogram").get<std::vector<long>>();
    return m;
}

MetricsWriter::MetricsWriter(const std::string& path) : path_(path) {}

void MetricsWriter::append(const EpochMetrics& m) {
    std::ofstream out(path_, std::ios::app);
    if (!out) throw IoError("cannot append to metrics log: " + path_);
    out << m.to_json_line() << '\n';
}

double tau_for_step(TauSchedule schedule, long step, long total_steps,
                    const std::vector<double>& batch_entropies, double percentile) {
    if (total_steps <= 0) throw DomainError("tau_for_step: total_steps must be > 0");
    const double q = quantile(batch_entropies, percentile);
    if (schedule == TauSchedule::constant) return q;
    const double remaining = 1.0 - static_cast<double>(step) / static_cast<double>(total_steps);
    return q * std::max(remaining, 0.0);
}

TrainResult train_source(BaitModel& model, const LabeledDataset& source, const TrainConfig& cfg,
                         const MetricsSink& sink) {
    cfg.validate();
    if (source.dim() != model.input_dim())
        throw ShapeError("train_source: data is " + std::to_string(source.dim()) +
                         "-D but the model takes " + std::to_string(model.input_dim()) + "-D");
    if (source.num_classes > model.num_classes())
        throw ConfigError("train_source: data has " + std::to_string(source.num_classes) +
                          " classes but the model has " + std::to_string(model.num_classes()));

    std::vector<Tensor> params = model.extractor_params();
    for (const auto& p : model.anchor_params()) params.push_back(p);
    set_trainable(params, true);
    SgdMomentum opt(params, cfg.lr_source, cfg.momentum);

    BatchIterator batches(source.size(), effective_batch_size(cfg.batch_size, source.size()),
                          cfg.seed ^ kSourceBatchStream, /*drop_last=*/false);
    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs_source; ++epoch) {
        if (epoch > 0) batches.start_epoch();
        MeanTracker ce;
        while (auto idx = batches.next()) {
            const Tensor x = gather_rows(source.features, *idx);
            const std::vector<int> y = gather_labels(source.labels, *idx);
            Tape tape;
            const Tensor probs = model.predict(tape, x, Head::anchor);
            const Tensor loss = cross_entropy_source(tape, probs, y);
            ce.add(guarded("cross_entropy", loss, static_cast<int>(idx->size())));
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
        }
        EpochMetrics em;
        em.epoch = epoch;
        em.phase = "source";
        em.domain_tag = source.domain_tag;
        em.losses["cross_entropy"] = ce.mean();
        em.accuracy["anchor"] = evaluate(model, source, Head::anchor).accuracy;
        em.pred_histogram = prediction_histogram(model, source.features, Head::anchor);
        if (sink) sink(em);
        result.metrics.push_back(std::move(em));
    }
    return result;
}

TrainResult adapt_bait(BaitModel& model, const UnlabeledDataset& target, const TrainConfig& cfg,
                       const MetricsSink& sink, const StepObserver& observer) {
    cfg.validate();
    if (cfg.mode == AdaptMode::single_classifier_cb)
        throw ConfigError("adapt_bait does not handle the single-classifier mode");
    if (target.dim() != model.input_dim())
        throw ShapeError("adapt: target data is " + std::to_string(target.dim()) +
                         "-D but the model takes " + std::to_string(model.input_dim()) + "-D");

    model.init_bait_from_anchor();
    nudge_bait_weight(model, cfg.seed);
    freeze(model.anchor_params());
    const std::vector<Tensor> f_params = model.extractor_params();
    const std::vector<Tensor> c2_params = model.bait_params();
    SgdMomentum opt_c2(c2_params, cfg.lr_adapt, cfg.momentum);
    SgdMomentum opt_f(f_params, cfg.lr_adapt, cfg.momentum);

    const int batch_size = effective_batch_size(cfg.batch_size, target.size());
    if (batch_size < 2) throw ConfigError("adaptation needs batches of at least 2 samples");
    BatchIterator batches(target.size(), batch_size, cfg.seed ^ kAdaptBatchStream,
                          /*drop_last=*/true);
    const long total_steps =
        static_cast<long>(cfg.epochs_adapt) * batches.batches_per_epoch();

    TrainResult result;
    long step = 0;
    for (int epoch = 0; epoch < cfg.epochs_adapt; ++epoch) {
        if (epoch > 0) batches.start_epoch();
        MeanTracker cast_mean, bite_mean, cb_mean;
        target.arm_label_audit();
        while (auto idx = batches.next()) {
            const int n = static_cast<int>(idx->size());
            if (n < 2) {
                std::cerr << "adapt: skipping batch of size " << n << " (cannot split)\n";
                continue;
            }
            const Tensor x = gather_rows(target.features(), *idx);

            // step 1: cast the bait. Only the bait head trains; the anchor
            // predictions act as constants.
            freeze(f_params);
            set_trainable(c2_params, true);
            {
                Tape tape;
                const Tensor p1 = model.predict(tape, x, Head::anchor);
                const Tensor p2 = model.predict(tape, x, Head::bait);
                BatchSplit split;
                if (cfg.mode == AdaptMode::bait_no_split) {
                    // no splitting: the whole batch counts as uncertain
                    split.tau = -1.0;
                    for (int i = 0; i < n; ++i) split.uncertain.push_back(i);
                } else {
                    const std::vector<double> ents = row_entropies(p1);
                    const double tau = tau_for_step(cfg.tau_schedule, step, total_steps, ents,
                                                    cfg.split_percentile);
                    split = split_by_tau(ents, tau);
                }
                const Tensor loss = cast_loss(tape, p1, p2, split);
                cast_mean.add(guarded("cast", loss, n));
                opt_c2.zero_grad();
                tape.backward(loss);
                opt_c2.step();
            }
            if (observer) observer({AdaptStepEvent::Phase::cast_step, epoch, step});

            // step 2: bite the bait. Both heads freeze; the extractor pulls
            // features toward the two prototype sets. The objective takes the
            // bite term per sample so its scale does not swamp the
            // batch-size-invariant class-balance term.
            freeze(c2_params);
            set_trainable(f_params, true);
            {
                Tape tape;
                const Tensor p1 = model.predict(tape, x, Head::anchor);
                const Tensor p2 = model.predict(tape, x, Head::bait);
                const Tensor bite = bite_loss(tape, p1, p2);
                bite_mean.add(guarded("bite", bite, n));
                Tensor loss = tape.scale(bite, 1.0 / n);
                if (cfg.mode != AdaptMode::bait_no_cb && cfg.cb_weight > 0.0) {
                    const Tensor cb = class_balance_loss(tape, p1, p2);
                    cb_mean.add(guarded("class_balance", cb, n));
                    loss = tape.add(loss, tape.scale(cb, cfg.cb_weight));
                }
                opt_f.zero_grad();
                tape.backward(loss);
                opt_f.step();
            }
            if (observer) observer({AdaptStepEvent::Phase::bite_step, epoch, step});
            ++step;
        }
        target.disarm_label_audit();

        EpochMetrics em;
        em.epoch = epoch;
        em.phase = "adapt";
        em.domain_tag = target.domain_tag();
        em.losses["cast"] = cast_mean.mean();
        em.losses["bite"] = bite_mean.mean();
        if (cb_mean.count) em.losses["class_balance"] = cb_mean.mean();
        fill_adapt_metrics(em, model, target);
        if (sink) sink(em);
        result.metrics.push_back(std::move(em));
    }
    set_trainable(c2_params, true);  // leave both groups trainable, anchor stays frozen
    return result;
}

TrainResult adapt_single_classifier(BaitModel& model, const UnlabeledDataset& target,
                                    const TrainConfig& cfg, const MetricsSink& sink) {
    cfg.validate();
    if (target.dim() != model.input_dim())
        throw ShapeError("adapt: target data is " + std::to_string(target.dim()) +
                         "-D but the model takes " + std::to_string(model.input_dim()) + "-D");

    freeze(model.anchor_params());
    const std::vector<Tensor> f_params = model.extractor_params();
    set_trainable(f_params, true);
    SgdMomentum opt_f(f_params, cfg.lr_adapt, cfg.momentum);

    const int batch_size = effective_batch_size(cfg.batch_size, target.size());
    if (batch_size < 2) throw ConfigError("adaptation needs batches of at least 2 samples");
    BatchIterator batches(target.size(), batch_size, cfg.seed ^ kAdaptBatchStream,
                          /*drop_last=*/true);

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs_adapt; ++epoch) {
        if (epoch > 0) batches.start_epoch();
        MeanTracker cb_mean;
        target.arm_label_audit();
        while (auto idx = batches.next()) {
            const int n = static_cast<int>(idx->size());
            if (n < 2) {
                std::cerr << "adapt: skipping batch of size " << n << "\n";
                continue;
            }
            const Tensor x = gather_rows(target.features(), *idx);
            Tape tape;
            const Tensor p1 = model.predict(tape, x, Head::anchor);
            const Tensor loss = class_balance_term(tape, p1);
            cb_mean.add(guarded("class_balance", loss, n));
            opt_f.zero_grad();
            tape.backward(loss);
            opt_f.step();
        }
        target.disarm_label_audit();

        EpochMetrics em;
        em.epoch = epoch;
        em.phase = "adapt";
        em.domain_tag = target.domain_tag();
        em.losses["class_balance"] = cb_mean.mean();
        fill_adapt_metrics(em, model, target);
        if (sink) sink(em);
        result.metrics.push_back(std::move(em));
    }
    return result;
}

TrainResult adapt(BaitModel& model, const UnlabeledDataset& target, const TrainConfig& cfg,
                  const MetricsSink& sink, const StepObserver& observer) {
    if (cfg.mode == AdaptMode::single_classifier_cb)
        return adapt_single_classifier(model, target, cfg, sink);
    return adapt_bait(model, target, cfg, sink, observer);
}

}  // namespace bait
