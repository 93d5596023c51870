#pragma once

#include <string>
#include <vector>

#include "bait/data.hpp"
#include "bait/model.hpp"

namespace bait {

// K x K counts; rows are ground truth, columns are predictions.
struct ConfusionMatrix {
    int num_classes = 0;
    std::vector<long> counts;  // row-major

    long& at(int truth, int predicted) { return counts[truth * num_classes + predicted]; }
    long at(int truth, int predicted) const { return counts[truth * num_classes + predicted]; }
    long total() const;
    long trace() const;
    double accuracy() const { return static_cast<double>(trace()) / static_cast<double>(total()); }

    std::string to_json(const std::string& head, const std::string& domain_tag) const;
};

struct EvalResult {
    double accuracy = 0.0;
    ConfusionMatrix confusion;
};

// argmax of the head's probabilities per row
std::vector<int> predict_classes(const BaitModel& model, const Tensor& features, Head head);

EvalResult evaluate(const BaitModel& model, const Tensor& features,
                    const std::vector<int>& labels, int num_classes, Head head);
EvalResult evaluate(const BaitModel& model, const LabeledDataset& ds, Head head);

// Fraction of samples where the two heads agree on the argmax class.
double agreement(const BaitModel& model, const Tensor& features);

// Counts of anchor-head predictions per class.
std::vector<long> prediction_histogram(const BaitModel& model, const Tensor& features, Head head);

// Axis-aligned window for boundary export; defaults to the data bounding
// box padded by 20% on each side.
struct GridBounds {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
};
GridBounds padded_bounds(const Tensor& features, double pad_fraction = 0.2);

// Evaluates both heads over a resolution x resolution mesh and writes CSV
// rows x,y,class_c1,prob_c1,class_c2,prob_c2. For a model without a bait
// head the anchor columns are duplicated (the bait head starts as an exact
// copy of the anchor, so this is its pre-adaptation state).
void export_boundary_grid(const BaitModel& model, const GridBounds& bounds, int resolution,
                          const std::string& csv_path);

// Converts a metrics.jsonl into a tidy CSV: one row per epoch per head with
// accuracy, agreement and every loss column seen in the log.
void export_curves(const std::string& metrics_jsonl_path, const std::string& csv_path);

}  // namespace bait
