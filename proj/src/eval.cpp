#include "bait/eval.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "bait/errors.hpp"
#include "bait/trainer.hpp"
#include "json.hpp"

namespace bait {

long ConfusionMatrix::total() const {
    long t = 0;
    for (long c : counts) t += c;
    return t;
}

long ConfusionMatrix::trace() const {
    long t = 0;
    for (int i = 0; i < num_classes; ++i) t += at(i, i);
    return t;
}

std::string ConfusionMatrix::to_json(const std::string& head, const std::string& domain_tag) const {
    nlohmann::json j;
    j["num_classes"] = num_classes;
    j["counts"] = counts;
    j["accuracy"] = accuracy();
    j["head"] = head;
    j["domain_tag"] = domain_tag;
    return j.dump(2);
}

std::vector<int> predict_classes(const BaitModel& model, const Tensor& features, Head head) {
    const Tensor probs = model.predict_eval(features, head);
    std::vector<int> out(probs.rows());
    for (int i = 0; i < probs.rows(); ++i) {
        int arg = 0;
        for (int j = 1; j < probs.cols(); ++j)
            if (probs.at(i, j) > probs.at(i, arg)) arg = j;
        out[i] = arg;
    }
    return out;
}

EvalResult evaluate(const BaitModel& model, const Tensor& features, const std::vector<int>& labels,
                    int num_classes, Head head) {
    if (static_cast<int>(labels.size()) != features.rows())
        throw ShapeError("evaluate: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " rows");
    const std::vector<int> preds = predict_classes(model, features, head);
    ConfusionMatrix cm;
    cm.num_classes = std::max(num_classes, model.num_classes());
    cm.counts.assign(static_cast<std::size_t>(cm.num_classes) * cm.num_classes, 0);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= cm.num_classes)
            throw DomainError("evaluate: label " + std::to_string(labels[i]) + " out of range");
        ++cm.at(labels[i], preds[i]);
    }
    return {cm.accuracy(), std::move(cm)};
}

EvalResult evaluate(const BaitModel& model, const LabeledDataset& ds, Head head) {
    return evaluate(model, ds.features, ds.labels, ds.num_classes, head);
}

double agreement(const BaitModel& model, const Tensor& features) {
    const std::vector<int> a = predict_classes(model, features, Head::anchor);
    const std::vector<int> b = predict_classes(model, features, Head::bait);
    long same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

std::vector<long> prediction_histogram(const BaitModel& model, const Tensor& features, Head head) {
    std::vector<long> hist(model.num_classes(), 0);
    for (int c : predict_classes(model, features, head)) ++hist[c];
    return hist;
}

GridBounds padded_bounds(const Tensor& features, double pad_fraction) {
    if (features.cols() != 2)
        throw ShapeError("padded_bounds: expected 2-D points, got " + shape_str(features.shape()));
    GridBounds b;
    b.xmin = b.xmax = features.at(0, 0);
    b.ymin = b.ymax = features.at(0, 1);
    for (int i = 0; i < features.rows(); ++i) {
        b.xmin = std::min(b.xmin, features.at(i, 0));
        b.xmax = std::max(b.xmax, features.at(i, 0));
        b.ymin = std::min(b.ymin, features.at(i, 1));
        b.ymax = std::max(b.ymax, features.at(i, 1));
    }
    const double dx = (b.xmax - b.xmin) * pad_fraction;
    const double dy = (b.ymax - b.ymin) * pad_fraction;
    return {b.xmin - dx, b.xmax + dx, b.ymin - dy, b.ymax + dy};
}

void export_boundary_grid(const BaitModel& model, const GridBounds& bounds, int resolution,
                          const std::string& csv_path) {
    if (model.input_dim() != 2)
        throw ShapeError("boundary export supports 2-D input models only, this one takes " +
                         std::to_string(model.input_dim()) + " dims");
    if (resolution < 2) throw DomainError("boundary export needs resolution >= 2");

    Tensor mesh = Tensor::zeros({resolution * resolution, 2});
    for (int iy = 0; iy < resolution; ++iy) {
        const double y = bounds.ymin + (bounds.ymax - bounds.ymin) * iy / (resolution - 1);
        for (int ix = 0; ix < resolution; ++ix) {
            const double x = bounds.xmin + (bounds.xmax - bounds.xmin) * ix / (resolution - 1);
            mesh.at(iy * resolution + ix, 0) = x;
            mesh.at(iy * resolution + ix, 1) = y;
        }
    }
    const Tensor p1 = model.predict_eval(mesh, Head::anchor);
    const Tensor p2 = model.has_bait() ? model.predict_eval(mesh, Head::bait) : p1;

    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("cannot open boundary CSV for writing: " + csv_path);
    out.precision(17);
    out << "x,y,class_c1,prob_c1,class_c2,prob_c2\n";
    for (int i = 0; i < mesh.rows(); ++i) {
        int a1 = 0, a2 = 0;
        for (int j = 1; j < p1.cols(); ++j) {
            if (p1.at(i, j) > p1.at(i, a1)) a1 = j;
            if (p2.at(i, j) > p2.at(i, a2)) a2 = j;
        }
        out << mesh.at(i, 0) << ',' << mesh.at(i, 1) << ',' << a1 << ',' << p1.at(i, a1) << ','
            << a2 << ',' << p2.at(i, a2) << '\n';
    }
    if (!out) throw IoError("boundary CSV write failed: " + csv_path);
}

void export_curves(const std::string& metrics_jsonl_path, const std::string& csv_path) {
    std::ifstream in(metrics_jsonl_path);
    if (!in) throw IoError("cannot open metrics log: " + metrics_jsonl_path);

    std::vector<EpochMetrics> entries;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            entries.push_back(EpochMetrics::from_json_line(line));
        } catch (const std::exception& e) {
            throw IoError(metrics_jsonl_path + ": line " + std::to_string(line_no) + ": " +
                          e.what());
        }
    }
    if (entries.empty()) throw IoError(metrics_jsonl_path + ": no metric entries");

    std::set<std::string> loss_names;
    for (const auto& m : entries)
        for (const auto& [name, value] : m.losses) loss_names.insert(name);

    std::ofstream out(csv_path, std::ios::trunc);
    if (!out) throw IoError("cannot open curves CSV for writing: " + csv_path);
    out.precision(17);
    out << "epoch,head,accuracy,agreement";
    for (const auto& name : loss_names) out << ",loss_" << name;
    out << '\n';
    for (const auto& m : entries) {
        for (const auto& [head, acc] : m.accuracy) {
            out << m.epoch << ',' << head << ',' << acc << ',';
            if (m.agreement) out << *m.agreement;
            for (const auto& name : loss_names) {
                out << ',';
                if (auto it = m.losses.find(name); it != m.losses.end()) out << it->second;
            }
            out << '\n';
        }
    }
    if (!out) throw IoError("curves CSV write failed: " + csv_path);
}

}  // namespace bait
