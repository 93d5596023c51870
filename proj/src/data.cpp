#include "bait/data.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "bait/errors.hpp"

namespace bait {

UnlabeledDataset::UnlabeledDataset(Tensor features, std::string domain_tag)
    : features_(std::move(features)), domain_tag_(std::move(domain_tag)) {}

UnlabeledDataset UnlabeledDataset::from_labeled(const LabeledDataset& ds) {
    UnlabeledDataset u;
    u.features_ = ds.features;
    u.domain_tag_ = ds.domain_tag;
    u.hidden_labels_ = ds.labels;
    u.hidden_num_classes_ = ds.num_classes;
    return u;
}

const std::vector<int>& UnlabeledDataset::hidden_labels() const {
    if (audit_armed_) audit_tripped_ = true;
    if (!hidden_labels_) throw Error("dataset '" + domain_tag_ + "' has no hidden labels");
    return *hidden_labels_;
}

LabeledDataset make_moons(int n_per_class, double noise_std, std::uint64_t seed,
                          std::string domain_tag) {
    if (n_per_class < 1) throw DomainError("make_moons: n_per_class must be >= 1");
    if (noise_std < 0.0) throw DomainError("make_moons: noise_std must be >= 0");
    Rng rng(seed);
    const int n = 2 * n_per_class;
    Tensor feats = Tensor::zeros({n, 2});
    std::vector<int> labels(n);
    for (int cls = 0; cls < 2; ++cls) {
        for (int i = 0; i < n_per_class; ++i) {
            const double t = n_per_class == 1
                                 ? 0.0
                                 : std::numbers::pi * i / static_cast<double>(n_per_class - 1);
            double x = cls == 0 ? std::cos(t) : 1.0 - std::cos(t);
            double y = cls == 0 ? std::sin(t) : 0.5 - std::sin(t);
            if (noise_std > 0.0) {
                x += rng.gaussian(0.0, noise_std);
                y += rng.gaussian(0.0, noise_std);
            }
            const int row = cls * n_per_class + i;
            feats.at(row, 0) = x;
            feats.at(row, 1) = y;
            labels[row] = cls;
        }
    }
    return {std::move(feats), std::move(labels), std::move(domain_tag), 2};
}

LabeledDataset rotate2d(const LabeledDataset& ds, double degrees) {
    if (ds.dim() != 2)
        throw ShapeError("rotate2d: features must be 2-D points, got " +
                         shape_str(ds.features.shape()));
    const double rad = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(rad), s = std::sin(rad);
    LabeledDataset out = ds;
    out.features = ds.features.clone();
    for (int i = 0; i < ds.size(); ++i) {
        const double x = ds.features.at(i, 0), y = ds.features.at(i, 1);
        out.features.at(i, 0) = c * x - s * y;
        out.features.at(i, 1) = s * x + c * y;
    }
    return out;
}

LabeledDataset load_features_csv(const std::string& path, bool has_labels,
                                 std::string domain_tag) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open CSV: " + path);
    std::vector<double> values;
    std::vector<int> labels;
    int cols = -1, line_no = 0, rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> cells;
        std::size_t pos = 0;
        while (pos <= line.size()) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            const std::string cell = line.substr(pos, comma - pos);
            double v = 0.0;
            const auto* first = cell.data();
            const auto* last = cell.data() + cell.size();
            const auto [ptr, ec] = std::from_chars(first, last, v);
            if (ec != std::errc() || ptr != last)
                throw IoError(path + ": line " + std::to_string(line_no) +
                              ": non-numeric cell '" + cell + "'");
            cells.push_back(v);
            pos = comma + 1;
        }
        const int want = has_labels ? 2 : 1;  // at least one feature (+ label)
        if (static_cast<int>(cells.size()) < want)
            throw IoError(path + ": line " + std::to_string(line_no) + ": too few columns");
        if (cols == -1)
            cols = static_cast<int>(cells.size());
        else if (static_cast<int>(cells.size()) != cols)
            throw IoError(path + ": line " + std::to_string(line_no) + ": ragged row (" +
                          std::to_string(cells.size()) + " columns, expected " +
                          std::to_string(cols) + ")");
        if (has_labels) {
            const double raw = cells.back();
            cells.pop_back();
            const int label = static_cast<int>(std::llround(raw));
            if (raw != static_cast<double>(label))
                throw IoError(path + ": line " + std::to_string(line_no) +
                              ": label column is not an integer");
            if (label < 0)
                throw IoError(path + ": line " + std::to_string(line_no) + ": negative label " +
                              std::to_string(label));
            labels.push_back(label);
        }
        values.insert(values.end(), cells.begin(), cells.end());
        ++rows;
    }
    if (rows == 0) throw IoError(path + ": no data rows");
    const int d = has_labels ? cols - 1 : cols;
    LabeledDataset ds;
    ds.features = Tensor::from_values({rows, d}, std::move(values));
    ds.labels = std::move(labels);
    ds.domain_tag = domain_tag.empty() ? path : std::move(domain_tag);
    ds.num_classes = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
    return ds;
}

void save_features_csv(const LabeledDataset& ds, const std::string& path, bool with_labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open CSV for writing: " + path);
    out.precision(17);
    for (int i = 0; i < ds.size(); ++i) {
        for (int j = 0; j < ds.dim(); ++j) {
            if (j) out << ',';
            out << ds.features.at(i, j);
        }
        if (with_labels) {
            if (ds.labels.empty()) throw Error("save_features_csv: dataset has no labels");
            out << ',' << ds.labels[i];
        }
        out << '\n';
    }
    if (!out) throw IoError("CSV write failed: " + path);
}

BatchIterator::BatchIterator(int n, int batch_size, std::uint64_t seed, bool drop_last)
    : n_(n), batch_size_(batch_size), drop_last_(drop_last), rng_(seed) {
    if (n < 1) throw DomainError("BatchIterator: empty dataset");
    if (batch_size < 1) throw DomainError("BatchIterator: batch_size must be >= 1");
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0);
    start_epoch();
}

void BatchIterator::start_epoch() {
    shuffle(order_, rng_);
    cursor_ = 0;
}

int BatchIterator::batches_per_epoch() const {
    return drop_last_ ? n_ / batch_size_ : (n_ + batch_size_ - 1) / batch_size_;
}

std::optional<std::vector<int>> BatchIterator::next() {
    if (cursor_ >= n_) return std::nullopt;
    const int remaining = n_ - cursor_;
    if (drop_last_ && remaining < batch_size_) return std::nullopt;
    const int take = std::min(batch_size_, remaining);
    std::vector<int> batch(order_.begin() + cursor_, order_.begin() + cursor_ + take);
    cursor_ += take;
    return batch;
}

Tensor gather_rows(const Tensor& features, const std::vector<int>& indices) {
    const int d = features.cols();
    Tensor out = Tensor::zeros({static_cast<int>(indices.size()), d});
    for (int i = 0; i < static_cast<int>(indices.size()); ++i)
        for (int j = 0; j < d; ++j) out.at(i, j) = features.at(indices[i], j);
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& labels, const std::vector<int>& indices) {
    std::vector<int> out;
    out.reserve(indices.size());
    for (int i : indices) out.push_back(labels[i]);
    return out;
}

}  // namespace bait
