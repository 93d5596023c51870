// Python bindings for the BAIT training engine. Matrices cross the boundary
// as nested lists/vectors; heavy lifting stays in C++.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>

#include "bait/data.hpp"
#include "bait/eval.hpp"
#include "bait/losses.hpp"
#include "bait/model.hpp"
#include "bait/trainer.hpp"
#include "bait/version.hpp"

namespace py = pybind11;
using namespace bait;

namespace {

using Matrix = std::vector<std::vector<double>>;

Tensor to_tensor(const Matrix& rows) { return Tensor::matrix(rows); }

Matrix to_matrix(const Tensor& t) {
    Matrix out(t.rows(), std::vector<double>(t.cols()));
    for (int i = 0; i < t.rows(); ++i)
        for (int j = 0; j < t.cols(); ++j) out[i][j] = t.at(i, j);
    return out;
}

py::dict metrics_dict(const EpochMetrics& m) {
    py::dict d;
    d["epoch"] = m.epoch;
    d["phase"] = m.phase;
    d["domain_tag"] = m.domain_tag;
    d["losses"] = m.losses;
    d["accuracy"] = m.accuracy;
    if (m.agreement) d["agreement"] = *m.agreement;
    d["pred_histogram"] = m.pred_histogram;
    return d;
}

py::list metrics_list(const TrainResult& r) {
    py::list out;
    for (const auto& m : r.metrics) out.append(metrics_dict(m));
    return out;
}

LabeledDataset labeled(const Matrix& feats, const std::vector<int>& labels,
                       const std::string& tag) {
    LabeledDataset ds;
    ds.features = to_tensor(feats);
    ds.labels = labels;
    ds.domain_tag = tag;
    ds.num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    return ds;
}

}  // namespace

PYBIND11_MODULE(baitpy, m) {
    m.doc() = "Source-free domain adaptation trainer: frozen anchor classifier, learnable bait "
              "classifier, two-step per-batch alternation";
    m.attr("__version__") = kVersion;

    // translators run most-recent-first: the base goes in first so the
    // derived divergence type is not shadowed
    py::register_exception<Error>(m, "BaitError");
    py::register_exception<DivergenceError>(m, "DivergenceError");

    py::enum_<Head>(m, "Head")
        .value("anchor", Head::anchor)
        .value("bait", Head::bait);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lr_source", &TrainConfig::lr_source)
        .def_readwrite("lr_adapt", &TrainConfig::lr_adapt)
        .def_readwrite("momentum", &TrainConfig::momentum)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs_source", &TrainConfig::epochs_source)
        .def_readwrite("epochs_adapt", &TrainConfig::epochs_adapt)
        .def_readwrite("split_percentile", &TrainConfig::split_percentile)
        .def_readwrite("cb_weight", &TrainConfig::cb_weight)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("hidden_widths", &TrainConfig::hidden_widths)
        .def_readwrite("feature_dim", &TrainConfig::feature_dim)
        .def_property(
            "mode", [](const TrainConfig& c) { return to_string(c.mode); },
            [](TrainConfig& c, const std::string& s) { c.mode = parse_adapt_mode(s); })
        .def_property(
            "tau_schedule", [](const TrainConfig& c) { return to_string(c.tau_schedule); },
            [](TrainConfig& c, const std::string& s) { c.tau_schedule = parse_tau_schedule(s); });

    py::class_<BaitModel>(m, "BaitModel")
        .def_static(
            "create",
            [](const std::vector<int>& widths, int num_classes, std::uint64_t seed) {
                return BaitModel::create(widths, num_classes, seed);
            },
            py::arg("widths"), py::arg("num_classes"), py::arg("seed") = 0)
        .def_property_readonly("input_dim", &BaitModel::input_dim)
        .def_property_readonly("feature_dim", &BaitModel::feature_dim)
        .def_property_readonly("num_classes", &BaitModel::num_classes)
        .def_property_readonly("has_bait", &BaitModel::has_bait)
        .def("init_bait_from_anchor", &BaitModel::init_bait_from_anchor)
        .def(
            "predict",
            [](const BaitModel& model, const Matrix& x, Head head) {
                return to_matrix(model.predict_eval(to_tensor(x), head));
            },
            py::arg("x"), py::arg("head") = Head::anchor,
            "Class probabilities for a batch of feature rows")
        .def("clone", &BaitModel::clone)
        .def("save", [](const BaitModel& model, const std::string& path) {
            save_checkpoint(model, path);
        })
        .def_static("load", [](const std::string& path) { return load_checkpoint(path).model; });

    m.def(
        "make_moons",
        [](int n_per_class, double noise_std, std::uint64_t seed) {
            LabeledDataset ds = make_moons(n_per_class, noise_std, seed);
            return py::make_tuple(to_matrix(ds.features), ds.labels);
        },
        py::arg("n_per_class") = 300, py::arg("noise_std") = 0.1, py::arg("seed") = 0,
        "Two inter-twinning moon arcs with Gaussian noise; returns (features, labels)");

    m.def(
        "rotate2d",
        [](const Matrix& feats, double degrees) {
            LabeledDataset ds;
            ds.features = to_tensor(feats);
            ds.labels.assign(feats.size(), 0);
            ds.num_classes = 2;
            return to_matrix(rotate2d(ds, degrees).features);
        },
        py::arg("features"), py::arg("degrees"), "Rotate 2-D points about the origin");

    m.def(
        "train_source",
        [](BaitModel& model, const Matrix& feats, const std::vector<int>& labels,
           const TrainConfig& cfg) {
            return metrics_list(train_source(model, labeled(feats, labels, "source"), cfg));
        },
        py::arg("model"), py::arg("features"), py::arg("labels"), py::arg("config"),
        "Supervised training of extractor + anchor head; returns per-epoch metrics");

    m.def(
        "adapt",
        [](BaitModel& model, const Matrix& feats, const TrainConfig& cfg,
           const std::optional<std::vector<int>>& eval_labels) {
            UnlabeledDataset target =
                eval_labels ? UnlabeledDataset::from_labeled(labeled(feats, *eval_labels, "target"))
                            : UnlabeledDataset(to_tensor(feats), "target");
            return metrics_list(adapt(model, target, cfg));
        },
        py::arg("model"), py::arg("features"), py::arg("config"),
        py::arg("eval_labels") = std::nullopt,
        "Adapt a source-trained model to unlabeled target features. eval_labels, when given, "
        "feed per-epoch accuracy metrics only, never the losses");

    m.def(
        "evaluate",
        [](const BaitModel& model, const Matrix& feats, const std::vector<int>& labels,
           Head head) {
            const EvalResult res = evaluate(model, labeled(feats, labels, "eval"), head);
            py::dict d;
            d["accuracy"] = res.accuracy;
            d["confusion"] = res.confusion.counts;
            d["num_classes"] = res.confusion.num_classes;
            return d;
        },
        py::arg("model"), py::arg("features"), py::arg("labels"), py::arg("head") = Head::anchor);

    m.def(
        "agreement",
        [](const BaitModel& model, const Matrix& feats) {
            return agreement(model, to_tensor(feats));
        },
        py::arg("model"), py::arg("features"),
        "Fraction of rows where the anchor and bait heads pick the same class");

    m.def(
        "entropy", [](const std::vector<double>& p) { return entropy(p); }, py::arg("p"),
        "Shannon entropy (nats) of one probability row");
    m.def(
        "symmetric_kl",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return symmetric_kl(a, b);
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "split_entropies",
        [](const Matrix& probs, double percentile) {
            const BatchSplit s = split_batch(to_tensor(probs), percentile);
            return py::make_tuple(s.certain, s.uncertain, s.tau);
        },
        py::arg("probs"), py::arg("percentile") = 0.5,
        "Partition batch rows into (certain, uncertain, tau) by prediction entropy");
}
