#include "bait/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "bait/errors.hpp"
#include "json.hpp"

namespace bait {

namespace {

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.values()) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

MlpFeatureExtractor::MlpFeatureExtractor(std::vector<int> widths, Rng& rng)
    : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw ConfigError("extractor needs at least input and output widths");
    for (int w : widths_)
        if (w <= 0) throw ConfigError("extractor widths must be positive");
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
        Layer layer;
        layer.weight = uniform_init({widths_[i], widths_[i + 1]}, widths_[i], rng);
        layer.bias = uniform_init({1, widths_[i + 1]}, widths_[i], rng);
        layers_.push_back(std::move(layer));
    }
}

Tensor MlpFeatureExtractor::forward(Tape& tape, const Tensor& x) const {
    if (x.shape().size() != 2 || x.cols() != input_dim()) {
        throw ShapeError("extractor forward: expected [n x " + std::to_string(input_dim()) +
                         "] input, got " + shape_str(x.shape()));
    }
    Tensor h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = tape.add_rowvec(tape.matmul(h, layers_[i].weight), layers_[i].bias);
        if (i + 1 < layers_.size()) h = tape.relu(h);
    }
    return h;
}

std::vector<Tensor> MlpFeatureExtractor::parameters() const {
    std::vector<Tensor> ps;
    for (const auto& layer : layers_) {
        ps.push_back(layer.weight);
        ps.push_back(layer.bias);
    }
    return ps;
}

MlpFeatureExtractor MlpFeatureExtractor::clone() const {
    MlpFeatureExtractor copy;
    copy.widths_ = widths_;
    for (const auto& layer : layers_)
        copy.layers_.push_back({layer.weight.clone(), layer.bias.clone()});
    return copy;
}

WeightNormClassifier::WeightNormClassifier(int num_classes, int feature_dim, Rng& rng) {
    if (num_classes < 2) throw ConfigError("classifier needs at least 2 classes");
    weight_ = uniform_init({num_classes, feature_dim}, feature_dim, rng);
}

Tensor WeightNormClassifier::logits(Tape& tape, const Tensor& feats) const {
    if (feats.shape().size() != 2 || feats.cols() != feature_dim()) {
        throw ShapeError("classifier logits: expected [n x " + std::to_string(feature_dim()) +
                         "] features, got " + shape_str(feats.shape()));
    }
    return tape.matmul(feats, tape.transpose(tape.l2_normalize_rows(weight_)));
}

WeightNormClassifier WeightNormClassifier::clone() const {
    WeightNormClassifier copy;
    copy.weight_ = weight_.clone();
    return copy;
}

BaitModel BaitModel::create(const std::vector<int>& widths, int num_classes, std::uint64_t seed) {
    Rng rng(seed);
    BaitModel m;
    m.extractor = MlpFeatureExtractor(widths, rng);
    m.anchor = WeightNormClassifier(num_classes, widths.back(), rng);
    return m;
}

void BaitModel::init_bait_from_anchor() {
    bait = anchor.clone();
}

std::vector<Tensor> BaitModel::bait_params() const {
    if (!bait) return {};
    return {bait->weight()};
}

std::vector<Tensor> BaitModel::all_params() const {
    std::vector<Tensor> ps = extractor.parameters();
    ps.push_back(anchor.weight());
    if (bait) ps.push_back(bait->weight());
    return ps;
}

Tensor BaitModel::features(Tape& tape, const Tensor& x) const {
    return extractor.forward(tape, x);
}

Tensor BaitModel::logits(Tape& tape, const Tensor& x, Head head) const {
    const Tensor feats = features(tape, x);
    if (head == Head::anchor) return anchor.logits(tape, feats);
    if (!bait) throw Error("bait head requested but not initialized");
    return bait->logits(tape, feats);
}

Tensor BaitModel::predict(Tape& tape, const Tensor& x, Head head) const {
    return tape.softmax_rows(logits(tape, x, head));
}

Tensor BaitModel::predict_eval(const Tensor& x, Head head) const {
    Tape tape;
    return predict(tape, x, head).detach();
}

BaitModel BaitModel::clone() const {
    BaitModel copy;
    copy.extractor = extractor.clone();
    copy.anchor = anchor.clone();
    if (bait) copy.bait = bait->clone();
    return copy;
}

void set_trainable(const std::vector<Tensor>& params, bool trainable) {
    for (auto p : params) p.set_requires_grad(trainable);
}

void freeze(const std::vector<Tensor>& params) {
    set_trainable(params, false);
}

void clear_grads(const std::vector<Tensor>& params) {
    for (auto p : params) p.clear_grad();
}

// ---------------------------------------------------------------------------
// checkpoint i/o

namespace {

void write_buffer(std::ofstream& out, const Tensor& t) {
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(double)));
}

void read_buffer(std::ifstream& in, Tensor t, const std::string& path) {
    in.read(reinterpret_cast<char*>(t.values().data()),
            static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    if (!in) throw IoError("checkpoint truncated: " + path);
}

}  // namespace

void save_checkpoint(const BaitModel& model, const std::string& path, long epoch,
                     const std::string& rng_state) {
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["widths"] = model.extractor.widths();
    header["num_classes"] = model.num_classes();
    header["has_bait"] = model.has_bait();
    header["epoch"] = epoch;
    header["rng_state"] = rng_state;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << header.dump() << '\n';
    for (const auto& p : model.extractor.parameters()) write_buffer(out, p);
    write_buffer(out, model.anchor.weight());
    if (model.has_bait()) write_buffer(out, model.bait->weight());
    if (!out) throw IoError("checkpoint write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line)) throw IoError("checkpoint missing header: " + path);

    nlohmann::json header = nlohmann::json::parse(header_line, nullptr, false);
    if (header.is_discarded()) throw IoError("checkpoint header is not valid JSON: " + path);
    for (const char* key : {"version", "widths", "num_classes", "has_bait", "epoch", "rng_state"}) {
        if (!header.contains(key))
            throw IoError("checkpoint header missing field '" + std::string(key) + "': " + path);
    }
    LoadedCheckpoint loaded;
    try {
        const int version = header["version"].get<int>();
        if (version != kCheckpointVersion) {
            throw IoError("checkpoint version mismatch: file has " + std::to_string(version) +
                          ", expected " + std::to_string(kCheckpointVersion) + ": " + path);
        }
        const auto widths = header["widths"].get<std::vector<int>>();
        const int num_classes = header["num_classes"].get<int>();
        constexpr int kMaxDim = 1 << 20;
        if (widths.size() < 2) throw IoError("checkpoint header has bad widths: " + path);
        for (int w : widths)
            if (w < 1 || w > kMaxDim)
                throw IoError("checkpoint header has implausible width " + std::to_string(w) +
                              ": " + path);
        if (num_classes < 2 || num_classes > kMaxDim)
            throw IoError("checkpoint header has bad class count " + std::to_string(num_classes) +
                          ": " + path);

        loaded.model = BaitModel::create(widths, num_classes, 0);
        if (header["has_bait"].get<bool>()) loaded.model.init_bait_from_anchor();
        loaded.epoch = header["epoch"].get<long>();
        loaded.rng_state = header["rng_state"].get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError("checkpoint header malformed: " + std::string(e.what()) + ": " + path);
    }

    for (auto p : loaded.model.extractor.parameters()) read_buffer(in, p, path);
    read_buffer(in, loaded.model.anchor.weight(), path);
    if (loaded.model.has_bait()) read_buffer(in, loaded.model.bait->weight(), path);
    // exactly the declared payload, nothing more
    char extra;
    if (in.read(&extra, 1))
        throw IoError("checkpoint has trailing bytes beyond declared buffers: " + path);
    return loaded;
}

}  // namespace bait
