// bait command-line pipeline: generate the twinning-moon task, train the
// source model, adapt it to the target domain, evaluate and export plot data.
// One experiment = one output directory holding manifest, checkpoints,
// metrics and exports.
//
// Exit codes: 0 success, 1 usage/config error, 2 numerical divergence,
// 3 i/o error.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "bait/data.hpp"
#include "bait/eval.hpp"
#include "bait/model.hpp"
#include "bait/trainer.hpp"
#include "bait/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t fnv1a64(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw bait::IoError("cannot hash missing file: " + path);
    std::uint64_t h = 1469598103934665603ull;
    char c;
    while (in.get(c)) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

json config_json(const bait::TrainConfig& cfg) {
    return json{{"lr_source", cfg.lr_source},
                {"lr_adapt", cfg.lr_adapt},
                {"momentum", cfg.momentum},
                {"batch_size", cfg.batch_size},
                {"epochs_source", cfg.epochs_source},
                {"epochs_adapt", cfg.epochs_adapt},
                {"split_percentile", cfg.split_percentile},
                {"cb_weight", cfg.cb_weight},
                {"mode", bait::to_string(cfg.mode)},
                {"tau_schedule", bait::to_string(cfg.tau_schedule)},
                {"seed", cfg.seed},
                {"hidden_widths", cfg.hidden_widths},
                {"feature_dim", cfg.feature_dim}};
}

// Flat key = value config file mirroring TrainConfig; '#' starts a comment.
// Unknown keys are hard errors: silent typos are the classic
// reproducibility killer.
void apply_config_file(bait::TrainConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw bait::IoError("cannot open config file: " + path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto strip = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        if (strip(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw bait::ConfigError(path + ": line " + std::to_string(line_no) +
                                    ": expected key = value");
        const std::string key = strip(line.substr(0, eq));
        const std::string value = strip(line.substr(eq + 1));
        try {
            if (key == "lr_source") cfg.lr_source = std::stod(value);
            else if (key == "lr_adapt") cfg.lr_adapt = std::stod(value);
            else if (key == "momentum") cfg.momentum = std::stod(value);
            else if (key == "batch_size") cfg.batch_size = std::stoi(value);
            else if (key == "epochs_source") cfg.epochs_source = std::stoi(value);
            else if (key == "epochs_adapt") cfg.epochs_adapt = std::stoi(value);
            else if (key == "split_percentile") cfg.split_percentile = std::stod(value);
            else if (key == "cb_weight") cfg.cb_weight = std::stod(value);
            else if (key == "mode") cfg.mode = bait::parse_adapt_mode(value);
            else if (key == "tau_schedule") cfg.tau_schedule = bait::parse_tau_schedule(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "feature_dim") cfg.feature_dim = std::stoi(value);
            else if (key == "hidden_widths") {
                cfg.hidden_widths.clear();
                std::stringstream ss(value);
                std::string tok;
                while (std::getline(ss, tok, ','))
                    cfg.hidden_widths.push_back(std::stoi(strip(tok)));
            } else {
                throw bait::ConfigError(path + ": line " + std::to_string(line_no) +
                                        ": unknown config key '" + key + "'");
            }
        } catch (const std::invalid_argument&) {
            throw bait::ConfigError(path + ": line " + std::to_string(line_no) + ": bad value '" +
                                    value + "' for key '" + key + "'");
        }
    }
}

fs::path ensure_outdir(const std::string& out) {
    fs::path dir(out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw bait::IoError("cannot create output directory: " + out);
    return dir;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw bait::IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

// Written before any training starts; together with the inputs it pins the
// run down to bit-identical outputs.
void write_manifest(const fs::path& outdir, const std::string& command, const json& params,
                    const json& inputs, const std::vector<std::string>& outputs,
                    const std::optional<bait::TrainConfig>& cfg = std::nullopt) {
    json m;
    m["tool"] = std::string("bait ") + bait::kVersion;
    m["command"] = command;
    m["params"] = params;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    if (cfg) m["config"] = config_json(*cfg);
    write_json(outdir / "manifest.json", m);
}

json dataset_input(const std::string& path) {
    return json{{"path", path}, {"fnv1a64", hex64(fnv1a64(path))}};
}

// On divergence the partially trained model is still written out so the
// blow-up can be inspected.
template <typename Fn>
void run_guarded(Fn&& fn, const bait::BaitModel& model, const fs::path& outdir) {
    try {
        fn();
    } catch (const bait::DivergenceError&) {
        bait::save_checkpoint(model, (outdir / "diverged.ckpt").string());
        throw;
    }
}

int cmd_gen_moons(int n_per_class, double noise, double rotation_deg, std::uint64_t seed,
                  const std::string& out) {
    const fs::path outdir = ensure_outdir(out);
    const bait::LabeledDataset source = bait::make_moons(n_per_class, noise, seed, "source");
    const bait::LabeledDataset target =
        bait::rotate2d(bait::make_moons(n_per_class, noise, seed + 1, "target"), rotation_deg);
    bait::save_features_csv(source, (outdir / "source.csv").string());
    bait::save_features_csv(target, (outdir / "target.csv").string());
    write_manifest(outdir, "gen-moons",
                   json{{"n_per_class", n_per_class},
                        {"noise", noise},
                        {"rotation_deg", rotation_deg},
                        {"seed", seed}},
                   json::object(), {"source.csv", "target.csv"});
    std::cout << "wrote " << (outdir / "source.csv").string() << " and target.csv ("
              << source.size() << " rows each)\n";
    return 0;
}

int cmd_train_source(const std::string& data, const bait::TrainConfig& cfg,
                     const std::string& out) {
    cfg.validate();
    const fs::path outdir = ensure_outdir(out);
    const bait::LabeledDataset source = bait::load_features_csv(data, true, "source");
    write_manifest(outdir, "train-source", json::object(), json{{"data", dataset_input(data)}},
                   {"source.ckpt", "best.ckpt", "metrics.jsonl"}, cfg);

    bait::BaitModel model = bait::BaitModel::create(cfg.extractor_widths(source.dim()),
                                                    std::max(source.num_classes, 2), cfg.seed);
    bait::MetricsWriter writer((outdir / "metrics.jsonl").string());
    double best_acc = -1.0;
    run_guarded(
        [&] {
            bait::train_source(model, source, cfg, [&](const bait::EpochMetrics& m) {
                writer.append(m);
                // snapshot the best-so-far epoch by anchor accuracy
                if (auto it = m.accuracy.find("anchor");
                    it != m.accuracy.end() && it->second > best_acc) {
                    best_acc = it->second;
                    bait::save_checkpoint(model, (outdir / "best.ckpt").string(), m.epoch + 1,
                                          bait::Rng(cfg.seed).state());
                }
            });
        },
        model, outdir);
    bait::save_checkpoint(model, (outdir / "source.ckpt").string(), cfg.epochs_source,
                          bait::Rng(cfg.seed).state());
    const double acc = bait::evaluate(model, source, bait::Head::anchor).accuracy;
    std::cout << "source training done: accuracy " << acc << ", checkpoint "
              << (outdir / "source.ckpt").string() << "\n";
    return 0;
}

int cmd_adapt(const std::string& ckpt, const std::string& target_csv, bool target_has_labels,
              const bait::TrainConfig& cfg, const std::string& out) {
    cfg.validate();
    const fs::path outdir = ensure_outdir(out);
    bait::LoadedCheckpoint loaded = bait::load_checkpoint(ckpt);
    const bait::LabeledDataset raw =
        bait::load_features_csv(target_csv, target_has_labels, "target");
    const bait::UnlabeledDataset target =
        target_has_labels ? bait::UnlabeledDataset::from_labeled(raw)
                          : bait::UnlabeledDataset(raw.features, raw.domain_tag);
    write_manifest(outdir, "adapt", json{{"target_has_labels", target_has_labels}},
                   json{{"checkpoint", dataset_input(ckpt)}, {"target", dataset_input(target_csv)}},
                   {"adapted.ckpt", "best.ckpt", "metrics.jsonl", "summary.json"}, cfg);

    bait::MetricsWriter writer((outdir / "metrics.jsonl").string());
    double best_acc = -1.0;
    run_guarded(
        [&] {
            bait::adapt(loaded.model, target, cfg, [&](const bait::EpochMetrics& m) {
                writer.append(m);
                // best epoch by anchor accuracy; needs evaluation labels
                if (auto it = m.accuracy.find("anchor");
                    it != m.accuracy.end() && it->second > best_acc) {
                    best_acc = it->second;
                    bait::save_checkpoint(loaded.model, (outdir / "best.ckpt").string(),
                                          m.epoch + 1, bait::Rng(cfg.seed).state());
                }
            });
        },
        loaded.model, outdir);
    bait::save_checkpoint(loaded.model, (outdir / "adapted.ckpt").string(), cfg.epochs_adapt,
                          bait::Rng(cfg.seed).state());

    json summary;
    summary["mode"] = bait::to_string(cfg.mode);
    summary["tau_schedule"] = bait::to_string(cfg.tau_schedule);
    summary["epochs_adapt"] = cfg.epochs_adapt;
    summary["domain_tag"] = target.domain_tag();
    if (target.has_hidden_labels()) {
        json acc;
        acc["anchor"] = bait::evaluate(loaded.model, target.features(), target.hidden_labels(),
                                       target.hidden_num_classes(), bait::Head::anchor)
                            .accuracy;
        if (loaded.model.has_bait())
            acc["bait"] = bait::evaluate(loaded.model, target.features(), target.hidden_labels(),
                                         target.hidden_num_classes(), bait::Head::bait)
                              .accuracy;
        summary["accuracy"] = acc;
    }
    if (loaded.model.has_bait())
        summary["agreement"] = bait::agreement(loaded.model, target.features());
    summary["pred_histogram"] =
        bait::prediction_histogram(loaded.model, target.features(), bait::Head::anchor);
    write_json(outdir / "summary.json", summary);
    std::cout << "adaptation done: " << summary.dump() << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data, const std::string& head,
             const std::string& out) {
    const fs::path outdir = ensure_outdir(out);
    const bait::LoadedCheckpoint loaded = bait::load_checkpoint(ckpt);
    const bait::LabeledDataset ds = bait::load_features_csv(data, true);
    const bait::Head h = head == "bait" ? bait::Head::bait : bait::Head::anchor;
    const bait::EvalResult res = bait::evaluate(loaded.model, ds, h);
    std::ofstream(outdir / "confusion.json", std::ios::trunc)
        << res.confusion.to_json(head, ds.domain_tag) << '\n';
    std::cout << "accuracy (" << head << " head): " << res.accuracy << "\n";
    return 0;
}

int cmd_export_boundary(const std::string& ckpt, const std::string& data,
                        const std::vector<double>& bounds, int resolution,
                        const std::string& out) {
    const fs::path outdir = ensure_outdir(out);
    const bait::LoadedCheckpoint loaded = bait::load_checkpoint(ckpt);
    bait::GridBounds gb;
    if (!bounds.empty()) {
        gb = {bounds[0], bounds[1], bounds[2], bounds[3]};
    } else if (!data.empty()) {
        gb = bait::padded_bounds(bait::load_features_csv(data, true).features);
    } else {
        throw bait::ConfigError("export-boundary needs --data or --bounds");
    }
    bait::export_boundary_grid(loaded.model, gb, resolution, (outdir / "boundary.csv").string());
    std::cout << "wrote " << (outdir / "boundary.csv").string() << " (" << resolution << "x"
              << resolution << " cells)\n";
    return 0;
}

int cmd_export_curves(const std::string& metrics, const std::string& out) {
    const fs::path outdir = ensure_outdir(out);
    bait::export_curves(metrics, (outdir / "curves.csv").string());
    std::cout << "wrote " << (outdir / "curves.csv").string() << "\n";
    return 0;
}

struct SummaryRow {
    std::uint64_t seed;
    std::string mode;
    double source_acc;
    double target_before;
    double target_after;
    double agreement;  // -1 when the mode has no bait head
};

// Independent seeds are embarrassingly parallel: each run owns its model,
// tape and iterators, so a plain thread pool over seeds is safe.
int cmd_sweep(int seeds, const std::string& modes_csv, int n_per_class, double noise,
              double rotation_deg, const bait::TrainConfig& base_cfg, int jobs,
              const std::string& out) {
    base_cfg.validate();
    const fs::path outdir = ensure_outdir(out);
    std::vector<std::string> modes;
    {
        std::stringstream ss(modes_csv);
        std::string tok;
        while (std::getline(ss, tok, ',')) modes.push_back(tok);
    }
    if (modes.empty()) throw bait::ConfigError("sweep needs at least one mode");
    for (const auto& m : modes) bait::parse_adapt_mode(m);  // validate early

    write_manifest(outdir, "sweep",
                   json{{"seeds", seeds},
                        {"modes", modes},
                        {"n_per_class", n_per_class},
                        {"noise", noise},
                        {"rotation_deg", rotation_deg},
                        {"jobs", jobs}},
                   json::object(), {"sweep_summary.csv"}, base_cfg);

    std::vector<SummaryRow> rows;
    std::mutex rows_mutex;
    std::vector<std::uint64_t> seed_list;
    for (int s = 0; s < seeds; ++s) seed_list.push_back(base_cfg.seed + s);

    const auto run_seed = [&](std::uint64_t seed) {
        bait::TrainConfig cfg = base_cfg;
        cfg.seed = seed;
        const bait::LabeledDataset source = bait::make_moons(n_per_class, noise, seed, "source");
        const bait::LabeledDataset tgt_l =
            bait::rotate2d(bait::make_moons(n_per_class, noise, seed + 1, "target"), rotation_deg);
        const bait::UnlabeledDataset target = bait::UnlabeledDataset::from_labeled(tgt_l);
        const fs::path seed_dir = outdir / ("seed" + std::to_string(seed));
        ensure_outdir(seed_dir.string());

        bait::BaitModel base = bait::BaitModel::create(cfg.extractor_widths(2), 2, cfg.seed);
        bait::MetricsWriter src_writer((seed_dir / "source_metrics.jsonl").string());
        bait::train_source(base, source, cfg,
                           [&](const bait::EpochMetrics& m) { src_writer.append(m); });
        bait::save_checkpoint(base, (seed_dir / "source.ckpt").string(), cfg.epochs_source,
                              bait::Rng(seed).state());
        const double src_acc = bait::evaluate(base, source, bait::Head::anchor).accuracy;
        const double tgt_before = bait::evaluate(base, tgt_l, bait::Head::anchor).accuracy;

        for (const auto& mode_name : modes) {
            bait::TrainConfig mode_cfg = cfg;
            mode_cfg.mode = bait::parse_adapt_mode(mode_name);
            bait::BaitModel model = base.clone();
            const fs::path mode_dir = seed_dir / mode_name;
            ensure_outdir(mode_dir.string());
            bait::MetricsWriter writer((mode_dir / "metrics.jsonl").string());
            bait::adapt(model, target, mode_cfg,
                        [&](const bait::EpochMetrics& m) { writer.append(m); });
            bait::save_checkpoint(model, (mode_dir / "adapted.ckpt").string(),
                                  mode_cfg.epochs_adapt, bait::Rng(seed).state());
            SummaryRow row;
            row.seed = seed;
            row.mode = mode_name;
            row.source_acc = src_acc;
            row.target_before = tgt_before;
            row.target_after = bait::evaluate(model, tgt_l, bait::Head::anchor).accuracy;
            row.agreement = model.has_bait() ? bait::agreement(model, target.features()) : -1.0;
            std::lock_guard lock(rows_mutex);
            rows.push_back(std::move(row));
        }
    };

    const int workers = std::max(1, jobs);
    std::vector<std::thread> pool;
    std::mutex queue_mutex;
    std::size_t next = 0;
    std::exception_ptr first_error;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::uint64_t seed;
                {
                    std::lock_guard lock(queue_mutex);
                    if (next >= seed_list.size() || first_error) return;
                    seed = seed_list[next++];
                }
                try {
                    run_seed(seed);
                } catch (...) {
                    std::lock_guard lock(queue_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    std::sort(rows.begin(), rows.end(), [](const SummaryRow& a, const SummaryRow& b) {
        return std::tie(a.seed, a.mode) < std::tie(b.seed, b.mode);
    });
    std::ofstream csv(outdir / "sweep_summary.csv", std::ios::trunc);
    csv << "seed,mode,source_acc,target_acc_before,target_acc_after,agreement\n";
    csv.precision(17);
    for (const auto& r : rows) {
        csv << r.seed << ',' << r.mode << ',' << r.source_acc << ',' << r.target_before << ','
            << r.target_after << ',';
        if (r.agreement >= 0) csv << r.agreement;
        csv << '\n';
    }
    std::cout << "sweep done: " << rows.size() << " runs, summary in "
              << (outdir / "sweep_summary.csv").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BAIT: source-free domain adaptation with an anchor and a bait classifier"};
    app.require_subcommand(1);

    std::function<int()> action;

    // ---- gen-moons
    auto* gen = app.add_subcommand("gen-moons", "Generate the twinning-moon source/target task");
    {
        auto n = std::make_shared<int>(300);
        auto noise = std::make_shared<double>(0.1);
        auto rot = std::make_shared<double>(30.0);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto out = std::make_shared<std::string>();
        gen->add_option("--n-per-class", *n, "Samples per class and domain")->capture_default_str();
        gen->add_option("--noise", *noise, "Gaussian noise std")->capture_default_str();
        gen->add_option("--rotation-deg", *rot, "Target-domain rotation in degrees")
            ->capture_default_str();
        gen->add_option("--seed", *seed, "RNG seed (target uses seed+1)")->capture_default_str();
        gen->add_option("--out", *out, "Output directory")->required();
        gen->callback([=, &action] {
            action = [=] { return cmd_gen_moons(*n, *noise, *rot, *seed, *out); };
        });
    }

    // shared config options: file first, explicit flags override
    const auto add_config_options = [](CLI::App* cmd, const std::shared_ptr<bait::TrainConfig>& cfg,
                                       const std::shared_ptr<std::string>& config_path) {
        cmd->add_option("--config", *config_path, "Flat key=value config file");
        auto* lr_s = cmd->add_option("--lr-source", cfg->lr_source, "Source learning rate");
        auto* lr_a = cmd->add_option("--lr-adapt", cfg->lr_adapt, "Adaptation learning rate");
        auto* bs = cmd->add_option("--batch-size", cfg->batch_size, "Mini-batch size");
        auto* es = cmd->add_option("--epochs-source", cfg->epochs_source, "Source epochs");
        auto* ea = cmd->add_option("--epochs-adapt", cfg->epochs_adapt, "Adaptation epochs");
        auto* sd = cmd->add_option("--seed", cfg->seed, "RNG seed");
        auto* cb = cmd->add_option("--cb-weight", cfg->cb_weight, "Class-balance loss weight");
        auto* sp =
            cmd->add_option("--split-percentile", cfg->split_percentile, "Entropy split percentile");
        return [=]() {
            if (config_path->empty()) return;
            bait::TrainConfig file_cfg;
            apply_config_file(file_cfg, *config_path);
            if (!lr_s->count()) cfg->lr_source = file_cfg.lr_source;
            if (!lr_a->count()) cfg->lr_adapt = file_cfg.lr_adapt;
            if (!bs->count()) cfg->batch_size = file_cfg.batch_size;
            if (!es->count()) cfg->epochs_source = file_cfg.epochs_source;
            if (!ea->count()) cfg->epochs_adapt = file_cfg.epochs_adapt;
            if (!sd->count()) cfg->seed = file_cfg.seed;
            if (!cb->count()) cfg->cb_weight = file_cfg.cb_weight;
            if (!sp->count()) cfg->split_percentile = file_cfg.split_percentile;
            cfg->momentum = file_cfg.momentum;
            cfg->mode = file_cfg.mode;
            cfg->tau_schedule = file_cfg.tau_schedule;
            cfg->hidden_widths = file_cfg.hidden_widths;
            cfg->feature_dim = file_cfg.feature_dim;
        };
    };

    // ---- train-source
    auto* train =
        app.add_subcommand("train-source", "Train extractor + anchor head on labeled data");
    {
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto cfg = std::make_shared<bait::TrainConfig>();
        auto cfg_path = std::make_shared<std::string>();
        train->add_option("--data", *data, "Labeled feature CSV")->required();
        train->add_option("--out", *out, "Output directory")->required();
        auto merge = add_config_options(train, cfg, cfg_path);
        train->callback([=, &action] {
            action = [=] {
                merge();
                return cmd_train_source(*data, *cfg, *out);
            };
        });
    }

    // ---- adapt
    auto* ad = app.add_subcommand("adapt", "Adapt a source checkpoint to unlabeled target data");
    {
        auto ckpt = std::make_shared<std::string>();
        auto target = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto mode = std::make_shared<std::string>("bait");
        auto schedule = std::make_shared<std::string>("constant");
        auto no_labels = std::make_shared<bool>(false);
        auto cfg = std::make_shared<bait::TrainConfig>();
        auto cfg_path = std::make_shared<std::string>();
        ad->add_option("--ckpt", *ckpt, "Source checkpoint")->required();
        ad->add_option("--target", *target, "Target feature CSV")->required();
        ad->add_option("--out", *out, "Output directory")->required();
        ad->add_option("--mode", *mode, "bait | bait_no_split | bait_no_cb | single_cb")
            ->capture_default_str();
        ad->add_option("--tau-schedule", *schedule, "constant | decay")->capture_default_str();
        ad->add_flag("--no-labels", *no_labels,
                     "Target CSV has no trailing label column (labels, when present, are used "
                     "for evaluation only)");
        auto merge = add_config_options(ad, cfg, cfg_path);
        ad->callback([=, &action] {
            action = [=] {
                merge();
                cfg->mode = bait::parse_adapt_mode(*mode);
                cfg->tau_schedule = bait::parse_tau_schedule(*schedule);
                return cmd_adapt(*ckpt, *target, !*no_labels, *cfg, *out);
            };
        });
    }

    // ---- eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on labeled data");
    {
        auto ckpt = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto head = std::make_shared<std::string>("anchor");
        auto out = std::make_shared<std::string>();
        ev->add_option("--ckpt", *ckpt, "Checkpoint")->required();
        ev->add_option("--data", *data, "Labeled feature CSV")->required();
        ev->add_option("--head", *head, "anchor | bait")->capture_default_str();
        ev->add_option("--out", *out, "Output directory")->required();
        ev->callback([=, &action] {
            action = [=] {
                if (*head != "anchor" && *head != "bait")
                    throw bait::ConfigError("unknown head '" + *head + "'");
                return cmd_eval(*ckpt, *data, *head, *out);
            };
        });
    }

    // ---- export-boundary
    auto* bd = app.add_subcommand("export-boundary", "Export a decision-boundary grid CSV");
    {
        auto ckpt = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto bounds = std::make_shared<std::vector<double>>();
        auto resolution = std::make_shared<int>(100);
        auto out = std::make_shared<std::string>();
        bd->add_option("--ckpt", *ckpt, "Checkpoint")->required();
        bd->add_option("--data", *data, "CSV whose bounding box (padded 20%) frames the grid");
        bd->add_option("--bounds", *bounds, "xmin xmax ymin ymax")->expected(4);
        bd->add_option("--resolution", *resolution, "Grid resolution per axis")
            ->capture_default_str();
        bd->add_option("--out", *out, "Output directory")->required();
        bd->callback([=, &action] {
            action = [=] { return cmd_export_boundary(*ckpt, *data, *bounds, *resolution, *out); };
        });
    }

    // ---- export-curves
    auto* cv = app.add_subcommand("export-curves", "Convert a metrics.jsonl into a tidy CSV");
    {
        auto metrics = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cv->add_option("--metrics", *metrics, "metrics.jsonl path")->required();
        cv->add_option("--out", *out, "Output directory")->required();
        cv->callback([=, &action] {
            action = [=] { return cmd_export_curves(*metrics, *out); };
        });
    }

    // ---- sweep
    auto* sw = app.add_subcommand("sweep", "Run the moons pipeline over several seeds and modes");
    {
        auto seeds = std::make_shared<int>(5);
        auto modes = std::make_shared<std::string>("bait,bait_no_cb,single_cb");
        auto n = std::make_shared<int>(300);
        auto noise = std::make_shared<double>(0.1);
        auto rot = std::make_shared<double>(30.0);
        auto jobs = std::make_shared<int>(1);
        auto out = std::make_shared<std::string>();
        auto cfg = std::make_shared<bait::TrainConfig>();
        auto cfg_path = std::make_shared<std::string>();
        sw->add_option("--seeds", *seeds, "Number of seeds (base seed, base+1, ...)")
            ->capture_default_str();
        sw->add_option("--modes", *modes, "Comma-separated adaptation modes")
            ->capture_default_str();
        sw->add_option("--n-per-class", *n, "Samples per class and domain")->capture_default_str();
        sw->add_option("--noise", *noise, "Gaussian noise std")->capture_default_str();
        sw->add_option("--rotation-deg", *rot, "Target rotation")->capture_default_str();
        sw->add_option("--jobs", *jobs, "Parallel seed workers")->capture_default_str();
        sw->add_option("--out", *out, "Output directory")->required();
        auto merge = add_config_options(sw, cfg, cfg_path);
        sw->callback([=, &action] {
            action = [=] {
                merge();
                return cmd_sweep(*seeds, *modes, *n, *noise, *rot, *cfg, *jobs, *out);
            };
        });
    }

    try {
        app.parse(argc, argv);
        return action ? action() : 1;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const bait::DivergenceError& e) {
        std::cerr << "error (divergence): " << e.what() << "\n";
        return 2;
    } catch (const bait::IoError& e) {
        std::cerr << "error (i/o): " << e.what() << "\n";
        return 3;
    } catch (const bait::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
