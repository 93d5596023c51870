#include <filesystem>
#include <fstream>
#include <sstream>

#include "bait/eval.hpp"
#include "bait/trainer.hpp"
#include "doctest.h"

using namespace bait;

namespace {

// 2-D passthrough model: identity extractor, axis-aligned prototypes. The
// anchor predicts class 0 left of the y-axis and class 1 right of it.
BaitModel passthrough_model() {
    BaitModel m = BaitModel::create({2, 2}, 2, 0);
    auto ps = m.extractor.parameters();
    ps[0].values() = {1, 0, 0, 1};
    ps[1].values() = {0, 0};
    m.anchor.weight().values() = {-1, 0, 1, 0};
    return m;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("evaluate") {
    BaitModel m = passthrough_model();
    LabeledDataset ds;
    ds.features = Tensor::matrix({{-2, 0}, {-1, 3}, {2, 1}, {3, -1}});
    ds.num_classes = 2;

    SUBCASE("perfect predictions give accuracy 1 and a diagonal matrix") {
        ds.labels = {0, 0, 1, 1};
        EvalResult r = evaluate(m, ds, Head::anchor);
        CHECK(r.accuracy == 1.0);
        CHECK(r.confusion.at(0, 0) == 2);
        CHECK(r.confusion.at(1, 1) == 2);
        CHECK(r.confusion.at(0, 1) == 0);
        CHECK(r.confusion.at(1, 0) == 0);
    }
    SUBCASE("constant predictor on balanced labels scores one half") {
        LabeledDataset left;
        left.features = Tensor::matrix({{-1, 0}, {-2, 1}, {-3, 0}, {-1, 2}});
        left.labels = {0, 1, 0, 1};
        left.num_classes = 2;
        EvalResult r = evaluate(m, left, Head::anchor);
        CHECK(r.accuracy == 0.5);
        CHECK(r.confusion.at(0, 0) == 2);
        CHECK(r.confusion.at(1, 0) == 2);
    }
    SUBCASE("matrix totals and the trace identity") {
        ds.labels = {0, 1, 1, 0};
        EvalResult r = evaluate(m, ds, Head::anchor);
        CHECK(r.confusion.total() == 4);
        const double direct =
            static_cast<double>(r.confusion.trace()) / static_cast<double>(r.confusion.total());
        CHECK(r.accuracy == doctest::Approx(direct).epsilon(1e-12));
    }
    SUBCASE("label/feature count mismatch is rejected") {
        ds.labels = {0, 1};
        CHECK_THROWS_AS(evaluate(m, ds, Head::anchor), ShapeError);
    }
}

TEST_CASE("agreement") {
    BaitModel m = passthrough_model();
    Tensor x = Tensor::matrix({{-2, 1}, {-0.5, 0}, {1, 1}, {2, -1}, {0.25, 4}});

    SUBCASE("identical heads agree everywhere") {
        m.init_bait_from_anchor();
        CHECK(agreement(m, x) == 1.0);
    }
    SUBCASE("antipodal prototypes agree nowhere") {
        m.init_bait_from_anchor();
        m.bait->weight().values() = {1, 0, -1, 0};  // flipped sign
        CHECK(agreement(m, x) == 0.0);
    }
    SUBCASE("order of samples does not matter") {
        m.init_bait_from_anchor();
        m.bait->weight().values() = {-1, 0.2, 1, 0.4};
        Tensor shuffled = Tensor::matrix({{2, -1}, {-2, 1}, {0.25, 4}, {1, 1}, {-0.5, 0}});
        CHECK(agreement(m, x) == agreement(m, shuffled));
    }
}

TEST_CASE("prediction histogram sums to the sample count") {
    BaitModel m = passthrough_model();
    Tensor x = Tensor::matrix({{-2, 1}, {1, 1}, {2, -1}});
    const std::vector<long> hist = prediction_histogram(m, x, Head::anchor);
    CHECK(hist == std::vector<long>{1, 2});
}

TEST_CASE("boundary grid export") {
    BaitModel m = passthrough_model();
    m.init_bait_from_anchor();
    const auto path = std::filesystem::temp_directory_path() / "bait_boundary_test.csv";
    std::filesystem::remove(path);

    SUBCASE("row count is resolution squared plus header") {
        export_boundary_grid(m, {-2, 2, -2, 2}, 20, path.string());
        std::ifstream in(path);
        int lines = 0;
        std::string line;
        while (std::getline(in, line)) ++lines;
        CHECK(lines == 401);
    }
    SUBCASE("export is a pure function of the checkpoint") {
        export_boundary_grid(m, {-2, 2, -2, 2}, 15, path.string());
        const std::string first = slurp(path);
        export_boundary_grid(m, {-2, 2, -2, 2}, 15, path.string());
        CHECK(slurp(path) == first);
    }
    SUBCASE("resolution and dimension validation") {
        CHECK_THROWS_AS(export_boundary_grid(m, {-1, 1, -1, 1}, 1, path.string()), DomainError);
        BaitModel wide = BaitModel::create({3, 4}, 2, 0);
        CHECK_THROWS_AS(export_boundary_grid(wide, {-1, 1, -1, 1}, 10, path.string()),
                        ShapeError);
    }
    std::filesystem::remove(path);
}

TEST_CASE("padded bounds cover the data with a 20% margin") {
    Tensor x = Tensor::matrix({{0, 0}, {10, 5}});
    GridBounds b = padded_bounds(x);
    CHECK(b.xmin == doctest::Approx(-2.0));
    CHECK(b.xmax == doctest::Approx(12.0));
    CHECK(b.ymin == doctest::Approx(-1.0));
    CHECK(b.ymax == doctest::Approx(6.0));
}

TEST_CASE("head disagreement on the boundary grid shrinks from mid-run to the end") {
    // mid-adaptation the bait boundary wanders into the uncertain region;
    // by the end the two boundaries nearly coincide again
    const auto grid_disagreement = [](const BaitModel& m, const GridBounds& gb,
                                      const std::filesystem::path& csv) {
        export_boundary_grid(m, gb, 60, csv.string());
        std::ifstream in(csv);
        std::string line;
        std::getline(in, line);  // header
        long total = 0, differ = 0;
        while (std::getline(in, line)) {
            // columns: x,y,class_c1,prob_c1,class_c2,prob_c2
            std::size_t pos = 0;
            std::vector<std::string> cells;
            while (pos <= line.size()) {
                auto comma = line.find(',', pos);
                if (comma == std::string::npos) comma = line.size();
                cells.push_back(line.substr(pos, comma - pos));
                pos = comma + 1;
            }
            ++total;
            differ += cells[2] != cells[4];
        }
        return static_cast<double>(differ) / static_cast<double>(total);
    };

    TrainConfig cfg;
    const LabeledDataset source = make_moons(300, 0.1, 0, "source");
    const UnlabeledDataset target =
        UnlabeledDataset::from_labeled(rotate2d(make_moons(300, 0.1, 1, "target"), 30.0));
    BaitModel base = BaitModel::create(cfg.extractor_widths(2), 2, cfg.seed);
    train_source(base, source, cfg);
    const GridBounds gb = padded_bounds(target.features());
    const auto csv = std::filesystem::temp_directory_path() / "bait_disagreement_test.csv";

    TrainConfig mid_cfg = cfg;
    mid_cfg.epochs_adapt = 8;
    BaitModel mid = base.clone();
    adapt_bait(mid, target, mid_cfg);
    const double mid_disagreement = grid_disagreement(mid, gb, csv);

    BaitModel full = base.clone();
    TrainResult res = adapt_bait(full, target, cfg);
    const double end_disagreement = grid_disagreement(full, gb, csv);

    CHECK(end_disagreement < mid_disagreement);
    // and on the data itself, final agreement is no worse than at the start
    CHECK(*res.metrics.back().agreement >= *res.metrics.front().agreement - 1e-12);
    std::filesystem::remove(csv);
}

TEST_CASE("curves export") {
    const auto dir = std::filesystem::temp_directory_path();
    const auto log_path = dir / "bait_curves_test.jsonl";
    const auto csv_path = dir / "bait_curves_test.csv";
    std::filesystem::remove(log_path);
    std::filesystem::remove(csv_path);

    SUBCASE("one row per epoch per head, losses as columns") {
        MetricsWriter writer(log_path.string());
        for (int e = 0; e < 30; ++e) {
            EpochMetrics m;
            m.epoch = e;
            m.phase = "adapt";
            m.domain_tag = "target";
            m.losses = {{"bite", 1.0 / (e + 1)}, {"cast", -0.1 * e}};
            m.accuracy = {{"anchor", 0.5 + 0.01 * e}, {"bait", 0.5 + 0.012 * e}};
            m.agreement = 0.9;
            m.pred_histogram = {30, 30};
            writer.append(m);
        }
        export_curves(log_path.string(), csv_path.string());
        std::ifstream in(csv_path);
        std::string header;
        std::getline(in, header);
        CHECK(header == "epoch,head,accuracy,agreement,loss_bite,loss_cast");
        int rows = 0;
        std::string first_row;
        std::string line;
        while (std::getline(in, line)) {
            if (rows == 0) first_row = line;
            ++rows;
        }
        CHECK(rows == 60);  // 30 epochs x 2 heads
        // values survive the round trip at full double precision
        std::stringstream ss(first_row);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        CHECK(cells[0] == "0");
        CHECK(cells[1] == "anchor");
        CHECK(std::stod(cells[2]) == 0.5);       // anchor accuracy at epoch 0
        CHECK(std::stod(cells[3]) == 0.9);       // agreement
        CHECK(std::stod(cells[4]) == 1.0);       // bite at epoch 0
        CHECK(std::stod(cells[5]) == 0.0);       // cast at epoch 0
    }
    SUBCASE("malformed lines are reported with their number") {
        std::ofstream out(log_path, std::ios::trunc);
        EpochMetrics m;
        m.phase = "adapt";
        m.accuracy = {{"anchor", 0.5}};
        out << m.to_json_line() << "\nthis is not json\n";
        out.close();
        CHECK_THROWS_WITH_AS(export_curves(log_path.string(), csv_path.string()),
                             doctest::Contains("line 2"), IoError);
    }
    SUBCASE("missing log file is an i/o error") {
        CHECK_THROWS_AS(export_curves((dir / "no_such.jsonl").string(), csv_path.string()),
                        IoError);
    }
    std::filesystem::remove(log_path);
    std::filesystem::remove(csv_path);
}
