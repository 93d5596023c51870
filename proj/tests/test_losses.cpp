#include <algorithm>
#include <cmath>

#include "bait/losses.hpp"
#include "bait/model.hpp"
#include "bait/rng.hpp"
#include "doctest.h"
#include "fd_check.hpp"

using namespace bait;

namespace {

Tensor random_probs(int n, int k, Rng& rng) {
    Tape t;
    Tensor logits = Tensor::zeros({n, k});
    for (auto& v : logits.values()) v = rng.uniform(-3, 3);
    return t.softmax_rows(logits);
}

}  // namespace

TEST_CASE("entropy") {
    CHECK(entropy(std::vector<double>{0.25, 0.25, 0.25, 0.25}) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(entropy(std::vector<double>{0, 0, 1, 0}) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(entropy(std::vector<double>{0.5, 0.5}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(entropy(std::vector<double>{0.9, 0.6}), DomainError);

    // 0 <= H <= ln K on random distributions
    Rng rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const int k = 2 + static_cast<int>(rng.next_below(6));
        Tensor p = random_probs(1, k, rng);
        const double h = entropy(p.values());
        CHECK(h >= 0.0);
        CHECK(h <= std::log(static_cast<double>(k)) + 1e-12);
    }
}

TEST_CASE("cross_entropy_source") {
    Tape tape;
    SUBCASE("perfect one-hot predictions cost ~0") {
        Tensor p = Tensor::matrix({{1, 0}, {0, 1}});
        const double v = cross_entropy_source(tape, p, {0, 1}).value();
        CHECK(v == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("uniform predictions cost ln 2 for K=2") {
        Tensor p = Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
        CHECK(cross_entropy_source(tape, p, {0, 1, 1}).value() ==
              doctest::Approx(std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("out-of-range labels are rejected") {
        Tensor p = Tensor::matrix({{0.5, 0.5}});
        CHECK_THROWS_AS(cross_entropy_source(tape, p, {2}), DomainError);
        CHECK_THROWS_AS(cross_entropy_source(tape, p, {-1}), DomainError);
    }
    SUBCASE("gradient w.r.t. logits matches finite differences") {
        Rng rng(5);
        Tensor logits = Tensor::zeros({4, 3}, true);
        for (auto& v : logits.values()) v = rng.uniform(-2, 2);
        const std::vector<int> labels = {0, 2, 1, 2};
        auto forward = [&]() {
            Tape t;
            return cross_entropy_source(t, t.softmax_rows(logits), labels).value();
        };
        Tape t;
        t.backward(cross_entropy_source(t, t.softmax_rows(logits), labels));
        auto res = fd::check_grad(logits, forward);
        CHECK_MESSAGE(res.ok, res.detail);
    }
}

TEST_CASE("symmetric_kl") {
    const std::vector<double> a{0.75, 0.25}, b{0.25, 0.75};
    CHECK(symmetric_kl(a, a) == 0.0);
    CHECK(symmetric_kl(a, b) == doctest::Approx(0.5 * std::log(3.0)).epsilon(1e-12));
    CHECK(symmetric_kl(a, b) == symmetric_kl(b, a));
    CHECK_THROWS_AS(symmetric_kl(a, std::vector<double>{0.4, 0.4}), DomainError);

    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        Tensor p = random_probs(2, 4, rng);
        const auto& v = p.values();
        std::span<const double> r0(v.data(), 4), r1(v.data() + 4, 4);
        const double skl = symmetric_kl(r0, r1);
        CHECK(skl >= 0.0);
        CHECK(skl == symmetric_kl(r1, r0));
    }
}

TEST_CASE("quantile and split_batch") {
    SUBCASE("worked example: midpoint median, membership by <= tau") {
        // entropies 0.1 0.9 0.5 0.3 -> tau 0.4, certain {0,3}, uncertain {1,2}
        Tensor p = Tensor::zeros({4, 2});
        const std::vector<double> ents{0.1, 0.9, 0.5, 0.3};
        BatchSplit s = split_by_tau(ents, quantile(ents, 0.5));
        CHECK(s.tau == doctest::Approx(0.4).epsilon(1e-12));
        CHECK(s.certain == std::vector<int>{0, 3});
        CHECK(s.uncertain == std::vector<int>{1, 2});
    }
    SUBCASE("all-equal entropies leave the uncertain set empty") {
        const std::vector<double> ents{0.3, 0.3, 0.3, 0.3};
        BatchSplit s = split_by_tau(ents, quantile(ents, 0.5));
        CHECK(s.uncertain.empty());
        CHECK(s.certain.size() == 4);
    }
    SUBCASE("median of odd-sized samples is the middle value") {
        CHECK(quantile({3.0, 1.0, 2.0}, 0.5) == 2.0);
    }
    SUBCASE("undersized batches are a split error") {
        Tensor p = Tensor::matrix({{0.5, 0.5}});
        CHECK_THROWS_AS(split_batch(p, 0.5), SplitError);
    }
    SUBCASE("quantile fraction must be strictly inside (0, 1)") {
        CHECK_THROWS_AS(quantile({1.0, 2.0}, 0.0), DomainError);
        CHECK_THROWS_AS(quantile({1.0, 2.0}, 1.0), DomainError);
        CHECK_THROWS_AS(quantile({}, 0.5), DomainError);
    }
    SUBCASE("even n with distinct entropies halves exactly at the median") {
        Rng rng(13);
        for (int trial = 0; trial < 200; ++trial) {
            const int n = 2 * (2 + static_cast<int>(rng.next_below(15)));
            Tensor probs = random_probs(n, 3, rng);
            BatchSplit s = split_batch(probs, 0.5);
            const auto ents = row_entropies(probs);
            // random continuous entropies are distinct with probability 1
            CHECK(s.certain.size() == static_cast<std::size_t>(n) / 2);
            CHECK(s.uncertain.size() == static_cast<std::size_t>(n) / 2);
            for (int i : s.certain) CHECK(ents[i] <= s.tau);
            for (int i : s.uncertain) CHECK(ents[i] > s.tau);
        }
    }
}

TEST_CASE("cast_loss") {
    Tape tape;
    SUBCASE("identical heads cost 0") {
        Tensor p = Tensor::matrix({{0.4, 0.6}, {0.7, 0.3}});
        BatchSplit s = split_by_tau(row_entropies(p), 10.0);  // everything certain
        CHECK(cast_loss(tape, p, p, s).value() == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("empty uncertain set leaves the nonnegative agreement term") {
        Tensor p1 = Tensor::matrix({{0.9, 0.1}, {0.2, 0.8}});
        Tensor p2 = Tensor::matrix({{0.6, 0.4}, {0.4, 0.6}});
        BatchSplit s;
        s.certain = {0, 1};
        s.tau = 99.0;
        CHECK(cast_loss(tape, p1, p2, s).value() >= 0.0);
    }
    SUBCASE("worked example: one agreeing certain pair, one flipped uncertain pair") {
        Tensor p1 = Tensor::matrix({{0.4, 0.6}, {0.75, 0.25}});
        Tensor p2 = Tensor::matrix({{0.4, 0.6}, {0.25, 0.75}});
        BatchSplit s;
        s.certain = {0};
        s.uncertain = {1};
        const double expected = -symmetric_kl(std::vector<double>{0.75, 0.25},
                                              std::vector<double>{0.25, 0.75});
        CHECK(cast_loss(tape, p1, p2, s).value() == doctest::Approx(expected).epsilon(1e-12));
        CHECK(expected == doctest::Approx(-0.5493).epsilon(1e-4));
    }
    SUBCASE("value agrees with the host symmetric_kl oracle on random batches") {
        Rng rng(19);
        for (int trial = 0; trial < 50; ++trial) {
            const int n = 4 + static_cast<int>(rng.next_below(5)), k = 3;
            Tensor p1 = random_probs(n, k, rng), p2 = random_probs(n, k, rng);
            BatchSplit s = split_batch(p1, 0.5);
            double expected = 0.0;
            for (int i : s.certain)
                expected += symmetric_kl(
                    std::span<const double>(p1.values()).subspan(i * k, k),
                    std::span<const double>(p2.values()).subspan(i * k, k));
            for (int i : s.uncertain)
                expected -= symmetric_kl(
                    std::span<const double>(p1.values()).subspan(i * k, k),
                    std::span<const double>(p2.values()).subspan(i * k, k));
            Tape t;
            CHECK(cast_loss(t, p1, p2, s).value() == doctest::Approx(expected).epsilon(1e-10));
        }
    }
    SUBCASE("shape mismatch is rejected") {
        Tensor p1 = Tensor::matrix({{0.5, 0.5}});
        Tensor p2 = Tensor::matrix({{0.5, 0.5}, {0.5, 0.5}});
        BatchSplit s;
        s.certain = {0};
        CHECK_THROWS_AS(cast_loss(tape, p1, p2, s), ShapeError);
    }
}

TEST_CASE("cast_loss detachment contract: gradients reach only the bait head") {
    BaitModel m = BaitModel::create({2, 6, 4}, 3, 21);
    m.init_bait_from_anchor();
    Rng rng(22);
    Tensor x = Tensor::zeros({6, 2});
    for (auto& v : x.values()) v = rng.uniform(-2, 2);

    // step-1 configuration: extractor and anchor frozen, bait trainable
    freeze(m.extractor_params());
    freeze(m.anchor_params());
    set_trainable(m.bait_params(), true);
    clear_grads(m.all_params());

    BatchSplit frozen_split;  // keep the same split across FD perturbations
    {
        Tape t;
        Tensor p1 = m.predict(t, x, Head::anchor);
        frozen_split = split_batch(p1, 0.5);
        Tensor loss = cast_loss(t, p1, m.predict(t, x, Head::bait), frozen_split);
        t.backward(loss);
    }
    for (const auto& p : m.extractor_params()) CHECK_FALSE(p.has_grad());
    CHECK_FALSE(m.anchor.weight().has_grad());
    REQUIRE(m.bait->weight().has_grad());

    auto forward = [&]() {
        Tape t;
        return cast_loss(t, m.predict(t, x, Head::anchor), m.predict(t, x, Head::bait),
                         frozen_split)
            .value();
    };
    auto res = fd::check_grad(m.bait->weight(), forward);
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("bite_loss") {
    Tape tape;
    SUBCASE("worked example: matching uniform binary pair costs 2 ln 2") {
        Tensor p = Tensor::matrix({{0.5, 0.5}});
        CHECK(bite_loss(tape, p, p).value() ==
              doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("identical one-hot predictions cost ~0") {
        Tensor p = Tensor::matrix({{1.0, 0.0}});
        CHECK(std::abs(bite_loss(tape, p, p).value()) < 1e-9);
    }
    SUBCASE("symmetric in its arguments") {
        Rng rng(23);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor p1 = random_probs(3, 4, rng), p2 = random_probs(3, 4, rng);
            CHECK(bite_loss(tape, p1, p2).value() == bite_loss(tape, p2, p1).value());
        }
    }
    SUBCASE("bite(p, p) equals twice the total entropy") {
        Rng rng(27);
        for (int trial = 0; trial < 20; ++trial) {
            Tensor p = random_probs(5, 3, rng);
            double total_h = 0.0;
            for (double h : row_entropies(p)) total_h += h;
            CHECK(bite_loss(tape, p, p).value() ==
                  doctest::Approx(2.0 * total_h).epsilon(1e-9));
        }
    }
}

TEST_CASE("class_balance_loss") {
    Tape tape;
    SUBCASE("uniform mean predictions cost 0") {
        Tensor p = Tensor::matrix({{0.9, 0.1}, {0.1, 0.9}});  // mean is [0.5, 0.5]
        CHECK(class_balance_loss(tape, p, p).value() == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("collapse onto one class costs 2 ln 2 for K=2") {
        Tensor p = Tensor::matrix({{1.0, 0.0}, {1.0, 0.0}});
        CHECK(class_balance_loss(tape, p, p).value() ==
              doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-6));
    }
    SUBCASE("invariant to permuting batch rows") {
        Rng rng(29);
        Tensor p1 = random_probs(6, 3, rng), p2 = random_probs(6, 3, rng);
        const double before = class_balance_loss(tape, p1, p2).value();
        std::vector<int> perm{5, 3, 1, 0, 4, 2};
        Tensor q1 = Tensor::zeros({6, 3}), q2 = Tensor::zeros({6, 3});
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 3; ++j) {
                q1.at(i, j) = p1.at(perm[i], j);
                q2.at(i, j) = p2.at(perm[i], j);
            }
        CHECK(class_balance_loss(tape, q1, q2).value() ==
              doctest::Approx(before).epsilon(1e-12));
    }
}

TEST_CASE("step-2 losses: gradients reach only the extractor") {
    BaitModel m = BaitModel::create({2, 6, 4}, 3, 33);
    m.init_bait_from_anchor();
    Rng rng(34);
    Tensor x = Tensor::zeros({5, 2});
    for (auto& v : x.values()) v = rng.uniform(-2, 2);

    freeze(m.anchor_params());
    freeze(m.bait_params());
    set_trainable(m.extractor_params(), true);
    clear_grads(m.all_params());

    auto forward = [&]() {
        Tape t;
        Tensor p1 = m.predict(t, x, Head::anchor);
        Tensor p2 = m.predict(t, x, Head::bait);
        return t.add(bite_loss(t, p1, p2), class_balance_loss(t, p1, p2)).value();
    };
    {
        Tape t;
        Tensor p1 = m.predict(t, x, Head::anchor);
        Tensor p2 = m.predict(t, x, Head::bait);
        t.backward(t.add(bite_loss(t, p1, p2), class_balance_loss(t, p1, p2)));
    }
    CHECK_FALSE(m.anchor.weight().has_grad());
    CHECK_FALSE(m.bait->weight().has_grad());
    for (const auto& p : m.extractor_params()) {
        REQUIRE(p.has_grad());
        auto res = fd::check_grad(p, forward);
        CHECK_MESSAGE(res.ok, res.detail);
    }
}

TEST_CASE("loss report flags non-finite values") {
    CHECK(make_loss_report("cast", 1.5, 8).value == 1.5);
    CHECK_THROWS_AS(make_loss_report("cast", std::nan(""), 8), DivergenceError);
    CHECK_THROWS_AS(make_loss_report("cast", INFINITY, 8), DivergenceError);
}
