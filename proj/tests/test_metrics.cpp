#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <vector>

#include "rocketnet/errors.hpp"
#include "rocketnet/metrics.hpp"
#include "rocketnet/rng.hpp"
#include "support/oracles.hpp"

using rocket::Tensor;

namespace {

struct RandomScored {
    std::vector<double> scores;
    std::vector<std::size_t> labels;
    std::vector<std::int64_t> groups;
};

// Random binary sample with deliberate score ties (values snapped to a small
// grid) so tie handling gets exercised, not just the generic case.
RandomScored random_scored(std::size_t n, std::uint64_t seed, std::int64_t group_count) {
    rocket::Rng rng(seed);
    RandomScored out;
    for (std::size_t i = 0; i < n; ++i) {
        out.scores.push_back(std::floor(rng.uniform(0.0, 10.0)) / 10.0);
        out.labels.push_back(rng.uniform(0.0, 1.0) < 0.4 ? 1 : 0);
        if (group_count > 0) {
            out.groups.push_back(static_cast<std::int64_t>(i) % group_count);
        }
    }
    return out;
}

}  // namespace

TEST_CASE("error rate counts argmax misses", "[metrics]") {
    Tensor perfect(3, 2, {5.0, 1.0, -2.0, 0.0, 3.0, 7.0});
    CHECK(rocket::error_rate(perfect, {0, 1, 1}) == 0.0);
    CHECK(rocket::error_rate(perfect, {1, 0, 0}) == 1.0);

    Tensor wide(100, 4);
    std::vector<std::size_t> labels(100);
    for (std::size_t i = 0; i < 100; ++i) {
        labels[i] = i % 4;
        wide.at(i, i < 8 ? (labels[i] + 1) % 4 : labels[i]) = 1.0;  // first 8 rows wrong
    }
    CHECK(rocket::error_rate(wide, labels) == 0.08);
}

TEST_CASE("argmax ties resolve to the lowest class index", "[metrics]") {
    Tensor tied(1, 3, {2.0, 2.0, 2.0});
    CHECK(rocket::error_rate(tied, {0}) == 0.0);
    CHECK(rocket::error_rate(tied, {2}) == 1.0);
}

TEST_CASE("error rate ignores per-row score shifts", "[metrics]") {
    rocket::Rng rng(3);
    Tensor scores(20, 5);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 20; ++i) {
        for (std::size_t c = 0; c < 5; ++c) scores.at(i, c) = rng.uniform(-2.0, 2.0);
        labels.push_back(static_cast<std::size_t>(rng.uniform(0.0, 5.0)));
    }
    const double base = rocket::error_rate(scores, labels);
    Tensor shifted = scores;
    for (std::size_t i = 0; i < 20; ++i) {
        const double shift = rng.uniform(-100.0, 100.0);
        for (std::size_t c = 0; c < 5; ++c) shifted.at(i, c) += shift;
    }
    CHECK(rocket::error_rate(shifted, labels) == base);
}

TEST_CASE("error rate rejects malformed input", "[metrics]") {
    Tensor scores(3, 2);
    CHECK_THROWS_AS(rocket::error_rate(scores, {0, 1}), rocket::DimensionError);
    CHECK_THROWS_AS(rocket::error_rate(Tensor(0, 2), {}), rocket::ContractError);
    // An out-of-range label can never match an argmax, so it scores as a
    // miss.  The all-zero rows argmax to class 0, making row 0 the only hit.
    CHECK(rocket::error_rate(scores, {0, 1, 9}) == Catch::Approx(2.0 / 3.0));
}

TEST_CASE("auc is one when scores sort the labels and half when they cannot", "[metrics]") {
    const std::vector<std::size_t> labels = {0, 1, 0, 1, 1, 0};
    const std::vector<double> aligned = {0.0, 1.0, 0.0, 1.0, 1.0, 0.0};
    CHECK(rocket::auc(aligned, labels) == 1.0);
    const std::vector<double> flat(6, 0.25);
    CHECK(rocket::auc(flat, labels) == 0.5);
    const std::vector<double> reversed = {1.0, 0.0, 1.0, 0.0, 0.0, 1.0};
    CHECK(rocket::auc(reversed, labels) == 0.0);
}

TEST_CASE("auc matches the pairwise oracle on random ties", "[metrics]") {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const RandomScored s = random_scored(50, seed, 0);
        const auto fast = rocket::auc(s.scores, s.labels);
        const auto slow = oracle::auc_pairs(s.scores, s.labels);
        REQUIRE(fast.has_value() == slow.has_value());
        if (fast) CHECK(std::fabs(*fast - *slow) < 1e-12);
    }
}

TEST_CASE("auc only sees the ordering of the scores", "[metrics]") {
    const RandomScored s = random_scored(60, 21, 0);
    const auto base = rocket::auc(s.scores, s.labels);
    REQUIRE(base.has_value());

    std::vector<double> exped, affine;
    for (double v : s.scores) {
        exped.push_back(std::exp(v));
        affine.push_back(3.5 * v - 11.0);
    }
    CHECK(*rocket::auc(exped, s.labels) == *base);
    CHECK(*rocket::auc(affine, s.labels) == *base);
}

TEST_CASE("auc has no value for a single-class sample", "[metrics]") {
    CHECK_FALSE(rocket::auc({0.1, 0.2, 0.3}, {1, 1, 1}).has_value());
    CHECK_FALSE(rocket::auc({0.1, 0.2}, {0, 0}).has_value());
    CHECK_THROWS_AS(rocket::auc({0.1}, {0, 1}), rocket::DimensionError);
    CHECK_THROWS_AS(rocket::auc({0.1, 0.2}, {0, 2}), rocket::SpecError);
}

TEST_CASE("gauc over one group is plain auc", "[metrics]") {
    const RandomScored s = random_scored(40, 5, 1);
    const auto grouped = rocket::gauc(s.scores, s.labels, s.groups);
    const auto plain = rocket::auc(s.scores, s.labels);
    REQUIRE(grouped.has_value());
    CHECK(*grouped == *plain);
}

TEST_CASE("gauc weights group aucs by group size", "[metrics]") {
    // Two groups of four: one ranked perfectly, one with auc one half.
    const std::vector<double> scores = {0.9, 0.8, 0.2, 0.1, 0.5, 0.5, 0.5, 0.5};
    const std::vector<std::size_t> labels = {1, 1, 0, 0, 1, 0, 1, 0};
    const std::vector<std::int64_t> groups = {0, 0, 0, 0, 1, 1, 1, 1};
    CHECK(rocket::gauc(scores, labels, groups) == 0.75);
}

TEST_CASE("gauc matches the grouped oracle and skips one-sided groups", "[metrics]") {
    for (std::uint64_t seed = 30; seed < 36; ++seed) {
        const RandomScored s = random_scored(70, seed, 7);
        const auto fast = rocket::gauc(s.scores, s.labels, s.groups);
        const auto slow = oracle::gauc_pairs(s.scores, s.labels, s.groups);
        REQUIRE(fast.has_value() == slow.has_value());
        if (fast) CHECK(std::fabs(*fast - *slow) < 1e-12);
    }

    // A one-sided group contributes nothing; a sample made only of such
    // groups has no value at all.
    const std::vector<double> scores = {0.3, 0.4, 0.9, 0.1};
    CHECK_FALSE(rocket::gauc(scores, {1, 1, 0, 0}, {0, 0, 1, 1}).has_value());
    const auto partial = rocket::gauc(scores, {1, 1, 1, 0}, {0, 0, 1, 1});
    REQUIRE(partial.has_value());
    CHECK(*partial == 1.0);  // only group 1 counts, and it is ordered
}

TEST_CASE("gauc rejects malformed grouping", "[metrics]") {
    CHECK_THROWS_AS(rocket::gauc({0.1, 0.2}, {0, 1}, {0}), rocket::DimensionError);
    CHECK_THROWS_AS(rocket::gauc({0.1, 0.2}, {0, 1}, {0, -3}), rocket::SpecError);
}
