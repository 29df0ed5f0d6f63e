#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "rocketnet/data.hpp"
#include "rocketnet/errors.hpp"
#include "rocketnet/harness.hpp"
#include "rocketnet/metrics.hpp"
#include "support/testutil.hpp"

using rocket::Dataset;
using rocket::SynthSpec;
using rocket::SynthTask;
using rocket::Tensor;

namespace {

SynthSpec small_spirals() {
    SynthSpec s;
    s.task = SynthTask::Spirals;
    s.train_count = 200;
    s.val_count = 50;
    s.test_count = 50;
    s.noise = 0.1;
    s.seed = 5;
    return s;
}

// A dataset whose single feature doubles as the sample's identity, so batch
// membership can be traced back to source rows.
Dataset indexed_dataset(std::size_t n) {
    Dataset ds;
    ds.features = Tensor(n, 1);
    for (std::size_t i = 0; i < n; ++i) ds.features.at(i, 0) = static_cast<double>(i);
    for (std::size_t i = 0; i < n; ++i) ds.labels.push_back(i % 3);
    ds.classes = 3;
    ds.split = "train";
    ds.validate();
    return ds;
}

double test_accuracy_of_light_net(const std::vector<std::size_t>& hidden) {
    rocket::TrainConfig cfg;
    cfg.mode = rocket::TrainMode::Base;
    cfg.arch.input_dim = 2;
    cfg.arch.classes = 2;
    cfg.arch.light = hidden;
    cfg.arch.booster = hidden;
    cfg.optimizer.kind = rocket::OptimizerSpec::Kind::SgdMomentum;
    cfg.optimizer.momentum = 0.9;
    cfg.schedule = rocket::LrSchedule{0.05, 0.2, {8, 12}};
    cfg.epochs = 16;
    cfg.batch_size = 128;
    cfg.seed = 1;
    cfg.data.synth.task = SynthTask::Spirals;
    cfg.data.synth.train_count = 10000;
    cfg.data.synth.val_count = 0;
    cfg.data.synth.test_count = 2000;
    cfg.data.synth.noise = 0.2;
    cfg.data.synth.seed = 7;
    const rocket::TrainResult run = rocket::train(cfg);
    return 1.0 - *run.records.back().err_light_test;
}

}  // namespace

TEST_CASE("synthetic generators are bitwise deterministic", "[data]") {
    for (SynthTask task : {SynthTask::Blobs, SynthTask::Spirals}) {
        SynthSpec s = small_spirals();
        s.task = task;
        const rocket::SplitDatasets a = rocket::gen_classification(s);
        const rocket::SplitDatasets b = rocket::gen_classification(s);
        CHECK(a.train.features.bitwise_equal(b.train.features));
        CHECK(a.test.features.bitwise_equal(b.test.features));
        CHECK(a.train.labels == b.train.labels);
    }
    SynthSpec c = small_spirals();
    c.task = SynthTask::Ctr;
    c.dims = 4;
    c.test_count = 100;
    const rocket::CtrData a = rocket::gen_ctr(c);
    const rocket::CtrData b = rocket::gen_ctr(c);
    CHECK(a.splits.train.features.bitwise_equal(b.splits.train.features));
    CHECK(a.splits.test.groups == b.splits.test.groups);
    CHECK(a.test_scores == b.test_scores);
}

TEST_CASE("splits carry the requested counts and share no sample", "[data]") {
    const rocket::SplitDatasets d = rocket::gen_classification(small_spirals());
    CHECK(d.train.size() == 200);
    CHECK(d.val.size() == 50);
    CHECK(d.test.size() == 50);
    CHECK(d.train.split == "train");
    CHECK(d.val.split == "val");
    CHECK(d.test.split == "test");

    // Continuous features: any duplicated row across splits would mean the
    // same draw landed twice.
    std::set<std::pair<double, double>> seen;
    for (const Dataset* ds : {&d.train, &d.val, &d.test}) {
        for (std::size_t i = 0; i < ds->size(); ++i) {
            CHECK(seen.insert({ds->features.at(i, 0), ds->features.at(i, 1)}).second);
        }
    }
}

TEST_CASE("noiseless blobs collapse onto their class centroids", "[data]") {
    SynthSpec s;
    s.task = SynthTask::Blobs;
    s.dims = 3;
    s.classes = 4;
    s.train_count = 80;
    s.val_count = 0;
    s.test_count = 0;
    s.noise = 0.0;
    s.seed = 9;
    const Dataset train = rocket::gen_classification(s).train;

    // Class centroids from the data itself.
    std::vector<std::vector<double>> centroid(s.classes, std::vector<double>(s.dims, 0.0));
    std::vector<std::size_t> count(s.classes, 0);
    for (std::size_t i = 0; i < train.size(); ++i) {
        for (std::size_t ddim = 0; ddim < s.dims; ++ddim) {
            centroid[train.labels[i]][ddim] += train.features.at(i, ddim);
        }
        count[train.labels[i]] += 1;
    }
    for (std::size_t c = 0; c < s.classes; ++c) {
        REQUIRE(count[c] > 0);
        for (double& v : centroid[c]) v /= static_cast<double>(count[c]);
    }

    // Nearest-centroid assignment reproduces every label.
    std::size_t correct = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
        std::size_t best = 0;
        double best_d = 1e300;
        for (std::size_t c = 0; c < s.classes; ++c) {
            double dist = 0.0;
            for (std::size_t dd = 0; dd < s.dims; ++dd) {
                const double delta = train.features.at(i, dd) - centroid[c][dd];
                dist += delta * delta;
            }
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        if (best == train.labels[i]) ++correct;
    }
    CHECK(correct == train.size());
}

TEST_CASE("spiral classes defeat a linear model but not a small deep one", "[data][slow]") {
    const double linear_acc = test_accuracy_of_light_net({});
    const double deep_acc = test_accuracy_of_light_net({16, 16, 16});
    INFO("linear " << linear_acc << " deep " << deep_acc);
    CHECK(linear_acc < 0.70);
    CHECK(deep_acc > 0.95);
    // Pinned observations from the seeds above; drift beyond three points
    // means the generator or the trainer changed behavior.
    CHECK(linear_acc == Catch::Approx(0.5865).margin(0.03));
    CHECK(deep_acc == Catch::Approx(0.998).margin(0.03));
}

TEST_CASE("grouped ctr data hits its configured positive count exactly", "[data]") {
    SynthSpec s;
    s.task = SynthTask::Ctr;
    s.dims = 4;
    s.train_count = 2000;
    s.val_count = 500;
    s.test_count = 500;
    s.noise = 0.3;
    s.positive_rate = 0.1;
    s.group_count = 10;
    s.seed = 11;
    const rocket::CtrData data = rocket::gen_ctr(s);

    std::size_t positives = 0, total = 0;
    for (const Dataset* ds : {&data.splits.train, &data.splits.val, &data.splits.test}) {
        REQUIRE(ds->grouped());
        for (std::size_t y : ds->labels) positives += y;
        total += ds->size();
    }
    CHECK(total == 3000);
    // The quantile threshold lands on round(total * rate); the per-group
    // class guarantee below may then flip at most one row per test group.
    CHECK(positives >= 300 - s.group_count);
    CHECK(positives <= 300 + s.group_count);

    // Every test group must be usable for a grouped ranking metric.
    std::map<std::int64_t, std::pair<std::size_t, std::size_t>> tally;
    const Dataset& test = data.splits.test;
    for (std::size_t i = 0; i < test.size(); ++i) {
        auto& [pos, neg] = tally[test.groups[i]];
        (test.labels[i] == 1 ? pos : neg) += 1;
    }
    CHECK(tally.size() == s.group_count);
    for (const auto& [gid, counts] : tally) {
        CHECK(counts.first >= 1);
        CHECK(counts.second >= 1);
    }
}

TEST_CASE("ctr thresholding is exact when no test split needs patching", "[data]") {
    SynthSpec s;
    s.task = SynthTask::Ctr;
    s.dims = 4;
    s.train_count = 2500;
    s.val_count = 500;
    s.test_count = 0;
    s.noise = 0.3;
    s.positive_rate = 0.1;
    s.group_count = 10;
    s.seed = 11;
    const rocket::CtrData data = rocket::gen_ctr(s);

    std::size_t positives = 0;
    for (const Dataset* ds : {&data.splits.train, &data.splits.val}) {
        for (std::size_t y : ds->labels) positives += y;
    }
    CHECK(positives == 300);
}

TEST_CASE("the latent ctr scorer ranks perfectly within every group at zero noise",
          "[data]") {
    SynthSpec s;
    s.task = SynthTask::Ctr;
    s.dims = 4;
    s.train_count = 300;
    s.val_count = 0;
    s.test_count = 200;
    s.noise = 0.0;
    s.positive_rate = 0.5;
    s.group_count = 2;
    s.seed = 13;
    const rocket::CtrData data = rocket::gen_ctr(s);
    const Dataset& test = data.splits.test;
    const auto g = rocket::gauc(data.test_scores, test.labels, test.groups);
    REQUIRE(g.has_value());
    CHECK(*g == 1.0);
}

TEST_CASE("the global ctr positive rate stays within one percent at scale", "[data][slow]") {
    SynthSpec s;
    s.task = SynthTask::Ctr;
    s.dims = 4;
    s.train_count = 98000;
    s.val_count = 0;
    s.test_count = 2000;
    s.noise = 0.5;
    s.positive_rate = 0.1;
    s.group_count = 10;
    s.seed = 17;
    const rocket::CtrData data = rocket::gen_ctr(s);
    std::size_t positives = 0;
    for (const Dataset* ds : {&data.splits.train, &data.splits.test}) {
        for (std::size_t y : ds->labels) positives += y;
    }
    const double rate = static_cast<double>(positives) / 100000.0;
    CHECK(std::fabs(rate - 0.1) <= 0.01);
}

TEST_CASE("a batch size covering the dataset yields one full permutation", "[data]") {
    const Dataset ds = indexed_dataset(17);
    const std::vector<rocket::Batch> bs = rocket::batches(ds, 50, 3);
    REQUIRE(bs.size() == 1);
    REQUIRE(bs[0].x.rows() == 17);

    std::set<long> seen;
    for (std::size_t i = 0; i < 17; ++i) {
        seen.insert(std::lround(bs[0].x.at(i, 0)));
    }
    CHECK(seen.size() == 17);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 16);
}

TEST_CASE("an epoch of batches visits every sample exactly once", "[data]") {
    const Dataset ds = indexed_dataset(23);
    const std::vector<rocket::Batch> bs = rocket::batches(ds, 5, 8);
    REQUIRE(bs.size() == 5);  // four full batches and a short tail
    CHECK(bs.back().x.rows() == 3);

    std::vector<long> seen;
    for (const rocket::Batch& b : bs) {
        for (std::size_t i = 0; i < b.x.rows(); ++i) {
            const long idx = std::lround(b.x.at(i, 0));
            seen.push_back(idx);
            // One-hot labels line up with the traced sample.
            REQUIRE(b.labels[i] == static_cast<std::size_t>(idx) % 3);
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(b.y.at(i, c) == (c == b.labels[i] ? 1.0 : 0.0));
            }
        }
    }
    std::sort(seen.begin(), seen.end());
    for (long i = 0; i < 23; ++i) CHECK(seen[static_cast<std::size_t>(i)] == i);
}

TEST_CASE("batch order is a pure function of the epoch seed", "[data]") {
    const Dataset ds = indexed_dataset(40);
    auto order = [&ds](std::uint64_t seed) {
        std::vector<long> idx;
        for (const rocket::Batch& b : rocket::batches(ds, 7, seed)) {
            for (std::size_t i = 0; i < b.x.rows(); ++i) {
                idx.push_back(std::lround(b.x.at(i, 0)));
            }
        }
        return idx;
    };
    CHECK(order(4) == order(4));
    CHECK(order(4) != order(5));
}

TEST_CASE("csv round trips reproduce features, labels and groups bitwise", "[data]") {
    testutil::TempDir dir;

    SynthSpec s = small_spirals();
    const Dataset plain = rocket::gen_classification(s).train;
    const std::string plain_path = dir.file("plain.csv");
    rocket::write_csv(plain, plain_path);
    const Dataset plain_back = rocket::read_csv(plain_path, "train");
    CHECK(plain_back.features.bitwise_equal(plain.features));
    CHECK(plain_back.labels == plain.labels);
    CHECK_FALSE(plain_back.grouped());
    CHECK(plain_back.classes == plain.classes);

    SynthSpec c;
    c.task = SynthTask::Ctr;
    c.dims = 3;
    c.train_count = 120;
    c.val_count = 0;
    c.test_count = 60;
    c.positive_rate = 0.3;
    c.seed = 19;
    const Dataset grouped = rocket::gen_ctr(c).splits.test;
    const std::string grouped_path = dir.file("grouped.csv");
    rocket::write_csv(grouped, grouped_path);
    const Dataset grouped_back = rocket::read_csv(grouped_path, "test");
    CHECK(grouped_back.features.bitwise_equal(grouped.features));
    CHECK(grouped_back.labels == grouped.labels);
    REQUIRE(grouped_back.grouped());
    CHECK(grouped_back.groups == grouped.groups);

    // Writing the re-read dataset again produces the identical file.
    const std::string again_path = dir.file("again.csv");
    rocket::write_csv(grouped_back, again_path);
    CHECK(testutil::read_file(again_path) == testutil::read_file(grouped_path));
}

TEST_CASE("csv parsing reports the offending line", "[data]") {
    testutil::TempDir dir;

    const std::string bad_label = dir.file("bad_label.csv");
    testutil::write_file(bad_label, "label,group,f0\n0,-1,0.5\nx,-1,0.25\n");
    CHECK_THROWS_MATCHES(
        rocket::read_csv(bad_label, "train"), rocket::FormatError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 3")));

    const std::string bad_width = dir.file("bad_width.csv");
    testutil::write_file(bad_width, "label,group,f0,f1\n0,-1,0.5,0.5\n1,-1,0.25\n");
    CHECK_THROWS_MATCHES(
        rocket::read_csv(bad_width, "train"), rocket::FormatError,
        Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring("line 3") &&
                                        Catch::Matchers::ContainsSubstring("columns")));

    const std::string bad_header = dir.file("bad_header.csv");
    testutil::write_file(bad_header, "foo,bar\n0,1\n");
    CHECK_THROWS_AS(rocket::read_csv(bad_header, "train"), rocket::FormatError);

    CHECK_THROWS_AS(rocket::read_csv(dir.file("absent.csv"), "train"), rocket::IoError);
}

TEST_CASE("spec validation rejects degenerate generator settings", "[data]") {
    SynthSpec s = small_spirals();
    s.train_count = 0;
    CHECK_THROWS_AS(s.validate(), rocket::SpecError);

    SynthSpec three_d = small_spirals();
    three_d.dims = 3;
    CHECK_THROWS_AS(three_d.validate(), rocket::SpecError);

    SynthSpec ctr;
    ctr.task = SynthTask::Ctr;
    ctr.dims = 4;
    ctr.train_count = 100;
    ctr.test_count = 50;
    ctr.positive_rate = 0.0;
    CHECK_THROWS_AS(ctr.validate(), rocket::SpecError);
    ctr.positive_rate = 0.5;
    ctr.group_count = 1;
    CHECK_THROWS_AS(ctr.validate(), rocket::SpecError);
}
