#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "rocketnet/errors.hpp"
#include "rocketnet/rng.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// One split of a classification dataset.  `groups` is empty for ungrouped
// data; when present it holds a non-negative group id per row (the unit
// GAUC averages over).
struct Dataset {
    Tensor features;                   // M x D
    std::vector<std::size_t> labels;   // M values in [0, classes)
    std::vector<std::int64_t> groups;  // empty, or M values >= 0
    std::size_t classes = 0;
    std::string split;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }
    bool grouped() const { return !groups.empty(); }

    void validate() const {
        if (features.rows() != labels.size()) {
            throw SpecError("dataset: " + std::to_string(features.rows()) + " feature rows vs " +
                            std::to_string(labels.size()) + " labels");
        }
        if (classes < 2) throw SpecError("dataset: needs >= 2 classes");
        for (std::size_t y : labels) {
            if (y >= classes) {
                throw SpecError("dataset: label " + std::to_string(y) + " out of range for " +
                                std::to_string(classes) + " classes");
            }
        }
        if (!groups.empty()) {
            if (groups.size() != labels.size()) {
                throw SpecError("dataset: group column length mismatch");
            }
            for (std::int64_t g : groups) {
                if (g < 0) throw SpecError("dataset: negative group id");
            }
        }
    }
};

struct SplitDatasets {
    Dataset train, val, test;
};

enum class SynthTask { Blobs, Spirals, Ctr };

struct SynthSpec {
    SynthTask task = SynthTask::Spirals;
    std::size_t dims = 2;
    std::size_t classes = 2;
    std::size_t train_count = 10000;
    std::size_t val_count = 0;
    std::size_t test_count = 2000;
    double noise = 0.2;
    double positive_rate = 0.1;  // Ctr only
    std::size_t group_count = 10;  // Ctr only
    std::uint64_t seed = 1;

    void validate() const {
        if (train_count < 1) throw SpecError("data: train split must be non-empty");
        if (classes < 2) throw SpecError("data: needs >= 2 classes");
        if (dims < 1) throw SpecError("data: needs >= 1 feature dim");
        if (noise < 0.0) throw SpecError("data: noise must be >= 0");
        if (task == SynthTask::Spirals && dims != 2) {
            throw SpecError("data: spirals are 2-D; got dims=" + std::to_string(dims));
        }
        if (task == SynthTask::Ctr) {
            if (classes != 2) throw SpecError("data: ctr generation is binary (classes=2)");
            if (!(positive_rate > 0.0 && positive_rate < 1.0)) {
                throw SpecError("data: ctr positive rate must lie in (0, 1)");
            }
            if (group_count < 2) throw SpecError("data: ctr needs >= 2 groups");
            if (test_count > 0 && test_count < 2 * group_count) {
                throw SpecError("data: ctr test split needs >= 2 samples per group (got " +
                                std::to_string(test_count) + " for " +
                                std::to_string(group_count) + " groups)");
            }
        }
    }
};

namespace detail {

// Spiral geometry.  These are generator-internal; changing them changes the
// task difficulty, not the interface.
inline constexpr double kSpiralTurns = 1.75;
inline constexpr double kSpiralBaseRadius = 0.12;
inline constexpr double kTwoPi = 6.283185307179586476925286766559;

inline Dataset empty_split(std::size_t dims, std::size_t classes, const char* tag,
                           bool grouped) {
    Dataset d;
    d.features = Tensor(0, dims);
    d.classes = classes;
    d.split = tag;
    if (grouped) d.groups = {};
    return d;
}

}  // namespace detail

// Gaussian blobs (one isotropic cluster per class) or interleaved 2-D
// spirals with angular noise.  All randomness comes from one stream seeded
// by spec.seed, drawn in a fixed order: class structure first, then train,
// val and test rows in sequence.  Splits are disjoint by construction.
inline SplitDatasets gen_classification(const SynthSpec& spec) {
    spec.validate();
    if (spec.task == SynthTask::Ctr) {
        throw SpecError("gen_classification: use gen_ctr for grouped binary data");
    }
    Rng rng(spec.seed);
    std::vector<std::vector<double>> centers;
    if (spec.task == SynthTask::Blobs) {
        centers.resize(spec.classes, std::vector<double>(spec.dims));
        for (auto& c : centers) {
            for (double& v : c) v = rng.uniform(-1.0, 1.0);
        }
    }
    SplitDatasets out;
    const std::size_t counts[3] = {spec.train_count, spec.val_count, spec.test_count};
    const char* tags[3] = {"train", "val", "test"};
    Dataset* dsts[3] = {&out.train, &out.val, &out.test};
    for (int s = 0; s < 3; ++s) {
        const std::size_t m = counts[s];
        Tensor x(m, spec.dims);
        std::vector<std::size_t> labels(m);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t c = i % spec.classes;
            labels[i] = c;
            if (spec.task == SynthTask::Blobs) {
                for (std::size_t d = 0; d < spec.dims; ++d) {
                    x.at(i, d) = centers[c][d] + spec.noise * rng.gaussian();
                }
            } else {
                const double t = rng.uniform();
                const double r = detail::kSpiralBaseRadius + (1.0 - detail::kSpiralBaseRadius) * t;
                const double angle = detail::kSpiralTurns * detail::kTwoPi * t +
                                     detail::kTwoPi * static_cast<double>(c) /
                                         static_cast<double>(spec.classes) +
                                     spec.noise * rng.gaussian();
                x.at(i, 0) = r * std::cos(angle);
                x.at(i, 1) = r * std::sin(angle);
            }
        }
        Dataset& d = *dsts[s];
        d.features = std::move(x);
        d.labels = std::move(labels);
        d.classes = spec.classes;
        d.split = tags[s];
        d.validate();
    }
    return out;
}

// Grouped binary data in the shape of a click-through task: each group has a
// latent preference vector that interacts nonlinearly with the item
// features, labels come from thresholding the (noised) preference score at
// the configured positive rate, and the model input is the group one-hot
// concatenated with the item features.  The raw scores are returned too, so
// callers can verify that the generating rule itself ranks perfectly at zero
// noise.
struct CtrData {
    SplitDatasets splits;
    std::vector<double> train_scores, val_scores, test_scores;  // raw (noise-free) scores
};

namespace detail {
inline constexpr std::size_t kCtrLatentDim = 4;
}

inline CtrData gen_ctr(const SynthSpec& spec) {
    spec.validate();
    if (spec.task != SynthTask::Ctr) throw SpecError("gen_ctr: spec.task must be Ctr");
    Rng rng(spec.seed);
    const std::size_t G = spec.group_count, D = spec.dims, K = detail::kCtrLatentDim;
    const std::size_t total = spec.train_count + spec.val_count + spec.test_count;

    std::vector<double> latent(G * K);
    for (double& v : latent) v = rng.gaussian();
    std::vector<double> proj(K * D);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(D));
    for (double& v : proj) v = rng.gaussian() * proj_scale;

    std::vector<std::vector<double>> items(total, std::vector<double>(D));
    std::vector<std::int64_t> group_of(total);
    std::vector<double> raw(total), noised(total);
    for (std::size_t i = 0; i < total; ++i) {
        group_of[i] = static_cast<std::int64_t>(i % G);
        for (double& v : items[i]) v = rng.gaussian();
        double score = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double h = 0.0;
            for (std::size_t d = 0; d < D; ++d) h += proj[k * D + d] * items[i][d];
            score += latent[static_cast<std::size_t>(group_of[i]) * K + k] * std::tanh(h);
        }
        raw[i] = score;
        noised[i] = score + spec.noise * rng.gaussian();
    }

    // Global threshold at the empirical (1 - rate) quantile of the noised
    // scores, so the positive count lands on round(total * rate) exactly, up
    // to score ties (measure zero for continuous draws).
    const std::size_t want_pos = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(spec.positive_rate * static_cast<double>(total))),
        1, total - 1);
    std::vector<double> sorted = noised;
    std::sort(sorted.begin(), sorted.end());
    const double threshold = sorted[total - want_pos];  // label = (score >= threshold)
    std::vector<std::size_t> labels(total);
    for (std::size_t i = 0; i < total; ++i) labels[i] = noised[i] >= threshold ? 1 : 0;

    // Guarantee both classes per group in the test split, flipping the most
    // marginal member where a group came out one-sided.
    const std::size_t test_begin = spec.train_count + spec.val_count;
    if (spec.test_count > 0) {
        for (std::size_t g = 0; g < G; ++g) {
            std::size_t pos = 0, neg = 0, hi = total, lo = total;
            for (std::size_t i = test_begin; i < total; ++i) {
                if (group_of[i] != static_cast<std::int64_t>(g)) continue;
                (labels[i] == 1 ? pos : neg) += 1;
                if (hi == total || noised[i] > noised[hi]) hi = i;
                if (lo == total || noised[i] < noised[lo]) lo = i;
            }
            if (pos + neg < 2) continue;  // spec.validate() rules this out
            if (pos == 0) labels[hi] = 1;
            if (neg == 0) labels[lo] = 0;
        }
    }

    CtrData out;
    const std::size_t counts[3] = {spec.train_count, spec.val_count, spec.test_count};
    const std::size_t begins[3] = {0, spec.train_count, test_begin};
    const char* tags[3] = {"train", "val", "test"};
    Dataset* dsts[3] = {&out.splits.train, &out.splits.val, &out.splits.test};
    std::vector<double>* scores[3] = {&out.train_scores, &out.val_scores, &out.test_scores};
    for (int s = 0; s < 3; ++s) {
        const std::size_t m = counts[s], b = begins[s];
        Tensor x(m, G + D);
        Dataset& d = *dsts[s];
        d.labels.resize(m);
        d.groups.resize(m);
        scores[s]->resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            const std::size_t src = b + i;
            x.at(i, static_cast<std::size_t>(group_of[src])) = 1.0;
            for (std::size_t dd = 0; dd < D; ++dd) x.at(i, G + dd) = items[src][dd];
            d.labels[i] = labels[src];
            d.groups[i] = group_of[src];
            (*scores[s])[i] = raw[src];
        }
        d.features = std::move(x);
        d.classes = 2;
        d.split = tags[s];
        d.validate();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

struct Batch {
    Tensor x;                         // b x D
    Tensor y;                         // b x classes, one-hot
    std::vector<std::size_t> labels;  // b
    std::vector<std::int64_t> groups;  // empty when the dataset is ungrouped
};

// One epoch's batches: a seeded permutation of the dataset, sliced into
// batch_size rows (last batch short).  Every row appears exactly once; the
// one-hot matrix is built here, not stored in the dataset.
inline std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size,
                                  std::uint64_t seed) {
    if (batch_size < 1) throw SpecError("batches: batch size must be >= 1");
    ds.validate();
    Rng rng(seed);
    const std::vector<std::size_t> order = rng.permutation(ds.size());
    std::vector<Batch> out;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
        const std::size_t b = std::min(batch_size, ds.size() - start);
        Batch batch;
        batch.x = Tensor(b, ds.dim());
        batch.y = Tensor(b, ds.classes);
        batch.labels.resize(b);
        if (ds.grouped()) batch.groups.resize(b);
        for (std::size_t i = 0; i < b; ++i) {
            const std::size_t src = order[start + i];
            for (std::size_t d = 0; d < ds.dim(); ++d) batch.x.at(i, d) = ds.features.at(src, d);
            batch.labels[i] = ds.labels[src];
            batch.y.at(i, ds.labels[src]) = 1.0;
            if (ds.grouped()) batch.groups[i] = ds.groups[src];
        }
        out.push_back(std::move(batch));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV import/export
//
// Header: label,group,f0,f1,...   group is -1 on every row of ungrouped
// data.  Features are written with shortest round-trip formatting, so
// export -> import reproduces the matrix bitwise.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

}  // namespace detail

inline void write_csv(const Dataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream f(path);
    if (!f) throw IoError("write_csv: cannot open '" + path + "' for writing");
    f << "label,group";
    for (std::size_t d = 0; d < ds.dim(); ++d) f << ",f" << d;
    f << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        f << ds.labels[i] << ',' << (ds.grouped() ? ds.groups[i] : -1);
        for (std::size_t d = 0; d < ds.dim(); ++d) {
            f << ',' << detail::format_double(ds.features.at(i, d));
        }
        f << "\n";
    }
    if (!f) throw IoError("write_csv: write to '" + path + "' failed");
}

inline Dataset read_csv(const std::string& path, const std::string& split_tag,
                        std::size_t classes = 0) {
    std::ifstream f(path);
    if (!f) throw IoError("read_csv: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(f, line)) throw FormatError("read_csv: '" + path + "' is empty");
    if (line.rfind("label,group", 0) != 0) {
        throw FormatError("read_csv: '" + path + "' line 1: header must start with label,group");
    }
    std::size_t dims = 0;
    {
        std::istringstream hs(line);
        std::string col;
        int idx = 0;
        while (std::getline(hs, col, ',')) {
            if (idx >= 2 && col != "f" + std::to_string(idx - 2)) {
                throw FormatError("read_csv: '" + path + "' line 1: unexpected column '" + col +
                                  "'");
            }
            ++idx;
        }
        dims = static_cast<std::size_t>(idx - 2);
    }
    std::vector<double> values;
    std::vector<std::size_t> labels;
    std::vector<std::int64_t> groups;
    std::size_t lineno = 1;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::size_t col = 0;
        std::int64_t label = -1, group = -2;
        while (std::getline(ls, cell, ',')) {
            const char* b = cell.data();
            const char* e = b + cell.size();
            if (col == 0 || col == 1) {
                std::int64_t v = 0;
                auto [p, ec] = std::from_chars(b, e, v);
                if (ec != std::errc() || p != e) {
                    throw FormatError("read_csv: '" + path + "' line " + std::to_string(lineno) +
                                      ": bad integer '" + cell + "'");
                }
                (col == 0 ? label : group) = v;
            } else {
                double v = 0.0;
                auto [p, ec] = std::from_chars(b, e, v);
                if (ec != std::errc() || p != e) {
                    throw FormatError("read_csv: '" + path + "' line " + std::to_string(lineno) +
                                      ": bad number '" + cell + "'");
                }
                values.push_back(v);
            }
            ++col;
        }
        if (col != dims + 2) {
            throw FormatError("read_csv: '" + path + "' line " + std::to_string(lineno) + ": " +
                              std::to_string(col) + " columns, expected " +
                              std::to_string(dims + 2));
        }
        if (label < 0) {
            throw FormatError("read_csv: '" + path + "' line " + std::to_string(lineno) +
                              ": negative label");
        }
        labels.push_back(static_cast<std::size_t>(label));
        groups.push_back(group);
    }
    const std::size_t m = labels.size();
    Dataset ds;
    ds.features = Tensor(m, dims, std::move(values));
    ds.labels = std::move(labels);
    ds.split = split_tag;
    const bool all_ungrouped =
        std::all_of(groups.begin(), groups.end(), [](std::int64_t g) { return g == -1; });
    if (!all_ungrouped) {
        for (std::size_t i = 0; i < m; ++i) {
            if (groups[i] < 0) {
                throw FormatError("read_csv: '" + path + "' mixes grouped and ungrouped rows");
            }
        }
        ds.groups = std::move(groups);
    }
    std::size_t max_label = 0;
    for (std::size_t y : ds.labels) max_label = std::max(max_label, y);
    ds.classes = classes > 0 ? classes : std::max<std::size_t>(max_label + 1, 2);
    ds.validate();
    return ds;
}

}  // namespace rocket
