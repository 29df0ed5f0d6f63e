#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <vector>

#include "rocketnet/errors.hpp"
#include "rocketnet/tensor.hpp"

namespace rocket {

// Fraction of rows whose argmax class (ties broken toward the lowest index)
// differs from the label.
inline double error_rate(const Tensor& scores, const std::vector<std::size_t>& labels) {
    if (scores.rows() != labels.size()) {
        throw DimensionError("error_rate: " + std::to_string(scores.rows()) + " score rows vs " +
                             std::to_string(labels.size()) + " labels");
    }
    if (labels.empty()) throw ContractError("error_rate: empty input");
    std::size_t wrong = 0;
    for (std::size_t i = 0; i < scores.rows(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < scores.cols(); ++c) {
            if (scores.at(i, c) > scores.at(i, best)) best = c;
        }
        if (best != labels[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(labels.size());
}

// Binary AUC via rank statistics, O(M log M).  Tied scores get their average
// rank, which charges half credit per tied positive/negative pair, exactly
// matching the quadratic count-all-pairs definition.  Undefined (nullopt)
// when only one class is present.
inline std::optional<double> auc(const std::vector<double>& scores,
                                 const std::vector<std::size_t>& labels) {
    if (scores.size() != labels.size()) {
        throw DimensionError("auc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
    }
    std::size_t n_pos = 0;
    for (std::size_t y : labels) {
        if (y > 1) throw SpecError("auc: labels must be 0/1");
        n_pos += y;
    }
    const std::size_t n_neg = labels.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        return scores[a] < scores[b];
    });
    double pos_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        // 1-based ranks i+1 .. j averaged over the tie run.
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) pos_rank_sum += avg_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    const double u = pos_rank_sum - np * (np + 1.0) / 2.0;
    return u / (np * nn);
}

// Group-averaged AUC: per-group AUC weighted by the group's sample count.
// Groups with a single class have no AUC and are excluded (their samples do
// not contribute weight either).  Undefined when no group qualifies.
inline std::optional<double> gauc(const std::vector<double>& scores,
                                  const std::vector<std::size_t>& labels,
                                  const std::vector<std::int64_t>& groups) {
    if (scores.size() != labels.size() || scores.size() != groups.size()) {
        throw DimensionError("gauc: scores/labels/groups lengths differ");
    }
    std::map<std::int64_t, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        if (groups[i] < 0) throw SpecError("gauc: negative group id");
        members[groups[i]].push_back(i);
    }
    double weighted = 0.0, weight = 0.0;
    for (const auto& [g, idx] : members) {
        std::vector<double> s;
        std::vector<std::size_t> y;
        s.reserve(idx.size());
        y.reserve(idx.size());
        for (std::size_t i : idx) {
            s.push_back(scores[i]);
            y.push_back(labels[i]);
        }
        const std::optional<double> a = auc(s, y);
        if (!a) continue;
        weighted += static_cast<double>(idx.size()) * *a;
        weight += static_cast<double>(idx.size());
    }
    if (weight == 0.0) return std::nullopt;
    return weighted / weight;
}

// Everything one evaluation pass reports.  Optional entries are absent when
// the quantity is undefined for the dataset (no booster, multiclass AUC,
// ungrouped GAUC).
struct EvalReport {
    std::size_t samples = 0;
    double error_light = 0.0;
    std::optional<double> error_booster;
    std::optional<double> auc_light;
    std::optional<double> gauc_light;
};

}  // namespace rocket
