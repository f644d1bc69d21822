#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "segline/corpus.hpp"

namespace segline {

struct WindowCounts {
    std::size_t mismatches = 0;
    std::size_t windows = 0;
    bool operator==(const WindowCounts&) const = default;
};

// k = max(1, round(L / 2)), L = total sentences / total segments over the
// gold segmentations, rounding half away from zero.
std::size_t window_size(std::span<const Segmentation> gold);

// Both metrics use k' = min(k, n - 1) and windows i = 0 .. n - 1 - k'.
// Pk compares "s_i and s_{i+k'} share a segment"; WindowDiff compares the
// number of boundaries b with i <= b < i + k'. n <= 1 gives (0, 0).
WindowCounts pk(const Segmentation& ref, const Segmentation& hyp, std::size_t k);
WindowCounts windowdiff(const Segmentation& ref, const Segmentation& hyp, std::size_t k);

// Micro-averaged F1 for single-label predictions, i.e. accuracy.
double micro_f1(std::span<const int> predicted, std::span<const int> gold);

// sum(mismatches) / sum(windows); 0.0 (with a warning) when no document has a
// window.
double aggregate(std::span<const WindowCounts> per_doc);

struct MetricReport {
    double pk = 0.0;
    double windowdiff = 0.0;
    std::optional<double> f1_stp;
    std::optional<double> f1_tc;
    std::optional<double> f1_nsp;
    std::size_t k_used = 0;
    std::size_t windows_counted = 0;
    std::size_t docs = 0;

    // {"pk", "windowdiff", "k", "per_head_f1": {...}, "docs", "windows"}
    nlohmann::json to_json() const;
};

// Corpus-level Pk/WindowDiff with k taken from the gold side (unless given),
// plus STP F1 over adjacent-pair decisions.
MetricReport evaluate(std::span<const Segmentation> gold, std::span<const Segmentation> hyp,
                      std::optional<std::size_t> k = std::nullopt);

}  // namespace segline
