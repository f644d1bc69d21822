#include "segline/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "segline/error.hpp"

namespace segline {

namespace {

void require_same_n(const Segmentation& ref, const Segmentation& hyp) {
    if (ref.n != hyp.n)
        throw ShapeError("segmentations disagree on n: " + std::to_string(ref.n) + " vs " + std::to_string(hyp.n));
}

// prefix[i] = number of boundaries b < i, for i in [0, n].
std::vector<std::size_t> boundary_prefix(const Segmentation& s) {
    std::vector<std::size_t> prefix(s.n + 1, 0);
    for (std::size_t b : s.boundaries) prefix[b + 1] = 1;
    for (std::size_t i = 1; i <= s.n; ++i) prefix[i] += prefix[i - 1];
    return prefix;
}

template <typename Disagree>
WindowCounts slide(const Segmentation& ref, const Segmentation& hyp, std::size_t k, Disagree disagree) {
    require_same_n(ref, hyp);
    if (k == 0) throw ConfigError("window size must be >= 1");
    const std::size_t n = ref.n;
    if (n <= 1) return {};
    const std::size_t kk = std::min(k, n - 1);
    const auto pr = boundary_prefix(ref);
    const auto ph = boundary_prefix(hyp);
    WindowCounts out;
    out.windows = n - kk;
    for (std::size_t i = 0; i + kk < n; ++i) {
        const std::size_t cr = pr[i + kk] - pr[i];
        const std::size_t ch = ph[i + kk] - ph[i];
        if (disagree(cr, ch)) ++out.mismatches;
    }
    return out;
}

}  // namespace

std::size_t window_size(std::span<const Segmentation> gold) {
    if (gold.empty()) throw ConfigError("window_size: no gold segmentations");
    std::size_t sentences = 0;
    std::size_t segments = 0;
    for (const auto& s : gold) {
        sentences += s.n;
        segments += s.segment_count();
    }
    if (segments == 0) throw ConfigError("window_size: gold corpus has no sentences");
    const double mean_len = static_cast<double>(sentences) / static_cast<double>(segments);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::round(mean_len / 2.0)));
}

WindowCounts pk(const Segmentation& ref, const Segmentation& hyp, std::size_t k) {
    return slide(ref, hyp, k, [](std::size_t cr, std::size_t ch) { return (cr == 0) != (ch == 0); });
}

WindowCounts windowdiff(const Segmentation& ref, const Segmentation& hyp, std::size_t k) {
    return slide(ref, hyp, k, [](std::size_t cr, std::size_t ch) { return cr != ch; });
}

double micro_f1(std::span<const int> predicted, std::span<const int> gold) {
    if (predicted.size() != gold.size())
        throw ShapeError("micro_f1: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(gold.size()) + " labels");
    if (gold.empty()) throw ShapeError("micro_f1: no labels");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
        if (predicted[i] == gold[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(gold.size());
}

double aggregate(std::span<const WindowCounts> per_doc) {
    std::size_t mismatches = 0;
    std::size_t windows = 0;
    for (const auto& c : per_doc) {
        if (c.windows == 0) continue;
        mismatches += c.mismatches;
        windows += c.windows;
    }
    if (windows == 0) {
        spdlog::warn("aggregate: no document contributed a window; reporting 0");
        return 0.0;
    }
    return static_cast<double>(mismatches) / static_cast<double>(windows);
}

nlohmann::json MetricReport::to_json() const {
    nlohmann::json f1 = nlohmann::json::object();
    if (f1_stp) f1["stp"] = *f1_stp;
    if (f1_tc) f1["tc"] = *f1_tc;
    if (f1_nsp) f1["nsp"] = *f1_nsp;
    return {{"pk", pk},     {"windowdiff", windowdiff}, {"k", k_used},
            {"per_head_f1", f1}, {"docs", docs},        {"windows", windows_counted}};
}

MetricReport evaluate(std::span<const Segmentation> gold, std::span<const Segmentation> hyp,
                      std::optional<std::size_t> k) {
    if (gold.size() != hyp.size())
        throw ShapeError("evaluate: " + std::to_string(gold.size()) + " gold vs " + std::to_string(hyp.size()) +
                         " predicted documents");
    MetricReport report;
    report.k_used = k ? *k : window_size(gold);
    report.docs = gold.size();

    std::vector<WindowCounts> pks;
    std::vector<WindowCounts> wds;
    std::vector<int> pred_stp;
    std::vector<int> gold_stp;
    for (std::size_t d = 0; d < gold.size(); ++d) {
        pks.push_back(pk(gold[d], hyp[d], report.k_used));
        wds.push_back(windowdiff(gold[d], hyp[d], report.k_used));
        report.windows_counted += pks.back().windows;
        const auto gp = boundary_prefix(gold[d]);
        const auto hp = boundary_prefix(hyp[d]);
        for (std::size_t i = 0; i + 1 < gold[d].n; ++i) {
            gold_stp.push_back(gp[i + 1] == gp[i] ? 1 : 0);
            pred_stp.push_back(hp[i + 1] == hp[i] ? 1 : 0);
        }
    }
    report.pk = aggregate(pks);
    report.windowdiff = aggregate(wds);
    if (!gold_stp.empty()) report.f1_stp = micro_f1(pred_stp, gold_stp);
    return report;
}

}  // namespace segline
