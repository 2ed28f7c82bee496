#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stepwise/backends.hpp"
#include "stepwise/cascade.hpp"
#include "stepwise/errors.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

namespace detail {

// Average ranks (1-based); tied values share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const int> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double shared = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
    const double n = static_cast<double>(x.size());
    const double mean_x = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double mean_y = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double cov = 0.0, var_x = 0.0, var_y = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mean_x;
        const double dy = y[i] - mean_y;
        cov += dx * dy;
        var_x += dx * dx;
        var_y += dy * dy;
    }
    if (var_x == 0.0 || var_y == 0.0) {
        throw DegenerateInputError("correlation is undefined for a constant list");
    }
    return cov / std::sqrt(var_x * var_y);
}

inline void require_paired(std::span<const int> targets, std::span<const int> estimates) {
    if (targets.empty() || estimates.empty()) {
        throw DegenerateInputError("metric input lists are empty");
    }
    if (targets.size() != estimates.size()) {
        throw DegenerateInputError("metric input lists have different lengths");
    }
}

inline bool is_constant(std::span<const int> values) {
    return std::all_of(values.begin(), values.end(), [&](int v) { return v == values.front(); });
}

}  // namespace detail

/// Spearman rank correlation with average-rank tie handling (Pearson
/// correlation of the rank vectors).
inline double spearman(std::span<const int> targets, std::span<const int> estimates) {
    detail::require_paired(targets, estimates);
    if (detail::is_constant(targets) || detail::is_constant(estimates)) {
        throw DegenerateInputError("spearman is undefined when either list is constant");
    }
    const std::vector<double> rank_t = detail::average_ranks(targets);
    const std::vector<double> rank_e = detail::average_ranks(estimates);
    return detail::pearson(rank_t, rank_e);
}

/// Root mean squared error over level indices.
inline double rmse(std::span<const int> targets, std::span<const int> estimates) {
    detail::require_paired(targets, estimates);
    double sum = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const double d = static_cast<double>(targets[i] - estimates[i]);
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(targets.size()));
}

/// Percentage of estimates within `tolerance` levels of the target: 0 gives
/// exact accuracy, 1 gives adjacent accuracy.
inline double accuracy(std::span<const int> targets, std::span<const int> estimates, int tolerance) {
    detail::require_paired(targets, estimates);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        if (std::abs(targets[i] - estimates[i]) <= tolerance) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(targets.size());
}

/// Mean similarity between originals and simplifications, as a percentage.
/// An empty batch yields nullopt rather than a misleading 0.
inline std::optional<double> meaning_preservation(
    const std::vector<std::pair<std::string, std::string>>& pairs, SimilarityScorer& scorer) {
    if (pairs.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& [original, simplified] : pairs) {
        sum += scorer.similarity(original, simplified);
    }
    return 100.0 * sum / static_cast<double>(pairs.size());
}

/// One row of automatic metrics. spearman_rho is absent (not zero) when the
/// inputs are constant; mean_similarity_pct is absent for empty batches.
struct MetricSummary {
    std::optional<double> spearman_rho;
    double rmse = 0.0;
    double adjacent_accuracy_pct = 0.0;
    double exact_accuracy_pct = 0.0;
    std::optional<double> mean_similarity_pct;
    std::size_t n = 0;
};

struct MetricReport {
    MetricSummary overall;
    std::map<Transition, MetricSummary> per_transition;
};

namespace detail {

inline MetricSummary summarize(std::span<const CascadeResult> results, SimilarityScorer& scorer) {
    std::vector<int> targets, estimates;
    std::vector<std::pair<std::string, std::string>> pairs;
    targets.reserve(results.size());
    estimates.reserve(results.size());
    for (const CascadeResult& r : results) {
        targets.push_back(level_index(r.target_level));
        estimates.push_back(level_index(r.achieved_level));
        pairs.emplace_back(r.input_text, r.final_text);
    }

    MetricSummary summary;
    summary.n = results.size();
    if (!is_constant(targets) && !is_constant(estimates)) {
        summary.spearman_rho = spearman(targets, estimates);
    }
    summary.rmse = rmse(targets, estimates);
    summary.adjacent_accuracy_pct = accuracy(targets, estimates, 1);
    summary.exact_accuracy_pct = accuracy(targets, estimates, 0);
    summary.mean_similarity_pct = meaning_preservation(pairs, scorer);
    return summary;
}

}  // namespace detail

/// Full automatic-metric suite over a batch of cascade results, pooled plus
/// a per-transition breakdown. Transitions with no data are simply absent.
inline MetricReport build_report(std::span<const CascadeResult> results, SimilarityScorer& scorer) {
    if (results.empty()) {
        throw DegenerateInputError("cannot build a metric report from an empty batch");
    }
    MetricReport report;
    report.overall = detail::summarize(results, scorer);

    std::map<Transition, std::vector<CascadeResult>> grouped;
    for (const CascadeResult& r : results) {
        grouped[Transition(r.source_level, r.target_level)].push_back(r);
    }
    for (const auto& [transition, group] : grouped) {
        report.per_transition.emplace(transition, detail::summarize(group, scorer));
    }
    return report;
}

inline nlohmann::json metric_summary_to_json(const MetricSummary& summary) {
    nlohmann::json j{{"rmse", summary.rmse},
                     {"adjacent_accuracy_pct", summary.adjacent_accuracy_pct},
                     {"exact_accuracy_pct", summary.exact_accuracy_pct},
                     {"n", summary.n}};
    j["spearman_rho"] = summary.spearman_rho ? nlohmann::json(*summary.spearman_rho) : nlohmann::json(nullptr);
    j["mean_similarity_pct"] =
        summary.mean_similarity_pct ? nlohmann::json(*summary.mean_similarity_pct) : nlohmann::json(nullptr);
    return j;
}

inline MetricSummary metric_summary_from_json(const nlohmann::json& j) {
    MetricSummary summary;
    summary.rmse = j.at("rmse").get<double>();
    summary.adjacent_accuracy_pct = j.at("adjacent_accuracy_pct").get<double>();
    summary.exact_accuracy_pct = j.at("exact_accuracy_pct").get<double>();
    summary.n = j.at("n").get<std::size_t>();
    if (!j.at("spearman_rho").is_null()) summary.spearman_rho = j.at("spearman_rho").get<double>();
    if (!j.at("mean_similarity_pct").is_null()) {
        summary.mean_similarity_pct = j.at("mean_similarity_pct").get<double>();
    }
    return summary;
}

inline nlohmann::json metric_report_to_json(const MetricReport& report) {
    nlohmann::json breakdown = nlohmann::json::array();
    for (const auto& [transition, summary] : report.per_transition) {
        nlohmann::json cell = metric_summary_to_json(summary);
        cell["source"] = std::string(render(transition.source));
        cell["target"] = std::string(render(transition.target));
        breakdown.push_back(std::move(cell));
    }
    return nlohmann::json{{"overall", metric_summary_to_json(report.overall)},
                          {"per_transition", std::move(breakdown)}};
}

inline MetricReport metric_report_from_json(const nlohmann::json& j) {
    MetricReport report;
    report.overall = metric_summary_from_json(j.at("overall"));
    for (const nlohmann::json& cell : j.at("per_transition")) {
        const Transition transition(parse_level(cell.at("source").get<std::string>()),
                                    parse_level(cell.at("target").get<std::string>()));
        report.per_transition.emplace(transition, metric_summary_from_json(cell));
    }
    return report;
}

/// Aligned plain-text table in the usual result layout
/// (rho, AdjAcc, ExactAcc, RMSE, STS), one row per labeled report.
inline std::string render_metric_table(const std::vector<std::pair<std::string, MetricSummary>>& rows) {
    std::size_t label_width = std::string("configuration").size();
    for (const auto& [label, summary] : rows) label_width = std::max(label_width, label.size());

    std::ostringstream out;
    out << std::left << std::setw(static_cast<int>(label_width) + 2) << "configuration" << std::right
        << std::setw(7) << "rho" << std::setw(10) << "AdjAcc" << std::setw(10) << "ExactAcc" << std::setw(8)
        << "RMSE" << std::setw(9) << "STS" << std::setw(7) << "n" << '\n';
    out << std::string(label_width + 2 + 7 + 10 + 10 + 8 + 9 + 7, '-') << '\n';
    out << std::fixed;
    for (const auto& [label, summary] : rows) {
        out << std::left << std::setw(static_cast<int>(label_width) + 2) << label << std::right;
        if (summary.spearman_rho) {
            out << std::setw(7) << std::setprecision(2) << *summary.spearman_rho;
        } else {
            out << std::setw(7) << "--";
        }
        out << std::setw(10) << std::setprecision(2) << summary.adjacent_accuracy_pct;
        out << std::setw(10) << std::setprecision(2) << summary.exact_accuracy_pct;
        out << std::setw(8) << std::setprecision(2) << summary.rmse;
        if (summary.mean_similarity_pct) {
            out << std::setw(9) << std::setprecision(2) << *summary.mean_similarity_pct;
        } else {
            out << std::setw(9) << "--";
        }
        out << std::setw(7) << summary.n << '\n';
    }
    return out.str();
}

}  // namespace stepwise
