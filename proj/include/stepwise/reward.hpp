#pragma once

#include <algorithm>
#include <limits>
#include <map>
#include <optional>
#include <string>

#include <json.hpp>

#include "stepwise/errors.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

/// Per-sentence verification outcome score: +1 on exact target match,
/// +0.5 when the achieved level differs by one step, -1 otherwise.
inline double per_sentence_reward(Level achieved, Level target) {
    const int distance = level_distance(achieved, target);
    if (distance == 0) return 1.0;
    if (distance == 1) return 0.5;
    return -1.0;
}

/// Aggregated outcomes for one transition cell.
struct CellStats {
    double mean_score = 0.0;
    std::size_t sample_count = 0;
    std::size_t exact_count = 0;
    std::size_t adjacent_count = 0;
    std::size_t miss_count = 0;

    void add_outcome(Level achieved, Level target) {
        const int distance = level_distance(achieved, target);
        if (distance == 0) ++exact_count;
        else if (distance == 1) ++adjacent_count;
        else ++miss_count;
        ++sample_count;
        mean_score = (static_cast<double>(exact_count) * 1.0 + static_cast<double>(adjacent_count) * 0.5 +
                      static_cast<double>(miss_count) * -1.0) /
                     static_cast<double>(sample_count);
    }

    bool operator==(const CellStats&) const = default;
};

/// Per-transition effectiveness scores built from validation outcomes.
/// Raw matrices hold outcome means in [-1, 1]; normalized matrices hold
/// min-max rescaled means in [0, 1] with empty cells pinned at 0.
struct RewardMatrix {
    std::map<Transition, CellStats> cells;
    bool normalized = false;

    /// Score for a transition, or nullopt when the cell is absent.
    std::optional<double> score(const Transition& t) const {
        const auto it = cells.find(t);
        if (it == cells.end()) return std::nullopt;
        return it->second.mean_score;
    }

    /// A cell is empty when it is absent or collected no samples.
    bool cell_empty(const Transition& t) const {
        const auto it = cells.find(t);
        return it == cells.end() || it->second.sample_count == 0;
    }

    bool operator==(const RewardMatrix&) const = default;
};

/// Min-max normalization over cells with samples; empty cells score 0 and
/// stay flagged via sample_count == 0. A constant matrix maps to all 0.5.
inline RewardMatrix normalize(const RewardMatrix& matrix) {
    if (matrix.normalized) {
        throw AlreadyNormalizedError("reward matrix is already normalized");
    }
    double min_score = std::numeric_limits<double>::infinity();
    double max_score = -std::numeric_limits<double>::infinity();
    std::size_t populated = 0;
    for (const auto& [transition, cell] : matrix.cells) {
        if (cell.sample_count == 0) continue;
        ++populated;
        min_score = std::min(min_score, cell.mean_score);
        max_score = std::max(max_score, cell.mean_score);
    }
    if (populated == 0) {
        throw EmptyMatrixError("reward matrix has no populated cell to normalize");
    }

    RewardMatrix out = matrix;
    out.normalized = true;
    const double range = max_score - min_score;
    for (auto& [transition, cell] : out.cells) {
        if (cell.sample_count == 0) {
            cell.mean_score = 0.0;
        } else if (range == 0.0) {
            cell.mean_score = 0.5;
        } else {
            cell.mean_score = (cell.mean_score - min_score) / range;
        }
    }
    return out;
}

inline nlohmann::json reward_matrix_to_json(const RewardMatrix& matrix) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [transition, cell] : matrix.cells) {
        cells.push_back({{"source", std::string(render(transition.source))},
                         {"target", std::string(render(transition.target))},
                         {"mean_score", cell.mean_score},
                         {"sample_count", cell.sample_count},
                         {"exact_count", cell.exact_count},
                         {"adjacent_count", cell.adjacent_count},
                         {"miss_count", cell.miss_count}});
    }
    return nlohmann::json{{"cells", std::move(cells)}, {"normalized", matrix.normalized}};
}

inline RewardMatrix reward_matrix_from_json(const nlohmann::json& j) {
    RewardMatrix matrix;
    matrix.normalized = j.at("normalized").get<bool>();
    for (const nlohmann::json& entry : j.at("cells")) {
        const Transition transition(parse_level(entry.at("source").get<std::string>()),
                                    parse_level(entry.at("target").get<std::string>()));
        CellStats cell;
        cell.mean_score = entry.at("mean_score").get<double>();
        cell.sample_count = entry.at("sample_count").get<std::size_t>();
        cell.exact_count = entry.at("exact_count").get<std::size_t>();
        cell.adjacent_count = entry.at("adjacent_count").get<std::size_t>();
        cell.miss_count = entry.at("miss_count").get<std::size_t>();
        if (cell.exact_count + cell.adjacent_count + cell.miss_count != cell.sample_count) {
            throw ProtocolError("reward cell counts do not add up for " + render(transition));
        }
        matrix.cells.emplace(transition, cell);
    }
    return matrix;
}

}  // namespace stepwise
