#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stepwise/errors.hpp"
#include "stepwise/levels.hpp"
#include "stepwise/reward.hpp"

namespace stepwise {

/// Path objective. Total reward is the literal accumulated-reward objective;
/// mean reward (total divided by step count) is the default because min-max
/// normalized rewards are non-negative and would otherwise always favor the
/// longest path.
enum class ObjectiveMode { TotalReward, MeanReward };

inline std::string_view render(ObjectiveMode mode) {
    return mode == ObjectiveMode::TotalReward ? "total_reward" : "mean_reward";
}

inline ObjectiveMode parse_objective_mode(std::string_view name) {
    if (name == "total_reward") return ObjectiveMode::TotalReward;
    if (name == "mean_reward") return ObjectiveMode::MeanReward;
    throw Error("unknown objective mode: " + std::string(name));
}

struct PlanObjective {
    ObjectiveMode mode = ObjectiveMode::MeanReward;
    bool forbid_empty_cells = false;
};

struct PlanResult {
    LevelPath path;
    double objective_value = 0.0;
    // (level, steps used to reach it) -> best accumulated reward.
    std::map<std::pair<Level, int>, double> dp_table_summary;
};

namespace detail {

// Tie preference between equal-value candidates: fewer steps first, then the
// path whose earliest differing level is higher.
inline bool path_levels_preferred(const std::vector<Level>& a, const std::vector<Level>& b) {
    if (a.size() != b.size()) return a.size() < b.size();
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) return level_index(a[i]) > level_index(b[i]);
    }
    return false;
}

struct PathCandidate {
    std::vector<Level> levels;
    double total = 0.0;

    double objective(ObjectiveMode mode) const {
        const double steps = static_cast<double>(levels.size() - 1);
        return mode == ObjectiveMode::TotalReward ? total : total / steps;
    }
};

// True when `a` should replace `b` as the incumbent best candidate.
inline bool candidate_preferred(const PathCandidate& a, const PathCandidate& b, ObjectiveMode mode) {
    const double oa = a.objective(mode);
    const double ob = b.objective(mode);
    if (oa != ob) return oa > ob;
    return path_levels_preferred(a.levels, b.levels);
}

inline void require_plannable(const RewardMatrix& matrix, Level source, Level target) {
    if (level_index(target) >= level_index(source)) {
        throw InvalidPairError("cannot plan from " + std::string(render(source)) + " to " +
                               std::string(render(target)) + ": target must be strictly below source");
    }
    if (!matrix.normalized) {
        throw PreconditionError("planning requires a normalized reward matrix");
    }
}

}  // namespace detail

/// Dynamic program over V(level, t) = best reward reachable at `level` in
/// exactly t steps. Each cell keeps its best prefix, so the optimal path is
/// read off the winning terminal cell directly.
inline PlanResult plan(const RewardMatrix& matrix, Level source, Level target,
                       const PlanObjective& objective = {}) {
    detail::require_plannable(matrix, source, target);
    const int source_idx = level_index(source);
    const int target_idx = level_index(target);
    const int gap = source_idx - target_idx;

    // state[idx][t]: best prefix from source to level `idx` in t steps.
    std::map<std::pair<int, int>, detail::PathCandidate> state;
    state[{source_idx, 0}] = detail::PathCandidate{{source}, 0.0};

    PlanResult result{LevelPath({source, target}), 0.0, {}};
    std::optional<detail::PathCandidate> best_terminal;

    for (int t = 1; t <= gap; ++t) {
        for (int idx = source_idx - 1; idx >= target_idx; --idx) {
            const Level level = level_from_index(idx);
            std::optional<detail::PathCandidate> best;
            for (int prev = source_idx; prev > idx; --prev) {
                const auto it = state.find({prev, t - 1});
                if (it == state.end()) continue;
                const Transition edge(level_from_index(prev), level);
                if (objective.forbid_empty_cells && matrix.cell_empty(edge)) continue;
                detail::PathCandidate candidate = it->second;
                candidate.total += matrix.score(edge).value_or(0.0);
                candidate.levels.push_back(level);
                if (!best || candidate.total > best->total ||
                    (candidate.total == best->total &&
                     detail::path_levels_preferred(candidate.levels, best->levels))) {
                    best = std::move(candidate);
                }
            }
            if (!best) continue;
            result.dp_table_summary[{level, t}] = best->total;
            if (idx == target_idx) {
                if (!best_terminal || detail::candidate_preferred(*best, *best_terminal, objective.mode)) {
                    best_terminal = *best;
                }
            }
            state[{idx, t}] = std::move(*best);
        }
    }

    if (!best_terminal) {
        throw InfeasiblePathError("no feasible path from " + std::string(render(source)) + " to " +
                                  std::string(render(target)) +
                                  (objective.forbid_empty_cells ? " with empty cells forbidden" : ""));
    }
    result.path = LevelPath(best_terminal->levels);
    result.objective_value = best_terminal->objective(objective.mode);
    return result;
}

/// Every strictly descending route from source to target, one per subset of
/// the intermediate levels. 2^(gap-1) paths.
inline std::vector<LevelPath> enumerate_descending_paths(Level source, Level target) {
    if (level_index(target) >= level_index(source)) {
        throw InvalidPairError("cannot enumerate paths from " + std::string(render(source)) + " to " +
                               std::string(render(target)));
    }
    std::vector<Level> intermediates;
    for (int idx = level_index(source) - 1; idx > level_index(target); --idx) {
        intermediates.push_back(level_from_index(idx));
    }
    std::vector<LevelPath> paths;
    const std::size_t subsets = static_cast<std::size_t>(1) << intermediates.size();
    for (std::size_t mask = 0; mask < subsets; ++mask) {
        std::vector<Level> levels{source};
        for (std::size_t bit = 0; bit < intermediates.size(); ++bit) {
            if (mask & (static_cast<std::size_t>(1) << bit)) levels.push_back(intermediates[bit]);
        }
        levels.push_back(target);
        paths.emplace_back(std::move(levels));
    }
    return paths;
}

/// Exhaustive oracle for plan(): scores every candidate path with identical
/// accumulation order and tie-breaks.
inline PlanResult brute_force_plan(const RewardMatrix& matrix, Level source, Level target,
                                   const PlanObjective& objective = {}) {
    detail::require_plannable(matrix, source, target);
    std::optional<detail::PathCandidate> best;
    for (const LevelPath& path : enumerate_descending_paths(source, target)) {
        detail::PathCandidate candidate{path.levels(), 0.0};
        bool feasible = true;
        for (std::size_t i = 0; i < path.step_count(); ++i) {
            const Transition edge = path.step(i);
            if (objective.forbid_empty_cells && matrix.cell_empty(edge)) {
                feasible = false;
                break;
            }
            candidate.total += matrix.score(edge).value_or(0.0);
        }
        if (!feasible) continue;
        if (!best || detail::candidate_preferred(candidate, *best, objective.mode)) {
            best = std::move(candidate);
        }
    }
    if (!best) {
        throw InfeasiblePathError("no feasible path from " + std::string(render(source)) + " to " +
                                  std::string(render(target)) +
                                  (objective.forbid_empty_cells ? " with empty cells forbidden" : ""));
    }
    return PlanResult{LevelPath(best->levels), best->objective(objective.mode), {}};
}

/// The baseline route visiting every intermediate level.
inline LevelPath sequential_path(Level source, Level target) {
    if (level_index(target) >= level_index(source)) {
        throw InvalidPairError("sequential path needs a target strictly below the source");
    }
    std::vector<Level> levels;
    for (int idx = level_index(source); idx >= level_index(target); --idx) {
        levels.push_back(level_from_index(idx));
    }
    return LevelPath(std::move(levels));
}

using PlannedPaths = std::map<std::pair<Level, Level>, LevelPath>;

/// Reduction Ratio of Inference Steps: percentage decrease of total planned
/// step counts against the sequential baseline, over the given pairs.
inline double rris(const std::vector<std::pair<Level, Level>>& pairs, const PlannedPaths& planned) {
    if (pairs.empty()) {
        throw DegenerateInputError("rris needs at least one (source, target) pair");
    }
    std::size_t planned_steps = 0;
    std::size_t sequential_steps = 0;
    for (const auto& [source, target] : pairs) {
        const auto it = planned.find({source, target});
        if (it == planned.end()) {
            throw MissingPlanError("no planned path for " + std::string(render(source)) + "->" +
                                   std::string(render(target)));
        }
        if (it->second.source() != source || it->second.target() != target) {
            throw PreconditionError("planned path endpoints do not match the pair " +
                                    std::string(render(source)) + "->" + std::string(render(target)));
        }
        planned_steps += it->second.step_count();
        sequential_steps += sequential_path(source, target).step_count();
    }
    return 100.0 * (1.0 - static_cast<double>(planned_steps) / static_cast<double>(sequential_steps));
}

inline nlohmann::json plan_to_json(const PlanResult& result, ObjectiveMode mode) {
    nlohmann::json path = nlohmann::json::array();
    for (Level level : result.path.levels()) path.push_back(std::string(render(level)));
    return nlohmann::json{{"source", std::string(render(result.path.source()))},
                          {"target", std::string(render(result.path.target()))},
                          {"path", std::move(path)},
                          {"objective_value", result.objective_value},
                          {"objective_mode", std::string(render(mode))}};
}

/// Per-pair efficiency table plus the aggregate ratio: source, target,
/// planned path and step counts against the sequential baseline.
inline nlohmann::json rris_report_to_json(const std::vector<std::pair<Level, Level>>& pairs,
                                          const PlannedPaths& planned) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [source, target] : pairs) {
        const LevelPath& path = planned.at({source, target});
        nlohmann::json levels = nlohmann::json::array();
        for (Level level : path.levels()) levels.push_back(std::string(render(level)));
        rows.push_back({{"source", std::string(render(source))},
                        {"target", std::string(render(target))},
                        {"path", std::move(levels)},
                        {"planned_steps", path.step_count()},
                        {"sequential_steps", sequential_path(source, target).step_count()}});
    }
    return nlohmann::json{{"pairs", std::move(rows)}, {"rris_percent", rris(pairs, planned)}};
}

}  // namespace stepwise
