#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdlib>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "stepwise/errors.hpp"

namespace stepwise {

/// CEFR proficiency levels, ordered from easiest (A1) to hardest (C2).
/// The underlying value is the ordinal index 1..6; all RMSE, adjacency and
/// planning arithmetic happens on these indices.
enum class Level : int {
    A1 = 1,
    A2 = 2,
    B1 = 3,
    B2 = 4,
    C1 = 5,
    C2 = 6,
};

constexpr int level_index(Level level) { return static_cast<int>(level); }

/// All six levels in ascending index order.
constexpr std::array<Level, 6> all_levels() {
    return {Level::A1, Level::A2, Level::B1, Level::B2, Level::C1, Level::C2};
}

inline std::string_view render(Level level) {
    switch (level) {
        case Level::A1: return "A1";
        case Level::A2: return "A2";
        case Level::B1: return "B1";
        case Level::B2: return "B2";
        case Level::C1: return "C1";
        case Level::C2: return "C2";
    }
    throw UnknownLevelError("corrupt level value");
}

inline Level level_from_index(int index) {
    if (index < 1 || index > 6) {
        throw UnknownLevelError("level index out of range: " + std::to_string(index));
    }
    return static_cast<Level>(index);
}

/// Parses one of the six CEFR symbols, case-insensitively.
inline Level parse_level(std::string_view text) {
    if (text.size() == 2) {
        const char band = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
        const char digit = text[1];
        if ((band == 'A' || band == 'B' || band == 'C') && (digit == '1' || digit == '2')) {
            return level_from_index((band - 'A') * 2 + (digit - '1') + 1);
        }
    }
    throw UnknownLevelError("unknown CEFR level: \"" + std::string(text) + "\"");
}

/// Absolute index distance; "one step" in the reward sense is distance 1.
inline int level_distance(Level a, Level b) { return std::abs(level_index(a) - level_index(b)); }

/// One simplification move. Only downward (source above target) pairs exist.
struct Transition {
    Level source;
    Level target;

    Transition(Level source_level, Level target_level) : source(source_level), target(target_level) {
        if (level_index(target) >= level_index(source)) {
            throw InvalidPairError("transition must move downward: " + std::string(render(source_level)) +
                                   " -> " + std::string(render(target_level)));
        }
    }

    bool operator==(const Transition& other) const {
        return source == other.source && target == other.target;
    }

    // Canonical order: descending source, then descending target. Matches the
    // enumeration order of downward_transitions so serialized maps are stable.
    bool operator<(const Transition& other) const {
        return std::tuple(-level_index(source), -level_index(target)) <
               std::tuple(-level_index(other.source), -level_index(other.target));
    }
};

inline std::string render(const Transition& t) {
    return std::string(render(t.source)) + "->" + std::string(render(t.target));
}

/// A strictly descending route through the level space, source first.
class LevelPath {
public:
    explicit LevelPath(std::vector<Level> levels) : levels_(std::move(levels)) {
        if (levels_.size() < 2) {
            throw InvalidPathError("a level path needs at least a source and a target");
        }
        for (std::size_t i = 1; i < levels_.size(); ++i) {
            if (level_index(levels_[i]) >= level_index(levels_[i - 1])) {
                throw InvalidPathError("level path must strictly descend: " + render_levels(levels_));
            }
        }
    }

    const std::vector<Level>& levels() const { return levels_; }
    Level source() const { return levels_.front(); }
    Level target() const { return levels_.back(); }
    std::size_t step_count() const { return levels_.size() - 1; }

    Transition step(std::size_t i) const { return Transition(levels_.at(i), levels_.at(i + 1)); }

    std::string to_string() const { return render_levels(levels_); }

    bool operator==(const LevelPath& other) const { return levels_ == other.levels_; }

private:
    static std::string render_levels(const std::vector<Level>& levels) {
        std::string out = "[";
        for (std::size_t i = 0; i < levels.size(); ++i) {
            if (i > 0) out += ", ";
            out += render(levels[i]);
        }
        out += "]";
        return out;
    }

    std::vector<Level> levels_;
};

/// Every downward transition from the given sources to targets at or above
/// the floor, in canonical order (descending source, then descending target).
inline std::vector<Transition> downward_transitions(std::vector<Level> sources, Level target_floor) {
    std::sort(sources.begin(), sources.end(),
              [](Level a, Level b) { return level_index(a) > level_index(b); });
    sources.erase(std::unique(sources.begin(), sources.end()), sources.end());

    std::vector<Transition> out;
    for (Level source : sources) {
        for (int idx = level_index(source) - 1; idx >= level_index(target_floor); --idx) {
            out.emplace_back(source, level_from_index(idx));
        }
    }
    return out;
}

}  // namespace stepwise
