#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "stepwise/planner.hpp"

using namespace stepwise;

namespace {

RewardMatrix normalized_matrix(const std::map<std::pair<Level, Level>, double>& scores) {
    RewardMatrix matrix;
    matrix.normalized = true;
    for (const auto& [pair, score] : scores) {
        CellStats cell;
        cell.mean_score = score;
        cell.sample_count = 1;
        cell.exact_count = 1;
        matrix.cells.emplace(Transition(pair.first, pair.second), cell);
    }
    return matrix;
}

std::vector<Transition> all_cells() {
    return downward_transitions({Level::C2, Level::C1, Level::B2, Level::B1, Level::A2}, Level::A1);
}

RewardMatrix full_normalized_matrix(double value) {
    std::map<std::pair<Level, Level>, double> scores;
    for (const Transition& t : all_cells()) scores[{t.source, t.target}] = value;
    return normalized_matrix(scores);
}

RewardMatrix random_normalized_matrix(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    std::map<std::pair<Level, Level>, double> scores;
    for (const Transition& t : all_cells()) scores[{t.source, t.target}] = dist(rng);
    return normalized_matrix(scores);
}

}  // namespace

TEST_CASE("plan prefers the reported C1-skipping chain when C1 cells are weak") {
    // Every cell into or out of C1 scores low; the adjacent chain that skips
    // C1 scores high; direct long jumps are mediocre.
    std::map<std::pair<Level, Level>, double> scores;
    for (const Transition& t : all_cells()) scores[{t.source, t.target}] = 0.3;
    for (Level target : {Level::B2, Level::B1, Level::A2, Level::A1}) {
        scores[{Level::C1, target}] = 0.1;
    }
    scores[{Level::C2, Level::C1}] = 0.1;
    scores[{Level::C2, Level::B2}] = 0.9;
    scores[{Level::B2, Level::B1}] = 0.9;
    scores[{Level::B1, Level::A2}] = 0.9;
    scores[{Level::A2, Level::A1}] = 0.9;
    const RewardMatrix matrix = normalized_matrix(scores);

    const PlanResult result = plan(matrix, Level::C2, Level::A1, PlanObjective{ObjectiveMode::MeanReward});
    CHECK(result.path == LevelPath({Level::C2, Level::B2, Level::B1, Level::A2, Level::A1}));
    CHECK(result.objective_value == Catch::Approx(0.9));

    // The oracle agrees on this engineered matrix.
    const PlanResult oracle = brute_force_plan(matrix, Level::C2, Level::A1, PlanObjective{ObjectiveMode::MeanReward});
    CHECK(oracle.path == result.path);
    CHECK(oracle.objective_value == result.objective_value);
}

TEST_CASE("plan takes the direct edge when it dominates") {
    std::map<std::pair<Level, Level>, double> scores{{{Level::B2, Level::B1}, 0.9}};
    const RewardMatrix matrix = normalized_matrix(scores);
    const PlanResult result = plan(matrix, Level::B2, Level::B1, PlanObjective{});
    CHECK(result.path == LevelPath({Level::B2, Level::B1}));
    CHECK(result.objective_value == Catch::Approx(0.9));
}

TEST_CASE("uniform matrix under mean reward ties break to the direct path") {
    const RewardMatrix matrix = full_normalized_matrix(0.5);
    for (Level source : {Level::C2, Level::C1, Level::B2}) {
        for (Level target : {Level::B1, Level::A2, Level::A1}) {
            if (level_index(target) >= level_index(source)) continue;
            const PlanResult result = plan(matrix, source, target, PlanObjective{ObjectiveMode::MeanReward});
            CHECK(result.path == LevelPath({source, target}));
            CHECK(result.objective_value == Catch::Approx(0.5));
        }
    }
}

TEST_CASE("uniform matrix under total reward walks every level") {
    const RewardMatrix matrix = full_normalized_matrix(0.5);
    const PlanResult result = plan(matrix, Level::C2, Level::A1, PlanObjective{ObjectiveMode::TotalReward});
    CHECK(result.path == sequential_path(Level::C2, Level::A1));
    CHECK(result.objective_value == Catch::Approx(2.5));
}

TEST_CASE("plan validates its preconditions") {
    const RewardMatrix matrix = full_normalized_matrix(0.5);
    CHECK_THROWS_AS(plan(matrix, Level::B1, Level::B2, PlanObjective{}), InvalidPairError);
    CHECK_THROWS_AS(plan(matrix, Level::B1, Level::B1, PlanObjective{}), InvalidPairError);

    RewardMatrix raw = matrix;
    raw.normalized = false;
    CHECK_THROWS_AS(plan(raw, Level::B2, Level::B1, PlanObjective{}), PreconditionError);
}

TEST_CASE("forbid_empty_cells prunes routes and can make planning infeasible") {
    RewardMatrix matrix = full_normalized_matrix(0.5);
    // Make every edge out of C2 empty except C2->C1, and every edge out of
    // C1 empty: with empty cells forbidden there is no route C2 -> A1.
    for (auto& [transition, cell] : matrix.cells) {
        if (transition.source == Level::C2 && transition.target != Level::C1) cell.sample_count = 0;
        if (transition.source == Level::C1) cell.sample_count = 0;
    }
    PlanObjective forbid;
    forbid.forbid_empty_cells = true;
    CHECK_THROWS_AS(plan(matrix, Level::C2, Level::A1, forbid), InfeasiblePathError);
    CHECK_THROWS_AS(brute_force_plan(matrix, Level::C2, Level::A1, forbid), InfeasiblePathError);

    // Feasible under the flag off (monotonicity of feasibility).
    CHECK_NOTHROW(plan(matrix, Level::C2, Level::A1, PlanObjective{}));
}

TEST_CASE("brute force enumerates every subset of intermediate levels") {
    CHECK(enumerate_descending_paths(Level::C2, Level::A1).size() == 16);
    CHECK(enumerate_descending_paths(Level::B2, Level::B1).size() == 1);
    CHECK(enumerate_descending_paths(Level::C1, Level::A1).size() == 8);
}

TEST_CASE("oracle equivalence on randomized matrices") {
    std::mt19937_64 rng(987654321);
    const std::vector<Level> sources{Level::C2, Level::C1, Level::B2};
    const std::vector<Level> targets{Level::B1, Level::A2, Level::A1};
    for (int round = 0; round < 250; ++round) {
        const RewardMatrix matrix = random_normalized_matrix(rng);
        for (const ObjectiveMode mode : {ObjectiveMode::MeanReward, ObjectiveMode::TotalReward}) {
            for (Level source : sources) {
                for (Level target : targets) {
                    const PlanObjective objective{mode, false};
                    const PlanResult fast = plan(matrix, source, target, objective);
                    const PlanResult slow = brute_force_plan(matrix, source, target, objective);
                    REQUIRE(std::abs(fast.objective_value - slow.objective_value) < 1e-9);
                    REQUIRE(fast.path == slow.path);
                }
            }
        }
    }
}

TEST_CASE("plan objective value is reproducible from the path and matrix") {
    std::mt19937_64 rng(555);
    const RewardMatrix matrix = random_normalized_matrix(rng);
    const PlanResult result = plan(matrix, Level::C2, Level::A1, PlanObjective{ObjectiveMode::MeanReward});
    double total = 0.0;
    for (std::size_t i = 0; i < result.path.step_count(); ++i) {
        total += matrix.score(result.path.step(i)).value_or(0.0);
    }
    CHECK(result.objective_value == Catch::Approx(total / static_cast<double>(result.path.step_count())).margin(1e-9));
    CHECK(result.dp_table_summary.count({Level::A1, static_cast<int>(result.path.step_count())}) == 1);
}

TEST_CASE("sequential paths visit every intermediate level") {
    CHECK(sequential_path(Level::C2, Level::A1) ==
          LevelPath({Level::C2, Level::C1, Level::B2, Level::B1, Level::A2, Level::A1}));
    CHECK(sequential_path(Level::C2, Level::A1).step_count() == 5);
    CHECK(sequential_path(Level::C2, Level::B1) == LevelPath({Level::C2, Level::C1, Level::B2, Level::B1}));
    CHECK(sequential_path(Level::B2, Level::A1) == LevelPath({Level::B2, Level::B1, Level::A2, Level::A1}));
    CHECK_THROWS_AS(sequential_path(Level::A1, Level::C2), InvalidPairError);
}

TEST_CASE("rris reproduces the published reduction ratios") {
    SECTION("three C2 pairs with the C1-skipping chain: 25.0%") {
        PlannedPaths planned;
        planned.emplace(std::pair{Level::C2, Level::B1}, LevelPath({Level::C2, Level::B2, Level::B1}));
        planned.emplace(std::pair{Level::C2, Level::A2}, LevelPath({Level::C2, Level::B2, Level::B1, Level::A2}));
        planned.emplace(std::pair{Level::C2, Level::A1},
                        LevelPath({Level::C2, Level::B2, Level::B1, Level::A2, Level::A1}));
        const std::vector<std::pair<Level, Level>> pairs{
            {Level::C2, Level::B1}, {Level::C2, Level::A2}, {Level::C2, Level::A1}};
        CHECK(rris(pairs, planned) == Catch::Approx(25.0).margin(1e-9));
    }
    SECTION("two FR pairs: 22.2%") {
        PlannedPaths planned;
        planned.emplace(std::pair{Level::C2, Level::A2}, LevelPath({Level::C2, Level::B2, Level::B1, Level::A2}));
        planned.emplace(std::pair{Level::C2, Level::A1},
                        LevelPath({Level::C2, Level::B2, Level::B1, Level::A2, Level::A1}));
        const std::vector<std::pair<Level, Level>> pairs{{Level::C2, Level::A2}, {Level::C2, Level::A1}};
        CHECK(rris(pairs, planned) == Catch::Approx(100.0 * (1.0 - 7.0 / 9.0)).margin(1e-9));
    }
    SECTION("six RU pairs: 27.27%") {
        PlannedPaths planned;
        planned.emplace(std::pair{Level::C2, Level::B1}, LevelPath({Level::C2, Level::B2, Level::B1}));
        planned.emplace(std::pair{Level::C2, Level::A2}, LevelPath({Level::C2, Level::B2, Level::B1, Level::A2}));
        planned.emplace(std::pair{Level::C2, Level::A1},
                        LevelPath({Level::C2, Level::B2, Level::B1, Level::A2, Level::A1}));
        planned.emplace(std::pair{Level::C1, Level::A2}, LevelPath({Level::C1, Level::B1, Level::A2}));
        planned.emplace(std::pair{Level::C1, Level::A1}, LevelPath({Level::C1, Level::B1, Level::A2, Level::A1}));
        planned.emplace(std::pair{Level::B2, Level::A1}, LevelPath({Level::B2, Level::A2, Level::A1}));
        const std::vector<std::pair<Level, Level>> pairs{{Level::C2, Level::B1}, {Level::C2, Level::A2},
                                                         {Level::C2, Level::A1}, {Level::C1, Level::A2},
                                                         {Level::C1, Level::A1}, {Level::B2, Level::A1}};
        CHECK(rris(pairs, planned) == Catch::Approx(100.0 * (1.0 - 16.0 / 22.0)).margin(1e-9));
    }
    SECTION("no reduction when planned equals sequential") {
        PlannedPaths planned;
        planned.emplace(std::pair{Level::C2, Level::A1}, sequential_path(Level::C2, Level::A1));
        CHECK(rris({{Level::C2, Level::A1}}, planned) == 0.0);
    }
    SECTION("missing plan raises") {
        PlannedPaths planned;
        CHECK_THROWS_AS(rris({{Level::C2, Level::A1}}, planned), MissingPlanError);
    }
}

TEST_CASE("plan and rris reports serialize to json") {
    const RewardMatrix matrix = full_normalized_matrix(0.5);
    const PlanResult result = plan(matrix, Level::C2, Level::B1, PlanObjective{});
    const nlohmann::json j = plan_to_json(result, ObjectiveMode::MeanReward);
    CHECK(j["source"] == "C2");
    CHECK(j["target"] == "B1");
    CHECK(j["objective_mode"] == "mean_reward");
    CHECK(j["path"].is_array());

    PlannedPaths planned;
    planned.emplace(std::pair{Level::C2, Level::B1}, result.path);
    const nlohmann::json report = rris_report_to_json({{Level::C2, Level::B1}}, planned);
    CHECK(report["pairs"].size() == 1);
    CHECK(report["rris_percent"].is_number());
}
