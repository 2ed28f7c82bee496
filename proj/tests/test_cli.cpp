#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "stepwise/corpus.hpp"
#include "stepwise/fixtures.hpp"
#include "stepwise/provenance.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stepwise;

namespace {

const char* cli_path() { return STEPWISE_CLI_PATH; }

int run_cli(const std::string& args, const fs::path& log) {
    const std::string command = std::string(cli_path()) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(command.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

fs::path make_workdir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_config(const fs::path& path, const fs::path& corpus_dir, json extra = json::object()) {
    json config{{"corpus",
                 {{"format", "jsonl"},
                  {"train", (corpus_dir / "train.jsonl").string()},
                  {"dev", (corpus_dir / "dev.jsonl").string()},
                  {"test", (corpus_dir / "test.jsonl").string()}}},
                {"backends", {{"profile", "mock"}}}};
    for (const auto& [key, value] : extra.items()) config[key] = value;
    write_json_file(path, config);
}

void write_small_corpus(const fs::path& corpus_dir) {
    const CorpusSplit corpus = synthetic_corpus(small_shape());
    fs::create_directories(corpus_dir);
    save_jsonl(corpus_dir / "train.jsonl", corpus.train);
    save_jsonl(corpus_dir / "dev.jsonl", corpus.dev);
    save_jsonl(corpus_dir / "test.jsonl", corpus.test);
}

}  // namespace

TEST_CASE("cli validate-corpus prints stats and warns about low test levels") {
    const fs::path dir = make_workdir("stepwise_cli_validate");
    write_small_corpus(dir / "corpus");

    CorpusSplit corpus = synthetic_corpus(small_shape());
    corpus.test.push_back({"bad-a1", "five short words only here", Level::A1, "en", "s"});
    save_jsonl(dir / "corpus" / "test.jsonl", corpus.test);

    write_config(dir / "config.json", dir / "corpus");
    const fs::path log = dir / "validate.log";
    const int code = run_cli("--config " + (dir / "config.json").string() + " validate-corpus", log);
    CHECK(code == 0);
    const std::string output = slurp(log);
    CHECK(output.find("test: A1=1") != std::string::npos);
    CHECK(output.find("warning:") != std::string::npos);
    CHECK(output.find("bad-a1") != std::string::npos);
}

TEST_CASE("cli validate-corpus exits nonzero on malformed input") {
    const fs::path dir = make_workdir("stepwise_cli_badcorpus");
    fs::create_directories(dir / "corpus");
    std::ofstream(dir / "corpus" / "train.jsonl")
        << R"({"id":"x","text":"good text","level":"Z9","language":"en","source_corpus":"s"})" << "\n";
    write_config(dir / "config.json", dir / "corpus");

    const fs::path log = dir / "validate.log";
    const int code = run_cli("--config " + (dir / "config.json").string() + " validate-corpus", log);
    CHECK(code == 1);
    CHECK(slurp(log).find("line 1") != std::string::npos);
}

TEST_CASE("cli validate-corpus exits nonzero when a file is missing") {
    const fs::path dir = make_workdir("stepwise_cli_missing");
    write_config(dir / "config.json", dir / "corpus");  // corpus dir never created
    const fs::path log = dir / "validate.log";
    const int code = run_cli("--config " + (dir / "config.json").string() + " validate-corpus", log);
    CHECK(code == 1);
    CHECK(slurp(log).find("train.jsonl") != std::string::npos);
}

TEST_CASE("cli pipeline: build-rewards, plan, harvest, run compose with digest verification") {
    const fs::path dir = make_workdir("stepwise_cli_pipeline");
    write_small_corpus(dir / "corpus");
    write_config(dir / "config.json", dir / "corpus", json{{"output_dir", (dir / "out").string()}});
    const std::string base = "--config " + (dir / "config.json").string();
    const fs::path log = dir / "cli.log";

    REQUIRE(run_cli(base + " build-rewards --out " + (dir / "matrix.json").string() + " --genlog " +
                        (dir / "genlog.json").string(),
                    log) == 0);
    const json matrix_doc = read_json_file(dir / "matrix.json");
    CHECK(matrix_doc["normalized"] == true);
    CHECK(matrix_doc.contains("provenance"));
    CHECK(matrix_doc["provenance"].contains("content_digest"));

    REQUIRE(run_cli(base + " plan --matrix " + (dir / "matrix.json").string() + " --out " +
                        (dir / "plans.json").string(),
                    log) == 0);
    const json plans_doc = read_json_file(dir / "plans.json");
    CHECK(plans_doc["plans"].size() == 9);
    CHECK(plans_doc.contains("rris"));

    REQUIRE(run_cli(base + " harvest-exemplars --plans " + (dir / "plans.json").string() + " --genlog " +
                        (dir / "genlog.json").string() + " --out " + (dir / "store.json").string(),
                    log) == 0);
    CHECK(fs::exists(dir / "store.json"));

    REQUIRE(run_cli(base + " run --matrix " + (dir / "matrix.json").string() + " --store " +
                        (dir / "store.json").string() + " --out-dir " + (dir / "out").string(),
                    log) == 0);
    CHECK(fs::exists(dir / "out" / "results.jsonl"));
    CHECK(fs::exists(dir / "out" / "metrics.json"));
    CHECK(fs::exists(dir / "out" / "run_meta.json"));

    const json meta = read_json_file(dir / "out" / "run_meta.json");
    CHECK(meta["cascades"] == 27);
    CHECK(meta["label"] == "mock+Y+Y+Y");
    CHECK(meta["provenance"]["input_digests"].contains("matrix"));

    SECTION("evaluate recomputes metrics from the results file") {
        REQUIRE(run_cli(base + " evaluate --results " + (dir / "out" / "results.jsonl").string() + " --out " +
                            (dir / "metrics2.json").string() + " --label recheck",
                        log) == 0);
        const json a = verify_and_strip_provenance(read_json_file(dir / "out" / "metrics.json"));
        const json b = verify_and_strip_provenance(read_json_file(dir / "metrics2.json"));
        CHECK(a["overall"].dump() == b["overall"].dump());
    }

    SECTION("report renders a table from metric files") {
        REQUIRE(run_cli("report " + (dir / "out" / "metrics.json").string(), log) == 0);
        const std::string output = slurp(log);
        CHECK(output.find("configuration") != std::string::npos);
        CHECK(output.find("mock+Y+Y+Y") != std::string::npos);
    }

    SECTION("a tampered artifact fails digest verification") {
        json tampered = read_json_file(dir / "matrix.json");
        tampered["cells"][0]["mean_score"] = 0.123456;
        write_json_file(dir / "matrix.json", tampered);
        CHECK(run_cli(base + " plan --matrix " + (dir / "matrix.json").string() + " --out " +
                          (dir / "plans2.json").string(),
                      log) == 1);
        CHECK(slurp(log).find("digest mismatch") != std::string::npos);
    }
}

TEST_CASE("cli one-step configuration produces single-step traces") {
    const fs::path dir = make_workdir("stepwise_cli_nnn");
    write_small_corpus(dir / "corpus");
    write_config(dir / "config.json", dir / "corpus",
                 json{{"flags", {{"planning", false}, {"semantic", false}, {"history", false}}}});
    const std::string base = "--config " + (dir / "config.json").string();
    const fs::path log = dir / "cli.log";

    REQUIRE(run_cli(base + " build-rewards --out " + (dir / "matrix.json").string() + " --genlog \"\"",
                    log) == 0);
    REQUIRE(run_cli(base + " run --matrix " + (dir / "matrix.json").string() + " --out-dir " +
                        (dir / "out").string(),
                    log) == 0);

    std::ifstream results(dir / "out" / "results.jsonl");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(results, line)) {
        if (line.empty()) continue;
        ++lines;
        const json result = json::parse(line);
        CHECK(result["steps"].size() == 1);
    }
    CHECK(lines == 27);
}

TEST_CASE("cli run exits 2 when failures exceed the threshold") {
    const fs::path dir = make_workdir("stepwise_cli_fail");
    write_small_corpus(dir / "corpus");
    // One injected generator fault during the run phase; threshold 0.
    write_config(dir / "config.json", dir / "corpus",
                 json{{"failure_threshold", 0.0},
                      {"flags", {{"planning", false}, {"semantic", false}, {"history", false}}}});
    const std::string base = "--config " + (dir / "config.json").string();
    const fs::path log = dir / "cli.log";
    REQUIRE(run_cli(base + " build-rewards --out " + (dir / "matrix.json").string() + " --genlog \"\"",
                    log) == 0);

    json faulty{{"corpus",
                 {{"format", "jsonl"},
                  {"train", (dir / "corpus" / "train.jsonl").string()},
                  {"dev", (dir / "corpus" / "dev.jsonl").string()},
                  {"test", (dir / "corpus" / "test.jsonl").string()}}},
                {"backends", {{"profile", "mock"}, {"mock_generator_fail_at_call", 5}, {"cache", false}}},
                {"failure_threshold", 0.0},
                {"flags", {{"planning", false}, {"semantic", false}, {"history", false}}}};
    write_json_file(dir / "faulty.json", faulty);
    const int code = run_cli("--config " + (dir / "faulty.json").string() + " run --matrix " +
                                 (dir / "matrix.json").string() + " --out-dir " + (dir / "out").string(),
                             log);
    CHECK(code == 2);
}

TEST_CASE("cli plan exits 3 in strict mode when a pair is infeasible") {
    const fs::path dir = make_workdir("stepwise_cli_infeasible");
    write_small_corpus(dir / "corpus");

    // A matrix whose only populated cell is C2->C1: with empty cells
    // forbidden, no pair with target below C1 has a route.
    json cells = json::array();
    cells.push_back({{"source", "C2"},
                     {"target", "C1"},
                     {"mean_score", 0.5},
                     {"sample_count", 1},
                     {"exact_count", 1},
                     {"adjacent_count", 0},
                     {"miss_count", 0}});
    write_json_file(dir / "matrix.json", json{{"cells", cells}, {"normalized", true}});

    write_config(dir / "config.json", dir / "corpus",
                 json{{"forbid_empty_cells", true}, {"strict", true}});
    const fs::path log = dir / "cli.log";
    const int code = run_cli("--config " + (dir / "config.json").string() + " plan --matrix " +
                                 (dir / "matrix.json").string() + " --out " + (dir / "plans.json").string(),
                             log);
    CHECK(code == 3);
}

TEST_CASE("cli mock-e2e is byte-identical across consecutive runs") {
    const fs::path dir_a = make_workdir("stepwise_cli_e2e_a");
    const fs::path dir_b = make_workdir("stepwise_cli_e2e_b");
    const fs::path dir_c = make_workdir("stepwise_cli_e2e_c");
    const fs::path log = fs::temp_directory_path() / "stepwise_cli_e2e.log";

    REQUIRE(run_cli("mock-e2e --shape small --out-dir " + dir_a.string(), log) == 0);
    REQUIRE(run_cli("mock-e2e --shape small --out-dir " + dir_b.string(), log) == 0);
    // Parallelism is an execution knob; artifact bytes must not depend on it.
    write_json_file(fs::temp_directory_path() / "stepwise_par.json", json{{"parallelism", 8}});
    REQUIRE(run_cli("--config " + (fs::temp_directory_path() / "stepwise_par.json").string() +
                        " mock-e2e --shape small --out-dir " + dir_c.string(),
                    log) == 0);

    for (const char* artifact : {"corpus/train.jsonl", "corpus/dev.jsonl", "corpus/test.jsonl", "matrix.json",
                                 "genlog.json", "plans.json", "store.json", "results.jsonl", "metrics.json",
                                 "run_meta.json"}) {
        INFO(artifact);
        CHECK(slurp(dir_a / artifact) == slurp(dir_b / artifact));
        CHECK(slurp(dir_a / artifact) == slurp(dir_c / artifact));
    }
}

TEST_CASE("cli plan reproduces the 25% reduction when DP paths skip C1") {
    const fs::path dir = make_workdir("stepwise_cli_skip_c1");
    write_small_corpus(dir / "corpus");

    // Weak C1 cells, strong adjacent chain skipping C1, mediocre long jumps.
    json cells = json::array();
    auto add_cell = [&](Level source, Level target, double mean) {
        cells.push_back({{"source", std::string(render(source))},
                         {"target", std::string(render(target))},
                         {"mean_score", mean},
                         {"sample_count", 1},
                         {"exact_count", 1},
                         {"adjacent_count", 0},
                         {"miss_count", 0}});
    };
    for (const Transition& t :
         downward_transitions({Level::C2, Level::C1, Level::B2, Level::B1, Level::A2}, Level::A1)) {
        double mean = 0.3;
        if (t.source == Level::C1 || t.target == Level::C1) mean = 0.1;
        if ((t.source == Level::C2 && t.target == Level::B2) ||
            (t.source == Level::B2 && t.target == Level::B1) ||
            (t.source == Level::B1 && t.target == Level::A2) ||
            (t.source == Level::A2 && t.target == Level::A1)) {
            mean = 0.9;
        }
        add_cell(t.source, t.target, mean);
    }
    write_json_file(dir / "matrix.json", json{{"cells", cells}, {"normalized", true}});

    write_config(dir / "config.json", dir / "corpus", json{{"sources", {"C2"}}});
    const fs::path log = dir / "cli.log";
    REQUIRE(run_cli("--config " + (dir / "config.json").string() + " plan --matrix " +
                        (dir / "matrix.json").string() + " --out " + (dir / "plans.json").string(),
                    log) == 0);
    const json plans = verify_and_strip_provenance(read_json_file(dir / "plans.json"));
    for (const json& entry : plans["plans"]) {
        for (const json& level : entry["path"]) {
            CHECK(level.get<std::string>() != "C1");
        }
    }
    CHECK(plans["rris"]["rris_percent"] == Catch::Approx(25.0));
}

TEST_CASE("cli build-rewards in strict mode exits 2 when the call budget is exhausted") {
    const fs::path dir = make_workdir("stepwise_cli_budget");
    write_small_corpus(dir / "corpus");
    write_config(dir / "config.json", dir / "corpus",
                 json{{"strict", true}, {"backends", {{"profile", "mock"}, {"call_ceiling", 3}, {"cache", false}}}});
    const fs::path log = dir / "cli.log";
    const int code = run_cli("--config " + (dir / "config.json").string() + " build-rewards --out " +
                                 (dir / "matrix.json").string() + " --genlog \"\"",
                             log);
    CHECK(code == 2);
    CHECK(slurp(log).find("ceiling") != std::string::npos);
}

TEST_CASE("cli uniform-matrix planning matches the objective-mode expectations") {
    const fs::path dir = make_workdir("stepwise_cli_uniform");
    write_small_corpus(dir / "corpus");

    // Uniform normalized matrix over all 15 downward transitions.
    json cells = json::array();
    for (const Transition& t :
         downward_transitions({Level::C2, Level::C1, Level::B2, Level::B1, Level::A2}, Level::A1)) {
        cells.push_back({{"source", std::string(render(t.source))},
                         {"target", std::string(render(t.target))},
                         {"mean_score", 0.5},
                         {"sample_count", 1},
                         {"exact_count", 1},
                         {"adjacent_count", 0},
                         {"miss_count", 0}});
    }
    write_json_file(dir / "matrix.json", json{{"cells", cells}, {"normalized", true}});
    const fs::path log = dir / "cli.log";

    SECTION("mean mode: direct paths, maximal RRIS for the C2 pairs") {
        write_config(dir / "config.json", dir / "corpus",
                     json{{"objective_mode", "mean_reward"}, {"sources", {"C2"}}});
        REQUIRE(run_cli("--config " + (dir / "config.json").string() + " plan --matrix " +
                            (dir / "matrix.json").string() + " --out " + (dir / "plans.json").string(),
                        log) == 0);
        const json plans = verify_and_strip_provenance(read_json_file(dir / "plans.json"));
        for (const json& entry : plans["plans"]) {
            CHECK(entry["path"].size() == 2);  // direct [source, target]
        }
        CHECK(plans["rris"]["rris_percent"] == Catch::Approx(75.0));
    }
    SECTION("total mode: sequential paths, zero RRIS") {
        write_config(dir / "config.json", dir / "corpus",
                     json{{"objective_mode", "total_reward"}, {"sources", {"C2"}}});
        REQUIRE(run_cli("--config " + (dir / "config.json").string() + " plan --matrix " +
                            (dir / "matrix.json").string() + " --out " + (dir / "plans.json").string(),
                        log) == 0);
        const json plans = verify_and_strip_provenance(read_json_file(dir / "plans.json"));
        CHECK(plans["rris"]["rris_percent"] == Catch::Approx(0.0));
    }
}
