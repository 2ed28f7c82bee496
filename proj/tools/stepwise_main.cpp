// stepwise: proficiency-controlled step-by-step sentence simplification.
//
// Subcommands cover the full pipeline: validate-corpus, build-rewards, plan,
// harvest-exemplars, run, evaluate, report, and mock-e2e (the whole chain on
// bundled synthetic fixtures with mock backends).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stepwise/stepwise.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;    // validation / configuration errors
constexpr int kExitBackend = 2;   // backend failures over the threshold
constexpr int kExitInfeasible = 3;  // infeasible plan in strict mode

struct CliConfig {
    // corpus
    std::string corpus_format = "jsonl";
    std::string train_path;
    std::string dev_path;
    std::string test_path;
    std::string language = "en";
    std::string tsv_source_corpus = "ingest";

    // backends
    std::string backend_profile = "mock";  // "mock" or "http"
    stepwise::HttpEndpointConfig generation_endpoint;
    stepwise::HttpEndpointConfig estimator_endpoint;
    stepwise::HttpEndpointConfig similarity_endpoint;
    bool cache_backends = true;
    std::optional<std::size_t> call_ceiling;
    std::optional<std::size_t> mock_generator_fail_at_call;

    stepwise::GenerationProfile profile;
    stepwise::ConfigurationFlags flags;
    std::string objective_mode = "mean_reward";
    bool forbid_empty_cells = false;
    std::size_t k = 3;
    std::optional<std::size_t> sample_cap;
    std::size_t validation_exemplar_count = 1;
    std::size_t parallelism = 1;
    std::vector<std::string> sources = {"C2", "C1", "B2"};
    std::vector<std::string> targets = {"B1", "A2", "A1"};
    std::string target_floor = "A1";
    std::string output_dir = "out";
    bool strict = false;
    double failure_threshold = 0.0;
    bool deterministic = true;
    bool log_intermediate_verdicts = false;

    stepwise::PromptConfig prompt;

    json resolved;  // the fully resolved document, for digests and metadata
};

void read_endpoint(const json& j, stepwise::HttpEndpointConfig& endpoint) {
    if (j.contains("base_url")) endpoint.base_url = j["base_url"].get<std::string>();
    if (j.contains("path")) endpoint.path = j["path"].get<std::string>();
    if (j.contains("api_key_env")) endpoint.api_key_env = j["api_key_env"].get<std::string>();
    if (j.contains("timeout_seconds")) endpoint.timeout_seconds = j["timeout_seconds"].get<int>();
}

json endpoint_to_json(const stepwise::HttpEndpointConfig& endpoint) {
    return json{{"base_url", endpoint.base_url},
                {"path", endpoint.path},
                {"api_key_env", endpoint.api_key_env},
                {"timeout_seconds", endpoint.timeout_seconds}};
}

CliConfig load_config(const std::string& path) {
    CliConfig config;
    json doc = json::object();
    if (!path.empty()) {
        doc = stepwise::read_json_file(path);
        if (!doc.is_object()) {
            throw stepwise::Error("config file must hold a JSON object: " + path);
        }
    }

    if (doc.contains("corpus")) {
        const json& corpus = doc["corpus"];
        if (corpus.contains("format")) config.corpus_format = corpus["format"].get<std::string>();
        if (corpus.contains("train")) config.train_path = corpus["train"].get<std::string>();
        if (corpus.contains("dev")) config.dev_path = corpus["dev"].get<std::string>();
        if (corpus.contains("test")) config.test_path = corpus["test"].get<std::string>();
        if (corpus.contains("tsv_source_corpus")) {
            config.tsv_source_corpus = corpus["tsv_source_corpus"].get<std::string>();
        }
    }
    if (doc.contains("language")) config.language = doc["language"].get<std::string>();

    if (doc.contains("backends")) {
        const json& backends = doc["backends"];
        if (backends.contains("profile")) config.backend_profile = backends["profile"].get<std::string>();
        if (backends.contains("generation")) read_endpoint(backends["generation"], config.generation_endpoint);
        if (backends.contains("estimator")) read_endpoint(backends["estimator"], config.estimator_endpoint);
        if (backends.contains("similarity")) read_endpoint(backends["similarity"], config.similarity_endpoint);
        if (backends.contains("cache")) config.cache_backends = backends["cache"].get<bool>();
        if (backends.contains("call_ceiling") && !backends["call_ceiling"].is_null()) {
            config.call_ceiling = backends["call_ceiling"].get<std::size_t>();
        }
        if (backends.contains("mock_generator_fail_at_call") &&
            !backends["mock_generator_fail_at_call"].is_null()) {
            config.mock_generator_fail_at_call = backends["mock_generator_fail_at_call"].get<std::size_t>();
        }
        if (backends.contains("retry")) {
            const json& retry = backends["retry"];
            stepwise::RetryPolicy policy;
            if (retry.contains("max_attempts")) policy.max_attempts = retry["max_attempts"].get<int>();
            if (retry.contains("initial_backoff_ms")) {
                policy.initial_backoff = std::chrono::milliseconds(retry["initial_backoff_ms"].get<int>());
            }
            if (retry.contains("multiplier")) policy.multiplier = retry["multiplier"].get<double>();
            config.generation_endpoint.retry = policy;
            config.estimator_endpoint.retry = policy;
            config.similarity_endpoint.retry = policy;
        }
    }

    if (doc.contains("generation_profile")) {
        const json& profile = doc["generation_profile"];
        if (profile.contains("max_new_tokens")) config.profile.max_new_tokens = profile["max_new_tokens"].get<int>();
        if (profile.contains("temperature")) config.profile.temperature = profile["temperature"].get<double>();
        if (profile.contains("sampling_enabled")) {
            config.profile.sampling_enabled = profile["sampling_enabled"].get<bool>();
        }
        if (profile.contains("model_id")) config.profile.model_id = profile["model_id"].get<std::string>();
    }

    if (doc.contains("flags")) {
        const json& flags = doc["flags"];
        if (flags.contains("planning")) config.flags.planning = flags["planning"].get<bool>();
        if (flags.contains("semantic")) config.flags.semantic = flags["semantic"].get<bool>();
        if (flags.contains("history")) config.flags.history = flags["history"].get<bool>();
    }

    if (doc.contains("objective_mode")) config.objective_mode = doc["objective_mode"].get<std::string>();
    if (doc.contains("forbid_empty_cells")) config.forbid_empty_cells = doc["forbid_empty_cells"].get<bool>();
    if (doc.contains("k")) config.k = doc["k"].get<std::size_t>();
    if (doc.contains("sample_cap") && !doc["sample_cap"].is_null()) {
        config.sample_cap = doc["sample_cap"].get<std::size_t>();
    }
    if (doc.contains("validation_exemplar_count")) {
        config.validation_exemplar_count = doc["validation_exemplar_count"].get<std::size_t>();
    }
    if (doc.contains("parallelism")) config.parallelism = doc["parallelism"].get<std::size_t>();
    if (doc.contains("sources")) config.sources = doc["sources"].get<std::vector<std::string>>();
    if (doc.contains("targets")) config.targets = doc["targets"].get<std::vector<std::string>>();
    if (doc.contains("target_floor")) config.target_floor = doc["target_floor"].get<std::string>();
    if (doc.contains("output_dir")) config.output_dir = doc["output_dir"].get<std::string>();
    if (doc.contains("strict")) config.strict = doc["strict"].get<bool>();
    if (doc.contains("failure_threshold")) config.failure_threshold = doc["failure_threshold"].get<double>();
    if (doc.contains("deterministic")) config.deterministic = doc["deterministic"].get<bool>();
    if (doc.contains("log_intermediate_verdicts")) {
        config.log_intermediate_verdicts = doc["log_intermediate_verdicts"].get<bool>();
    }

    if (doc.contains("prompt")) {
        const json& prompt = doc["prompt"];
        if (prompt.contains("system_instruction_template")) {
            config.prompt.system_instruction_template = prompt["system_instruction_template"].get<std::string>();
        }
        if (prompt.contains("pair_exemplar_template")) {
            config.prompt.pair_exemplar_template = prompt["pair_exemplar_template"].get<std::string>();
        }
        if (prompt.contains("single_exemplar_template")) {
            config.prompt.single_exemplar_template = prompt["single_exemplar_template"].get<std::string>();
        }
        if (prompt.contains("user_instruction_template")) {
            config.prompt.user_instruction_template = prompt["user_instruction_template"].get<std::string>();
        }
        if (prompt.contains("use_chat_template")) {
            config.prompt.use_chat_template = prompt["use_chat_template"].get<bool>();
        }
        if (prompt.contains("descriptors")) {
            for (const auto& [symbol, text] : prompt["descriptors"].items()) {
                config.prompt.descriptor_catalog[stepwise::parse_level(symbol)] = text.get<std::string>();
            }
        }
        if (prompt.contains("drop_prefixes")) {
            config.prompt.extraction.drop_prefixes = prompt["drop_prefixes"].get<std::vector<std::string>>();
        }
        if (prompt.contains("sentinel_open") && !prompt["sentinel_open"].is_null()) {
            config.prompt.extraction.sentinel_open = prompt["sentinel_open"].get<std::string>();
        }
        if (prompt.contains("sentinel_close") && !prompt["sentinel_close"].is_null()) {
            config.prompt.extraction.sentinel_close = prompt["sentinel_close"].get<std::string>();
        }
    }

    if (config.parallelism < 1) {
        throw stepwise::Error("parallelism bound must be at least 1");
    }
    if (config.deterministic && (config.profile.temperature != 0.0 || config.profile.sampling_enabled)) {
        throw stepwise::Error(
            "deterministic mode requires temperature 0.0 and sampling disabled; "
            "set \"deterministic\": false to run a sampling profile");
    }
    return config;
}

json resolve_config_json(const CliConfig& config) {
    json descriptors = json::object();
    for (const auto& [level, text] : config.prompt.descriptor_catalog) {
        descriptors[std::string(stepwise::render(level))] = text;
    }
    return json{
        {"corpus",
         {{"format", config.corpus_format},
          {"train", config.train_path},
          {"dev", config.dev_path},
          {"test", config.test_path},
          {"tsv_source_corpus", config.tsv_source_corpus}}},
        {"language", config.language},
        {"backends",
         {{"profile", config.backend_profile},
          {"generation", endpoint_to_json(config.generation_endpoint)},
          {"estimator", endpoint_to_json(config.estimator_endpoint)},
          {"similarity", endpoint_to_json(config.similarity_endpoint)},
          {"cache", config.cache_backends},
          {"call_ceiling", config.call_ceiling ? json(*config.call_ceiling) : json(nullptr)},
          {"mock_generator_fail_at_call",
           config.mock_generator_fail_at_call ? json(*config.mock_generator_fail_at_call) : json(nullptr)}}},
        {"generation_profile",
         {{"max_new_tokens", config.profile.max_new_tokens},
          {"temperature", config.profile.temperature},
          {"sampling_enabled", config.profile.sampling_enabled},
          {"model_id", config.profile.model_id}}},
        {"flags",
         {{"planning", config.flags.planning},
          {"semantic", config.flags.semantic},
          {"history", config.flags.history}}},
        {"objective_mode", config.objective_mode},
        {"forbid_empty_cells", config.forbid_empty_cells},
        {"k", config.k},
        {"sample_cap", config.sample_cap ? json(*config.sample_cap) : json(nullptr)},
        {"validation_exemplar_count", config.validation_exemplar_count},
        {"parallelism", config.parallelism},
        {"sources", config.sources},
        {"targets", config.targets},
        {"target_floor", config.target_floor},
        {"output_dir", config.output_dir},
        {"strict", config.strict},
        {"failure_threshold", config.failure_threshold},
        {"deterministic", config.deterministic},
        {"log_intermediate_verdicts", config.log_intermediate_verdicts},
        {"prompt_descriptors", descriptors},
        {"prompt",
         {{"system_instruction_template", config.prompt.system_instruction_template},
          {"pair_exemplar_template", config.prompt.pair_exemplar_template},
          {"single_exemplar_template", config.prompt.single_exemplar_template},
          {"user_instruction_template", config.prompt.user_instruction_template},
          {"use_chat_template", config.prompt.use_chat_template}}}};
}

// Filesystem locations and content-neutral execution knobs (parallelism,
// caching) don't affect artifact bytes and would make otherwise identical
// runs look different; corpus content is covered by the per-input content
// digests instead.
std::string config_digest(const CliConfig& config) {
    json redacted = config.resolved;
    redacted["corpus"].erase("train");
    redacted["corpus"].erase("dev");
    redacted["corpus"].erase("test");
    redacted.erase("output_dir");
    redacted.erase("parallelism");
    redacted["backends"].erase("cache");
    return stepwise::json_digest(redacted);
}

// Owns the configured backend stack: transport implementation, then budget,
// then cache (cache hits do not consume budget).
struct BackendStack {
    std::unique_ptr<stepwise::TextGenerator> generator_impl;
    std::unique_ptr<stepwise::LevelEstimator> estimator_impl;
    std::unique_ptr<stepwise::SimilarityScorer> similarity_impl;
    std::unique_ptr<stepwise::CallBudget> budget;
    std::unique_ptr<stepwise::BudgetedGenerator> budgeted;
    std::unique_ptr<stepwise::CachedGenerator> cached_generator;
    std::unique_ptr<stepwise::CachedEstimator> cached_estimator;
    std::unique_ptr<stepwise::CachedSimilarity> cached_similarity;

    stepwise::TextGenerator* generator = nullptr;
    stepwise::LevelEstimator* estimator = nullptr;
    stepwise::SimilarityScorer* similarity = nullptr;
};

BackendStack make_backends(const CliConfig& config) {
    BackendStack stack;
    if (config.backend_profile == "mock") {
        stepwise::MockGenerator::Config mock_config;
        mock_config.fail_at_call = config.mock_generator_fail_at_call;
        stack.generator_impl = std::make_unique<stepwise::MockGenerator>(mock_config);
        stack.estimator_impl = std::make_unique<stepwise::MockEstimator>();
        stack.similarity_impl = std::make_unique<stepwise::MockSimilarity>();
    } else if (config.backend_profile == "http") {
        if (config.generation_endpoint.base_url.empty() || config.estimator_endpoint.base_url.empty() ||
            config.similarity_endpoint.base_url.empty()) {
            throw stepwise::Error("http backend profile needs base_url for generation, estimator and similarity");
        }
        stack.generator_impl = std::make_unique<stepwise::ChatCompletionsClient>(config.generation_endpoint);
        stack.estimator_impl = std::make_unique<stepwise::HttpEstimator>(config.estimator_endpoint);
        stack.similarity_impl = std::make_unique<stepwise::HttpSimilarityScorer>(config.similarity_endpoint);
    } else {
        throw stepwise::Error("unknown backend profile: " + config.backend_profile);
    }

    stepwise::TextGenerator* generator = stack.generator_impl.get();
    if (config.call_ceiling) {
        stack.budget = std::make_unique<stepwise::CallBudget>(*config.call_ceiling);
        stack.budgeted = std::make_unique<stepwise::BudgetedGenerator>(*generator, *stack.budget);
        generator = stack.budgeted.get();
    }
    if (config.cache_backends) {
        stack.cached_generator = std::make_unique<stepwise::CachedGenerator>(*generator);
        stack.cached_estimator = std::make_unique<stepwise::CachedEstimator>(*stack.estimator_impl);
        stack.cached_similarity = std::make_unique<stepwise::CachedSimilarity>(*stack.similarity_impl);
        stack.generator = stack.cached_generator.get();
        stack.estimator = stack.cached_estimator.get();
        stack.similarity = stack.cached_similarity.get();
    } else {
        stack.generator = generator;
        stack.estimator = stack.estimator_impl.get();
        stack.similarity = stack.similarity_impl.get();
    }
    return stack;
}

stepwise::LoadOptions load_options(const CliConfig& config) {
    stepwise::LoadOptions options;
    options.format = stepwise::parse_corpus_format(config.corpus_format);
    options.language = config.language;
    options.source_corpus = config.tsv_source_corpus;
    return options;
}

std::vector<stepwise::LabeledSentence> load_required_split(const CliConfig& config, const std::string& path,
                                                           const std::string& name) {
    if (path.empty()) {
        throw stepwise::Error("config is missing the " + name + " corpus path");
    }
    return stepwise::load_split(path, load_options(config));
}

std::vector<stepwise::Level> parse_levels(const std::vector<std::string>& symbols) {
    std::vector<stepwise::Level> levels;
    for (const std::string& symbol : symbols) levels.push_back(stepwise::parse_level(symbol));
    return levels;
}

stepwise::OneStepConfig one_step_config(const CliConfig& config) {
    stepwise::OneStepConfig one_step;
    one_step.prompt = config.prompt;
    one_step.profile = config.profile;
    one_step.validation_exemplar_count = config.validation_exemplar_count;
    one_step.parallelism = config.parallelism;
    return one_step;
}

std::string flags_label(const CliConfig& config) {
    auto yn = [](bool value) { return value ? "Y" : "N"; };
    return config.profile.model_id + "+" + yn(config.flags.planning) + "+" + yn(config.flags.semantic) + "+" +
           yn(config.flags.history);
}

void print_stats(const std::string& name, const stepwise::SplitStats& stats) {
    std::cout << "  " << name << ":";
    for (const stepwise::Level level : stepwise::all_levels()) {
        std::cout << " " << stepwise::render(level) << "=" << stats.per_level.at(level);
    }
    std::cout << " total=" << stats.total << "\n";
}

// ---------------------------------------------------------------------------
// Subcommands.
// ---------------------------------------------------------------------------

int cmd_validate_corpus(const CliConfig& config) {
    bool any = false;
    const struct {
        const char* name;
        const std::string* path;
        bool is_test;
    } splits[] = {{"train", &config.train_path, false},
                  {"dev", &config.dev_path, false},
                  {"test", &config.test_path, true}};
    std::cout << "corpus statistics\n";
    for (const auto& split : splits) {
        if (split.path->empty()) continue;
        any = true;
        const auto sentences = stepwise::load_split(*split.path, load_options(config));
        print_stats(split.name, stepwise::split_stats(sentences));
        if (split.is_test) {
            for (const std::string& warning : stepwise::test_split_warnings(sentences)) {
                std::cout << "  warning: " << warning << "\n";
            }
        }
    }
    if (!any) {
        throw stepwise::Error("config names no corpus files to validate");
    }
    return kExitOk;
}

int cmd_build_rewards(const CliConfig& config, const std::string& out_path, const std::string& genlog_path) {
    const auto dev = load_required_split(config, config.dev_path, "dev");
    const auto train = load_required_split(config, config.train_path, "train");

    // The matrix covers every downward transition from any level above the
    // floor, so the planner can route through arbitrary intermediates.
    std::vector<stepwise::Level> sources;
    const stepwise::Level floor = stepwise::parse_level(config.target_floor);
    for (const stepwise::Level level : stepwise::all_levels()) {
        if (stepwise::level_index(level) > stepwise::level_index(floor)) sources.push_back(level);
    }
    const auto transitions = stepwise::downward_transitions(sources, floor);

    BackendStack backends = make_backends(config);
    const stepwise::RewardBuildResult built = stepwise::build_reward_matrix(
        dev, train, transitions, *backends.generator, *backends.estimator, one_step_config(config),
        config.sample_cap);

    for (const stepwise::SentenceFailure& failure : built.failures) {
        std::cerr << "warning: " << failure.transition << " sentence " << failure.sentence_id << ": "
                  << failure.message << "\n";
    }

    const stepwise::RewardMatrix normalized = stepwise::normalize(built.matrix);
    std::size_t empty_cells = 0;
    for (const auto& [transition, cell] : normalized.cells) {
        if (cell.sample_count == 0) {
            ++empty_cells;
            std::cerr << "warning: empty reward cell " << stepwise::render(transition) << "\n";
        }
    }

    const std::map<std::string, std::string> inputs{
        {"dev", stepwise::file_digest(config.dev_path)},
        {"train", stepwise::file_digest(config.train_path)}};
    stepwise::write_json_file(
        out_path, stepwise::with_provenance(stepwise::reward_matrix_to_json(normalized),
                                            config_digest(config), inputs));
    std::cout << "wrote " << out_path << " (" << normalized.cells.size() << " cells, " << empty_cells
              << " empty)\n";

    if (!genlog_path.empty()) {
        stepwise::write_json_file(genlog_path,
                                  stepwise::with_provenance(stepwise::validation_log_to_json(built.log),
                                                            config_digest(config), inputs));
        std::cout << "wrote " << genlog_path << "\n";
    }

    if (config.strict && (empty_cells > 0 || !built.failures.empty())) {
        std::cerr << "strict mode: empty cells or per-sentence failures present\n";
        return kExitBackend;
    }
    return kExitOk;
}

int cmd_plan(const CliConfig& config, const std::string& matrix_path, const std::string& out_path) {
    const stepwise::RewardMatrix matrix = stepwise::reward_matrix_from_json(
        stepwise::verify_and_strip_provenance(stepwise::read_json_file(matrix_path)));

    stepwise::PlanObjective objective;
    objective.mode = stepwise::parse_objective_mode(config.objective_mode);
    objective.forbid_empty_cells = config.forbid_empty_cells;

    json plans = json::array();
    stepwise::PlannedPaths planned;
    std::vector<std::pair<stepwise::Level, stepwise::Level>> pairs;
    std::size_t infeasible = 0;
    for (const stepwise::Level source : parse_levels(config.sources)) {
        for (const stepwise::Level target : parse_levels(config.targets)) {
            if (stepwise::level_index(target) >= stepwise::level_index(source)) continue;
            try {
                const stepwise::PlanResult result = stepwise::plan(matrix, source, target, objective);
                plans.push_back(stepwise::plan_to_json(result, objective.mode));
                planned.emplace(std::pair{source, target}, result.path);
                pairs.emplace_back(source, target);
            } catch (const stepwise::InfeasiblePathError& e) {
                ++infeasible;
                plans.push_back(json{{"source", std::string(stepwise::render(source))},
                                     {"target", std::string(stepwise::render(target))},
                                     {"error", e.what()}});
                std::cerr << "warning: " << e.what() << "\n";
            }
        }
    }

    json doc{{"objective_mode", config.objective_mode}, {"plans", std::move(plans)}};
    if (!pairs.empty()) {
        doc["rris"] = stepwise::rris_report_to_json(pairs, planned);
    }
    stepwise::write_json_file(out_path,
                              stepwise::with_provenance(std::move(doc), config_digest(config),
                                                        {{"matrix", stepwise::file_digest(matrix_path)}}));
    std::cout << "wrote " << out_path << "\n";
    if (!pairs.empty()) {
        std::cout << "rris vs sequential: " << stepwise::rris(pairs, planned) << "%\n";
    }
    if (infeasible > 0 && config.strict) {
        return kExitInfeasible;
    }
    return kExitOk;
}

std::vector<stepwise::Transition> transitions_from_plans(const json& plans_doc) {
    std::set<stepwise::Transition> edges;
    for (const json& entry : plans_doc.at("plans")) {
        if (entry.contains("error")) continue;
        const auto& path = entry.at("path");
        for (std::size_t i = 1; i < path.size(); ++i) {
            edges.emplace(stepwise::parse_level(path[i - 1].get<std::string>()),
                          stepwise::parse_level(path[i].get<std::string>()));
        }
    }
    return {edges.begin(), edges.end()};
}

int cmd_harvest(const CliConfig& config, const std::string& plans_path, const std::string& genlog_path,
                bool fresh, const std::string& out_path) {
    const auto dev = load_required_split(config, config.dev_path, "dev");
    const auto train = load_required_split(config, config.train_path, "train");
    const json plans_doc = stepwise::verify_and_strip_provenance(stepwise::read_json_file(plans_path));
    const std::vector<stepwise::Transition> transitions = transitions_from_plans(plans_doc);
    if (transitions.empty()) {
        throw stepwise::Error("plans file contains no usable paths: " + plans_path);
    }

    std::optional<stepwise::ValidationLog> log;
    if (!fresh && !genlog_path.empty() && fs::exists(genlog_path)) {
        log = stepwise::validation_log_from_json(
            stepwise::verify_and_strip_provenance(stepwise::read_json_file(genlog_path)));
    }

    BackendStack backends = make_backends(config);
    const stepwise::StoreBuildResult built = stepwise::exemplar_store_build(
        dev, train, transitions, *backends.generator, *backends.estimator, *backends.similarity, config.k,
        one_step_config(config), log ? &*log : nullptr);

    for (const stepwise::SentenceFailure& failure : built.report.sentence_failures) {
        std::cerr << "warning: " << failure.transition << " sentence " << failure.sentence_id << ": "
                  << failure.message << "\n";
    }
    for (const std::string& transition : built.report.fallback_transitions) {
        std::cout << "fallback exemplars used for " << transition << "\n";
    }
    for (const std::string& transition : built.report.fatal_transitions) {
        std::cerr << "error: no exemplars available for " << transition << "\n";
    }

    stepwise::write_json_file(out_path,
                              stepwise::with_provenance(stepwise::store_to_json(built.store),
                                                        config_digest(config),
                                                        {{"plans", stepwise::file_digest(plans_path)}}));
    std::cout << "wrote " << out_path << " (" << built.store.size() << " transitions)\n";
    if (!built.report.fatal_transitions.empty()) {
        return kExitConfig;
    }
    return kExitOk;
}

int cmd_run(const CliConfig& config, const std::string& matrix_path, const std::string& store_path,
            const std::string& out_dir) {
    const auto test = load_required_split(config, config.test_path, "test");
    const auto train = load_required_split(config, config.train_path, "train");
    const stepwise::RewardMatrix matrix = stepwise::reward_matrix_from_json(
        stepwise::verify_and_strip_provenance(stepwise::read_json_file(matrix_path)));
    if (config.flags.planning && !matrix.normalized) {
        throw stepwise::Error("planning requires a normalized matrix artifact: " + matrix_path);
    }

    stepwise::ExemplarStore store;
    if (config.flags.semantic) {
        if (store_path.empty()) {
            throw stepwise::Error("semantic exemplars require --store (or disable the semantic flag)");
        }
        store = stepwise::store_from_json(
            stepwise::verify_and_strip_provenance(stepwise::read_json_file(store_path)));
    }

    BackendStack backends = make_backends(config);
    stepwise::RunOptions options;
    options.profile = config.profile;
    options.objective.mode = stepwise::parse_objective_mode(config.objective_mode);
    options.objective.forbid_empty_cells = config.forbid_empty_cells;
    options.exemplar_k = config.k;
    options.parallelism = config.parallelism;
    options.log_intermediate_verdicts = config.log_intermediate_verdicts;

    const stepwise::RunReport report =
        stepwise::run_configuration(test, parse_levels(config.targets), config.flags, matrix, store, train,
                                    *backends.generator, *backends.estimator, config.prompt, options);

    fs::create_directories(out_dir);
    const fs::path results_path = fs::path(out_dir) / "results.jsonl";
    stepwise::save_results_jsonl(results_path, report.results);

    json failures = json::array();
    for (const stepwise::CascadeFailure& failure : report.failures) {
        failures.push_back({{"input_id", failure.input_id},
                            {"target", failure.target},
                            {"message", failure.message},
                            {"completed_steps", failure.partial.steps.size()}});
        std::cerr << "warning: cascade failed: " << failure.message << "\n";
    }

    std::map<std::string, std::string> input_digests{{"matrix", stepwise::file_digest(matrix_path)},
                                                     {"test", stepwise::file_digest(config.test_path)},
                                                     {"train", stepwise::file_digest(config.train_path)}};
    if (config.flags.semantic && !store_path.empty()) {
        input_digests.emplace("store", stepwise::file_digest(store_path));
    }

    const fs::path meta_path = fs::path(out_dir) / "run_meta.json";
    stepwise::write_json_file(
        meta_path,
        stepwise::with_provenance(
            json{{"label", flags_label(config)},
                 {"flags",
                  {{"planning", config.flags.planning},
                   {"semantic", config.flags.semantic},
                   {"history", config.flags.history}}},
                 {"model_id", config.profile.model_id},
                 {"prompt_digest",
                  stepwise::prompt_config_digest(config.prompt, config.profile,
                                                 config.validation_exemplar_count)},
                 {"cascades", report.results.size()},
                 {"failures", std::move(failures)},
                 {"skipped_pairs", report.skipped_pairs},
                 {"generation_calls", report.generation_calls}},
            config_digest(config), input_digests));

    if (!report.results.empty()) {
        const stepwise::MetricReport metrics = stepwise::build_report(report.results, *backends.similarity);
        json metrics_doc = stepwise::metric_report_to_json(metrics);
        metrics_doc["label"] = flags_label(config);
        const fs::path metrics_path = fs::path(out_dir) / "metrics.json";
        stepwise::write_json_file(metrics_path, stepwise::with_provenance(std::move(metrics_doc),
                                                                          config_digest(config),
                                                                          input_digests));
        std::cout << stepwise::render_metric_table({{flags_label(config), metrics.overall}});
    }
    std::cout << "cascades: " << report.results.size() << ", failures: " << report.failures.size()
              << ", skipped: " << report.skipped_pairs << ", generation calls: " << report.generation_calls
              << "\n";

    const double attempted = static_cast<double>(report.results.size() + report.failures.size());
    if (attempted > 0.0 &&
        static_cast<double>(report.failures.size()) / attempted > config.failure_threshold) {
        std::cerr << "failure rate above threshold " << config.failure_threshold << "\n";
        return kExitBackend;
    }
    return kExitOk;
}

int cmd_evaluate(const CliConfig& config, const std::string& results_path, const std::string& out_path,
                 const std::string& label) {
    const std::vector<stepwise::CascadeResult> results = stepwise::load_results_jsonl(results_path);
    if (results.empty()) {
        throw stepwise::Error("results file holds no cascades: " + results_path);
    }
    BackendStack backends = make_backends(config);
    const stepwise::MetricReport metrics = stepwise::build_report(results, *backends.similarity);
    json doc = stepwise::metric_report_to_json(metrics);
    doc["label"] = label.empty() ? flags_label(config) : label;
    if (!out_path.empty()) {
        stepwise::write_json_file(out_path,
                                  stepwise::with_provenance(std::move(doc), config_digest(config),
                                                            {{"results", stepwise::file_digest(results_path)}}));
        std::cout << "wrote " << out_path << "\n";
    }
    std::cout << stepwise::render_metric_table({{label.empty() ? flags_label(config) : label, metrics.overall}});
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& metric_files) {
    std::vector<std::pair<std::string, stepwise::MetricSummary>> rows;
    for (const std::string& file : metric_files) {
        const json doc = stepwise::verify_and_strip_provenance(stepwise::read_json_file(file));
        const std::string label = doc.contains("label") ? doc["label"].get<std::string>() : file;
        rows.emplace_back(label, stepwise::metric_report_from_json(doc).overall);
    }
    std::cout << stepwise::render_metric_table(rows);
    return kExitOk;
}

stepwise::FixtureShape shape_by_name(const std::string& name) {
    if (name == "readme_en") return stepwise::readme_en_shape();
    if (name == "readme_ru") return stepwise::readme_ru_shape();
    if (name == "small") return stepwise::small_shape();
    throw stepwise::Error("unknown fixture shape: " + name + " (expected readme_en, readme_ru or small)");
}

// Writes synthetic fixture corpora and a ready-to-edit config file.
CliConfig write_fixtures(const std::string& out_dir, const std::string& shape_name, CliConfig config) {
    const stepwise::CorpusSplit corpus = stepwise::synthetic_corpus(shape_by_name(shape_name), config.language);
    const fs::path corpus_dir = fs::path(out_dir) / "corpus";
    fs::create_directories(corpus_dir);
    stepwise::save_jsonl(corpus_dir / "train.jsonl", corpus.train);
    stepwise::save_jsonl(corpus_dir / "dev.jsonl", corpus.dev);
    stepwise::save_jsonl(corpus_dir / "test.jsonl", corpus.test);
    config.train_path = (corpus_dir / "train.jsonl").string();
    config.dev_path = (corpus_dir / "dev.jsonl").string();
    config.test_path = (corpus_dir / "test.jsonl").string();
    config.output_dir = out_dir;
    config.resolved = resolve_config_json(config);
    return config;
}

int cmd_mock_e2e(CliConfig config, const std::string& out_dir, const std::string& shape_name) {
    config.backend_profile = "mock";
    config = write_fixtures(out_dir, shape_name, config);

    std::cout << "== validate-corpus ==\n";
    int code = cmd_validate_corpus(config);
    if (code != kExitOk) return code;

    const fs::path dir(out_dir);
    std::cout << "== build-rewards ==\n";
    code = cmd_build_rewards(config, (dir / "matrix.json").string(), (dir / "genlog.json").string());
    if (code != kExitOk) return code;

    std::cout << "== plan ==\n";
    code = cmd_plan(config, (dir / "matrix.json").string(), (dir / "plans.json").string());
    if (code != kExitOk) return code;

    std::cout << "== harvest-exemplars ==\n";
    code = cmd_harvest(config, (dir / "plans.json").string(), (dir / "genlog.json").string(), false,
                       (dir / "store.json").string());
    if (code != kExitOk) return code;

    std::cout << "== run ==\n";
    code = cmd_run(config, (dir / "matrix.json").string(), (dir / "store.json").string(), out_dir);
    if (code != kExitOk) return code;

    std::cout << "== evaluate ==\n";
    code = cmd_evaluate(config, (dir / "results.jsonl").string(), (dir / "metrics_recheck.json").string(),
                        flags_label(config));
    if (code != kExitOk) return code;

    std::cout << "mock-e2e complete in " << out_dir << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stepwise: proficiency-controlled step-by-step sentence simplification"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "JSON configuration file");

    // Flag overrides applied on top of the config file.
    std::optional<bool> planning_override, semantic_override, history_override, strict_override;
    std::optional<std::string> objective_override, model_override;
    std::optional<std::size_t> parallelism_override, k_override, sample_cap_override;
    app.add_flag("--planning,!--no-planning",
                 [&](std::int64_t count) { planning_override = count > 0; },
                 "enable/disable DP path planning");
    app.add_flag("--semantic,!--no-semantic",
                 [&](std::int64_t count) { semantic_override = count > 0; },
                 "enable/disable semantic exemplars");
    app.add_flag("--history,!--no-history",
                 [&](std::int64_t count) { history_override = count > 0; },
                 "enable/disable chat history");
    app.add_flag("--strict,!--no-strict",
                 [&](std::int64_t count) { strict_override = count > 0; }, "strict artifact checking");
    std::string objective_opt, model_opt;
    app.add_option("--objective", objective_opt, "objective mode: mean_reward or total_reward");
    app.add_option("--model", model_opt, "model id for generation requests");
    std::size_t parallelism_opt = 0, k_opt = 0;
    app.add_option("--parallelism", parallelism_opt, "parallel in-flight cascade bound");
    app.add_option("--k", k_opt, "exemplars per transition");
    long long sample_cap_opt = -1;
    app.add_option("--sample-cap", sample_cap_opt, "dev sentences per reward cell");

    auto* validate = app.add_subcommand("validate-corpus", "load corpora and print per-level statistics");

    auto* build = app.add_subcommand("build-rewards", "build and normalize the transition reward matrix");
    std::string build_out = "matrix.json", build_genlog = "genlog.json";
    build->add_option("--out", build_out, "matrix output path");
    build->add_option("--genlog", build_genlog, "validation generation log output path (empty to skip)");

    auto* plan_cmd = app.add_subcommand("plan", "plan optimal paths for all source/target pairs");
    std::string plan_matrix = "matrix.json", plan_out = "plans.json";
    plan_cmd->add_option("--matrix", plan_matrix, "reward matrix artifact");
    plan_cmd->add_option("--out", plan_out, "plans output path");

    auto* harvest = app.add_subcommand("harvest-exemplars", "harvest and select few-shot exemplars");
    std::string harvest_plans = "plans.json", harvest_genlog = "genlog.json", harvest_out = "store.json";
    bool harvest_fresh = false;
    harvest->add_option("--plans", harvest_plans, "plans artifact naming the transitions");
    harvest->add_option("--genlog", harvest_genlog, "validation generation log to reuse");
    harvest->add_flag("--fresh", harvest_fresh, "ignore recorded generations and regenerate");
    harvest->add_option("--out", harvest_out, "exemplar store output path");

    auto* run = app.add_subcommand("run", "run cascades over the test split and report metrics");
    std::string run_matrix = "matrix.json", run_store = "store.json", run_out_dir;
    run->add_option("--matrix", run_matrix, "reward matrix artifact");
    run->add_option("--store", run_store, "exemplar store artifact");
    run->add_option("--out-dir", run_out_dir, "output directory (defaults to config output_dir)");

    auto* evaluate = app.add_subcommand("evaluate", "compute metrics for an existing results file");
    std::string eval_results = "results.jsonl", eval_out = "metrics.json", eval_label;
    evaluate->add_option("--results", eval_results, "results JSONL");
    evaluate->add_option("--out", eval_out, "metrics output path (empty to skip)");
    evaluate->add_option("--label", eval_label, "row label for the report table");

    auto* report = app.add_subcommand("report", "render a metrics table from metric files");
    std::vector<std::string> report_files;
    report->add_option("files", report_files, "metrics JSON files")->required();

    auto* mock = app.add_subcommand("mock-e2e", "full pipeline on synthetic fixtures with mock backends");
    std::string mock_out_dir = "mock-e2e-out", mock_shape = "readme_en";
    mock->add_option("--out-dir", mock_out_dir, "output directory");
    mock->add_option("--shape", mock_shape, "fixture shape: readme_en, readme_ru or small");

    CLI11_PARSE(app, argc, argv);

    try {
        CliConfig config = load_config(config_path);
        if (planning_override) config.flags.planning = *planning_override;
        if (semantic_override) config.flags.semantic = *semantic_override;
        if (history_override) config.flags.history = *history_override;
        if (strict_override) config.strict = *strict_override;
        if (!objective_opt.empty()) config.objective_mode = objective_opt;
        if (!model_opt.empty()) config.profile.model_id = model_opt;
        if (parallelism_opt > 0) config.parallelism = parallelism_opt;
        if (k_opt > 0) config.k = k_opt;
        if (sample_cap_opt >= 0) config.sample_cap = static_cast<std::size_t>(sample_cap_opt);
        config.resolved = resolve_config_json(config);

        if (validate->parsed()) return cmd_validate_corpus(config);
        if (build->parsed()) return cmd_build_rewards(config, build_out, build_genlog);
        if (plan_cmd->parsed()) return cmd_plan(config, plan_matrix, plan_out);
        if (harvest->parsed()) {
            return cmd_harvest(config, harvest_plans, harvest_genlog, harvest_fresh, harvest_out);
        }
        if (run->parsed()) {
            return cmd_run(config, run_matrix, run_store,
                           run_out_dir.empty() ? config.output_dir : run_out_dir);
        }
        if (evaluate->parsed()) return cmd_evaluate(config, eval_results, eval_out, eval_label);
        if (report->parsed()) return cmd_report(report_files);
        if (mock->parsed()) return cmd_mock_e2e(config, mock_out_dir, mock_shape);
    } catch (const stepwise::BudgetExceededError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const stepwise::TransportError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBackend;
    } catch (const stepwise::InfeasiblePathError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInfeasible;
    } catch (const stepwise::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
