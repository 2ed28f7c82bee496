#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stepwise/backends.hpp"
#include "stepwise/corpus.hpp"
#include "stepwise/errors.hpp"
#include "stepwise/exemplars.hpp"
#include "stepwise/levels.hpp"
#include "stepwise/parallel.hpp"
#include "stepwise/planner.hpp"
#include "stepwise/prompting.hpp"
#include "stepwise/provenance.hpp"
#include "stepwise/reward.hpp"

namespace stepwise {

/// Generation parameters carried into every request. The default matches the
/// reproducibility profile (temperature 0, sampling off, 128 new tokens).
struct GenerationProfile {
    int max_new_tokens = 128;
    double temperature = 0.0;
    bool sampling_enabled = false;
    std::string model_id = "mock";
};

/// Everything the one-step validation passes (reward construction and
/// exemplar harvesting) need to build and run a single-transition prompt.
struct OneStepConfig {
    PromptConfig prompt;
    GenerationProfile profile;
    std::size_t validation_exemplar_count = 1;  // training sentences shown in the one-step prompt
    std::size_t parallelism = 1;
};

/// Digest over every prompt-shaping knob; guards reuse of recorded
/// generations across configuration changes.
inline std::string prompt_config_digest(const PromptConfig& prompt, const GenerationProfile& profile,
                                        std::size_t validation_exemplar_count) {
    nlohmann::json doc{{"system", prompt.system_instruction_template},
                       {"pair", prompt.pair_exemplar_template},
                       {"single", prompt.single_exemplar_template},
                       {"user", prompt.user_instruction_template},
                       {"chat", prompt.use_chat_template},
                       {"max_new_tokens", profile.max_new_tokens},
                       {"temperature", profile.temperature},
                       {"sampling", profile.sampling_enabled},
                       {"model", profile.model_id},
                       {"exemplar_count", validation_exemplar_count}};
    nlohmann::json descriptors = nlohmann::json::object();
    for (const auto& [level, text] : prompt.descriptor_catalog) {
        descriptors[std::string(render(level))] = text;
    }
    doc["descriptors"] = std::move(descriptors);
    // Extraction shapes the recorded outputs, so it must invalidate reuse too.
    doc["extraction"] = nlohmann::json{
        {"sentinel_open",
         prompt.extraction.sentinel_open ? nlohmann::json(*prompt.extraction.sentinel_open) : nlohmann::json(nullptr)},
        {"sentinel_close",
         prompt.extraction.sentinel_close ? nlohmann::json(*prompt.extraction.sentinel_close)
                                          : nlohmann::json(nullptr)},
        {"drop_prefixes", prompt.extraction.drop_prefixes}};
    return json_digest(doc);
}

namespace detail {

inline GenerationRequest make_request(std::vector<ChatMessage> messages, const GenerationProfile& profile) {
    GenerationRequest request;
    request.messages = std::move(messages);
    request.max_new_tokens = profile.max_new_tokens;
    request.temperature = profile.temperature;
    request.sampling_enabled = profile.sampling_enabled;
    request.model_id = profile.model_id;
    return request;
}

// Single-case exemplars for one-step validation prompts: the first training
// sentences at the target level. An empty set (zero-shot) when none exist.
inline ExemplarSet validation_exemplars(std::span<const LabeledSentence> train, const Transition& transition,
                                        std::size_t count) {
    try {
        return fallback_exemplars(train, transition.target, count, transition);
    } catch (const NoFallbackError&) {
        return ExemplarSet{transition, {}, ExemplarProvenance::FallbackSingleSentences};
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One-step validation pass, shared by reward construction and harvesting.
// ---------------------------------------------------------------------------

/// One recorded validation generation: what came out of a single-transition
/// simplification of one dev sentence, and the level the estimator saw.
struct OneStepRecord {
    std::string sentence_id;
    std::string source_text;
    std::string output_text;
    Level achieved = Level::A1;
};

/// Validation generations keyed by transition, reusable between the reward
/// pass and exemplar harvesting when the prompt configuration matches.
struct ValidationLog {
    std::string prompt_digest;
    std::map<Transition, std::vector<OneStepRecord>> records;
};

struct SentenceFailure {
    std::string sentence_id;
    std::string transition;
    std::string message;
};

namespace detail {

struct OneStepOutcome {
    std::optional<OneStepRecord> record;
    std::optional<std::string> error;
};

inline OneStepOutcome run_one_step(const LabeledSentence& sentence, const Transition& transition,
                                   std::span<const LabeledSentence> train, TextGenerator& generator,
                                   LevelEstimator& estimator, const OneStepConfig& config) {
    OneStepOutcome outcome;
    try {
        const LevelPath step_path({transition.source, transition.target});
        const ConversationState state{{}, sentence.text, sentence.level, step_path, 0};
        const ExemplarSet exemplars =
            validation_exemplars(train, transition, config.validation_exemplar_count);
        std::vector<ChatMessage> messages = build_step_prompt(state, transition, exemplars, config.prompt);
        const std::string raw = generator.generate(make_request(std::move(messages), config.profile));
        const std::string output = extract_output(raw, config.prompt.extraction);
        const EstimatorVerdict verdict = estimator.estimate_level(output, sentence.language);
        outcome.record = OneStepRecord{sentence.id, sentence.text, output, verdict.level};
    } catch (const Error& e) {
        outcome.error = e.what();
    }
    return outcome;
}

}  // namespace detail

struct RewardBuildResult {
    RewardMatrix matrix;  // unnormalized
    ValidationLog log;
    std::vector<SentenceFailure> failures;
};

/// Populates the reward matrix: every dev sentence at each transition's
/// source level (up to sample_cap, in corpus order) is simplified in one
/// step with training-set examples, verified, scored and averaged.
inline RewardBuildResult build_reward_matrix(std::span<const LabeledSentence> dev,
                                             std::span<const LabeledSentence> train,
                                             const std::vector<Transition>& transitions,
                                             TextGenerator& generator, LevelEstimator& estimator,
                                             const OneStepConfig& config,
                                             std::optional<std::size_t> sample_cap = std::nullopt) {
    RewardBuildResult result;
    result.log.prompt_digest =
        prompt_config_digest(config.prompt, config.profile, config.validation_exemplar_count);

    struct Task {
        const LabeledSentence* sentence;
        std::size_t transition_index;
    };
    std::vector<Task> tasks;
    for (std::size_t ti = 0; ti < transitions.size(); ++ti) {
        result.matrix.cells[transitions[ti]];  // cell exists even when no dev sentence feeds it
        std::size_t taken = 0;
        for (const LabeledSentence& s : dev) {
            if (s.level != transitions[ti].source) continue;
            if (sample_cap && taken >= *sample_cap) break;
            tasks.push_back({&s, ti});
            ++taken;
        }
    }

    std::vector<detail::OneStepOutcome> outcomes(tasks.size());
    parallel_for(tasks.size(), config.parallelism, [&](std::size_t i) {
        outcomes[i] = detail::run_one_step(*tasks[i].sentence, transitions[tasks[i].transition_index], train,
                                           generator, estimator, config);
    });

    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const Transition& transition = transitions[tasks[i].transition_index];
        if (outcomes[i].record) {
            result.matrix.cells[transition].add_outcome(outcomes[i].record->achieved, transition.target);
            result.log.records[transition].push_back(std::move(*outcomes[i].record));
        } else {
            result.failures.push_back(
                {tasks[i].sentence->id, render(transition), outcomes[i].error.value_or("unknown error")});
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Exemplar harvesting and store construction.
// ---------------------------------------------------------------------------

struct HarvestResult {
    std::vector<ExemplarPair> pairs;
    std::vector<SentenceFailure> failures;
};

/// One-step simplification of every dev sentence at the transition's source
/// level, keeping only pairs whose verdict exactly matches the target.
/// Recorded validation generations are reused when the prompt configuration
/// digest matches; only missing sentences are regenerated.
inline HarvestResult harvest_pairs(std::span<const LabeledSentence> dev, const Transition& transition,
                                   std::span<const LabeledSentence> train, TextGenerator& generator,
                                   LevelEstimator& estimator, const OneStepConfig& config,
                                   const ValidationLog* reuse = nullptr) {
    HarvestResult result;

    std::map<std::string, const OneStepRecord*> recorded;
    if (reuse != nullptr &&
        reuse->prompt_digest ==
            prompt_config_digest(config.prompt, config.profile, config.validation_exemplar_count)) {
        if (const auto it = reuse->records.find(transition); it != reuse->records.end()) {
            for (const OneStepRecord& r : it->second) recorded.emplace(r.sentence_id, &r);
        }
    }

    std::vector<const LabeledSentence*> pool;
    for (const LabeledSentence& s : dev) {
        if (s.level == transition.source) pool.push_back(&s);
    }

    std::vector<detail::OneStepOutcome> outcomes(pool.size());
    parallel_for(pool.size(), config.parallelism, [&](std::size_t i) {
        if (const auto it = recorded.find(pool[i]->id); it != recorded.end()) {
            outcomes[i].record = *it->second;
            return;
        }
        outcomes[i] = detail::run_one_step(*pool[i], transition, train, generator, estimator, config);
    });

    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (!outcomes[i].record) {
            result.failures.push_back({pool[i]->id, render(transition), outcomes[i].error.value_or("unknown error")});
            continue;
        }
        if (outcomes[i].record->achieved != transition.target) continue;  // exact-match filter
        ExemplarPair pair;
        pair.source_text = outcomes[i].record->source_text;
        pair.simplified_text = outcomes[i].record->output_text;
        pair.source_level = transition.source;
        pair.achieved_level = outcomes[i].record->achieved;
        result.pairs.push_back(std::move(pair));
    }
    return result;
}

struct StoreBuildReport {
    std::vector<SentenceFailure> sentence_failures;
    std::vector<std::string> fallback_transitions;  // empty harvest, training-sentence fallback used
    std::vector<std::string> fatal_transitions;     // both harvest and fallback failed
};

struct StoreBuildResult {
    ExemplarStore store;
    StoreBuildReport report;
};

/// Builds the per-transition exemplar store: harvest, then top-k selection
/// by semantic similarity, falling back to single training sentences when
/// the harvest is empty.
inline StoreBuildResult exemplar_store_build(std::span<const LabeledSentence> dev,
                                             std::span<const LabeledSentence> train,
                                             const std::vector<Transition>& transitions,
                                             TextGenerator& generator, LevelEstimator& estimator,
                                             SimilarityScorer& similarity, std::size_t k,
                                             const OneStepConfig& config,
                                             const ValidationLog* reuse = nullptr) {
    StoreBuildResult result;
    for (const Transition& transition : transitions) {
        HarvestResult harvest = harvest_pairs(dev, transition, train, generator, estimator, config, reuse);
        result.report.sentence_failures.insert(result.report.sentence_failures.end(),
                                               harvest.failures.begin(), harvest.failures.end());
        if (!harvest.pairs.empty()) {
            result.store.emplace(transition,
                                 select_exemplars(std::move(harvest.pairs), k, similarity, transition));
            continue;
        }
        try {
            result.store.emplace(transition, fallback_exemplars(train, transition.target, k, transition));
            result.report.fallback_transitions.push_back(render(transition));
        } catch (const NoFallbackError&) {
            result.report.fatal_transitions.push_back(render(transition));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Cascades.
// ---------------------------------------------------------------------------

struct StepRecord {
    Transition transition;
    std::size_t prompt_message_count = 0;
    std::string raw_response;
    std::string extracted_text;
    std::optional<Level> intermediate_verdict;  // filled only when logging is enabled
};

/// Outcome of one full multi-step simplification.
struct CascadeResult {
    std::string input_id;
    std::string input_text;
    Level source_level = Level::C2;
    Level target_level = Level::A1;
    Level achieved_level = Level::A1;
    std::string final_text;
    std::vector<StepRecord> steps;
    bool exact_match = false;
    bool adjacent_match = false;
};

/// A cascade aborted mid-flight; carries the partial trace.
class CascadeError : public Error {
public:
    CascadeError(const std::string& message, CascadeResult partial)
        : Error(message), partial_(std::move(partial)) {}
    const CascadeResult& partial() const { return partial_; }

private:
    CascadeResult partial_;
};

struct CascadeOptions {
    GenerationProfile profile;
    bool log_intermediate_verdicts = false;
};

using ExemplarProvider = std::function<ExemplarSet(const Transition&)>;

/// Walks the planned path one transition at a time: each step's extracted
/// output becomes the next step's working text, and only the final output is
/// verified against the requested target.
inline CascadeResult run_cascade(const LabeledSentence& sentence, Level target, const LevelPath& plan,
                                 const ExemplarProvider& exemplars_for, TextGenerator& generator,
                                 LevelEstimator& estimator, const PromptConfig& config,
                                 const CascadeOptions& options = {}) {
    if (plan.source() != sentence.level) {
        throw PreconditionError("plan starts at " + std::string(render(plan.source())) + " but sentence \"" +
                                sentence.id + "\" is labeled " + std::string(render(sentence.level)));
    }
    if (plan.target() != target) {
        throw PreconditionError("plan ends at " + std::string(render(plan.target())) +
                                " but the requested target is " + std::string(render(target)));
    }

    CascadeResult result;
    result.input_id = sentence.id;
    result.input_text = sentence.text;
    result.source_level = sentence.level;
    result.target_level = target;

    ConversationState state = make_initial_state(sentence, plan);
    for (std::size_t i = 0; i < plan.step_count(); ++i) {
        const Transition transition = plan.step(i);
        try {
            const ExemplarSet exemplars = exemplars_for(transition);
            std::vector<ChatMessage> messages = build_step_prompt(state, transition, exemplars, config);
            StepRecord record{transition, messages.size(), "", "", std::nullopt};
            const std::string user_content = messages.back().content;
            record.raw_response = generator.generate(detail::make_request(std::move(messages), options.profile));
            record.extracted_text = extract_output(record.raw_response, config.extraction);
            if (options.log_intermediate_verdicts && i + 1 < plan.step_count()) {
                record.intermediate_verdict =
                    estimator.estimate_level(record.extracted_text, sentence.language).level;
            }
            advance_state(state, user_content, record.raw_response, record.extracted_text);
            result.steps.push_back(std::move(record));
        } catch (const Error& e) {
            throw CascadeError("cascade for \"" + sentence.id + "\" aborted at step " + std::to_string(i + 1) +
                                   " (" + render(transition) + "): " + e.what(),
                               std::move(result));
        }
    }

    result.final_text = state.current_text;
    try {
        const EstimatorVerdict verdict = estimator.estimate_level(result.final_text, sentence.language);
        result.achieved_level = verdict.level;
    } catch (const Error& e) {
        throw CascadeError("final verification for \"" + sentence.id + "\" failed: " + e.what(),
                           std::move(result));
    }
    result.exact_match = result.achieved_level == target;
    result.adjacent_match = level_distance(result.achieved_level, target) <= 1;
    return result;
}

// ---------------------------------------------------------------------------
// Configuration runs (the Planning/Semantic/History grid).
// ---------------------------------------------------------------------------

struct ConfigurationFlags {
    bool planning = true;
    bool semantic = true;
    bool history = true;
};

struct CascadeFailure {
    std::string input_id;
    std::string target;
    std::string message;
    CascadeResult partial;
};

struct RunReport {
    std::vector<CascadeResult> results;
    std::vector<CascadeFailure> failures;
    std::size_t skipped_pairs = 0;      // target not strictly below source
    std::size_t generation_calls = 0;   // total steps across successful cascades
};

struct RunOptions {
    GenerationProfile profile;
    PlanObjective objective;
    std::size_t exemplar_k = 3;
    std::size_t parallelism = 1;
    bool log_intermediate_verdicts = false;
};

/// Runs one ablation-grid configuration over the test split: planning picks
/// the DP path (otherwise one direct step), semantic picks harvested
/// exemplars (otherwise one training sentence per step), history carries the
/// conversation across steps.
inline RunReport run_configuration(std::span<const LabeledSentence> test, const std::vector<Level>& targets,
                                   const ConfigurationFlags& flags, const RewardMatrix& matrix,
                                   const ExemplarStore& store, std::span<const LabeledSentence> train,
                                   TextGenerator& generator, LevelEstimator& estimator,
                                   const PromptConfig& base_config, const RunOptions& options = {}) {
    PromptConfig config = base_config;
    config.include_history = flags.history;
    config.include_semantic_exemplars = flags.semantic;

    const ExemplarProvider exemplars_for = [&](const Transition& transition) -> ExemplarSet {
        if (config.include_semantic_exemplars) {
            if (const auto it = store.find(transition); it != store.end()) return it->second;
            return fallback_exemplars(train, transition.target, options.exemplar_k, transition);
        }
        return fallback_exemplars(train, transition.target, 1, transition);
    };

    struct Task {
        const LabeledSentence* sentence;
        Level target;
    };
    std::vector<Task> tasks;
    RunReport report;
    for (const LabeledSentence& sentence : test) {
        for (const Level target : targets) {
            if (level_index(target) >= level_index(sentence.level)) {
                ++report.skipped_pairs;
                continue;
            }
            tasks.push_back({&sentence, target});
        }
    }

    // Plans depend only on (source, target); compute them once up front.
    std::map<std::pair<Level, Level>, LevelPath> plans;
    std::map<std::pair<Level, Level>, std::string> plan_errors;
    for (const Task& task : tasks) {
        const std::pair<Level, Level> key{task.sentence->level, task.target};
        if (plans.count(key) || plan_errors.count(key)) continue;
        if (!flags.planning) {
            plans.emplace(key, LevelPath({key.first, key.second}));
            continue;
        }
        try {
            plans.emplace(key, plan(matrix, key.first, key.second, options.objective).path);
        } catch (const Error& e) {
            plan_errors.emplace(key, e.what());
        }
    }

    struct Slot {
        std::optional<CascadeResult> result;
        std::optional<CascadeFailure> failure;
    };
    std::vector<Slot> slots(tasks.size());
    const CascadeOptions cascade_options{options.profile, options.log_intermediate_verdicts};
    parallel_for(tasks.size(), options.parallelism, [&](std::size_t i) {
        const Task& task = tasks[i];
        const std::pair<Level, Level> key{task.sentence->level, task.target};
        if (const auto bad = plan_errors.find(key); bad != plan_errors.end()) {
            slots[i].failure = CascadeFailure{task.sentence->id, std::string(render(task.target)),
                                              bad->second, CascadeResult{}};
            return;
        }
        try {
            slots[i].result = run_cascade(*task.sentence, task.target, plans.at(key), exemplars_for,
                                          generator, estimator, config, cascade_options);
        } catch (const CascadeError& e) {
            slots[i].failure =
                CascadeFailure{task.sentence->id, std::string(render(task.target)), e.what(), e.partial()};
        } catch (const Error& e) {
            slots[i].failure = CascadeFailure{task.sentence->id, std::string(render(task.target)), e.what(),
                                              CascadeResult{}};
        }
    });

    for (Slot& slot : slots) {
        if (slot.result) {
            report.generation_calls += slot.result->steps.size();
            report.results.push_back(std::move(*slot.result));
        } else if (slot.failure) {
            report.failures.push_back(std::move(*slot.failure));
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

inline nlohmann::json cascade_result_to_json(const CascadeResult& result) {
    nlohmann::json steps = nlohmann::json::array();
    for (const StepRecord& step : result.steps) {
        nlohmann::json entry{{"source", std::string(render(step.transition.source))},
                             {"target", std::string(render(step.transition.target))},
                             {"prompt_message_count", step.prompt_message_count},
                             {"raw_response", step.raw_response},
                             {"extracted_text", step.extracted_text}};
        entry["intermediate_verdict"] = step.intermediate_verdict
                                            ? nlohmann::json(std::string(render(*step.intermediate_verdict)))
                                            : nlohmann::json(nullptr);
        steps.push_back(std::move(entry));
    }
    return nlohmann::json{{"input_id", result.input_id},
                          {"input_text", result.input_text},
                          {"source_level", std::string(render(result.source_level))},
                          {"target_level", std::string(render(result.target_level))},
                          {"achieved_level", std::string(render(result.achieved_level))},
                          {"final_text", result.final_text},
                          {"steps", std::move(steps)},
                          {"exact_match", result.exact_match},
                          {"adjacent_match", result.adjacent_match}};
}

inline CascadeResult cascade_result_from_json(const nlohmann::json& j) {
    CascadeResult result;
    result.input_id = j.at("input_id").get<std::string>();
    result.input_text = j.at("input_text").get<std::string>();
    result.source_level = parse_level(j.at("source_level").get<std::string>());
    result.target_level = parse_level(j.at("target_level").get<std::string>());
    result.achieved_level = parse_level(j.at("achieved_level").get<std::string>());
    result.final_text = j.at("final_text").get<std::string>();
    result.exact_match = j.at("exact_match").get<bool>();
    result.adjacent_match = j.at("adjacent_match").get<bool>();
    for (const nlohmann::json& entry : j.at("steps")) {
        StepRecord step{Transition(parse_level(entry.at("source").get<std::string>()),
                                   parse_level(entry.at("target").get<std::string>())),
                        entry.at("prompt_message_count").get<std::size_t>(),
                        entry.at("raw_response").get<std::string>(),
                        entry.at("extracted_text").get<std::string>(),
                        std::nullopt};
        if (!entry.at("intermediate_verdict").is_null()) {
            step.intermediate_verdict = parse_level(entry.at("intermediate_verdict").get<std::string>());
        }
        result.steps.push_back(std::move(step));
    }
    return result;
}

inline void save_results_jsonl(const std::filesystem::path& path, std::span<const CascadeResult> results) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write results file: " + path.string());
    }
    for (const CascadeResult& result : results) {
        out << cascade_result_to_json(result).dump() << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline std::vector<CascadeResult> load_results_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open results file: " + path.string());
    }
    std::vector<CascadeResult> results;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json doc = nlohmann::json::parse(line, nullptr, false);
        if (doc.is_discarded()) {
            throw ParseError(line_no, "not valid JSON");
        }
        results.push_back(cascade_result_from_json(doc));
    }
    return results;
}

inline nlohmann::json validation_log_to_json(const ValidationLog& log) {
    nlohmann::json transitions = nlohmann::json::array();
    for (const auto& [transition, records] : log.records) {
        nlohmann::json entries = nlohmann::json::array();
        for (const OneStepRecord& r : records) {
            entries.push_back({{"sentence_id", r.sentence_id},
                               {"source_text", r.source_text},
                               {"output_text", r.output_text},
                               {"achieved", std::string(render(r.achieved))}});
        }
        transitions.push_back({{"source", std::string(render(transition.source))},
                               {"target", std::string(render(transition.target))},
                               {"records", std::move(entries)}});
    }
    return nlohmann::json{{"prompt_digest", log.prompt_digest}, {"transitions", std::move(transitions)}};
}

inline ValidationLog validation_log_from_json(const nlohmann::json& j) {
    ValidationLog log;
    log.prompt_digest = j.at("prompt_digest").get<std::string>();
    for (const nlohmann::json& entry : j.at("transitions")) {
        const Transition transition(parse_level(entry.at("source").get<std::string>()),
                                    parse_level(entry.at("target").get<std::string>()));
        std::vector<OneStepRecord>& records = log.records[transition];
        for (const nlohmann::json& r : entry.at("records")) {
            records.push_back({r.at("sentence_id").get<std::string>(),
                               r.at("source_text").get<std::string>(),
                               r.at("output_text").get<std::string>(),
                               parse_level(r.at("achieved").get<std::string>())});
        }
    }
    return log;
}

}  // namespace stepwise
