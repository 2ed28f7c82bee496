#include <catch2/catch_amalgamated.hpp>

#include "stepwise/prompting.hpp"

using namespace stepwise;

namespace {

LabeledSentence sentence_at(Level level, const std::string& text) {
    return {"id-1", text, level, "en", "test"};
}

ExemplarSet harvested_set(const Transition& transition, int count) {
    ExemplarSet set{transition, {}, ExemplarProvenance::Harvested};
    for (int i = 0; i < count; ++i) {
        ExemplarPair pair;
        pair.source_text = "original " + std::to_string(i);
        pair.simplified_text = "simple " + std::to_string(i);
        pair.source_level = transition.source;
        pair.achieved_level = transition.target;
        pair.similarity = 0.9 - 0.1 * i;
        set.pairs.push_back(pair);
    }
    return set;
}

}  // namespace

TEST_CASE("first step prompt is system plus user") {
    const LabeledSentence input = sentence_at(Level::B2, "a reasonably long source sentence");
    const LevelPath path({Level::B2, Level::B1});
    ConversationState state = make_initial_state(input, path);
    const Transition transition(Level::B2, Level::B1);
    PromptConfig config;

    const auto messages = build_step_prompt(state, transition, harvested_set(transition, 2), config);
    REQUIRE(messages.size() == 2);
    CHECK(messages[0].role == Role::System);
    CHECK(messages[1].role == Role::User);
    CHECK(messages[0].content.find("B1") != std::string::npos);
    CHECK(messages[1].content.find("Sentence: a reasonably long source sentence") != std::string::npos);
    CHECK(messages[1].content.find("Simplify the sentence to CEFR level B1.") != std::string::npos);
    CHECK(messages[1].content.find("Original: original 0") != std::string::npos);
    CHECK(messages[1].content.find("Simplified: simple 1") != std::string::npos);
}

TEST_CASE("history carries prior turns into later prompts") {
    const LabeledSentence input = sentence_at(Level::C2, "the source sentence to walk down");
    const LevelPath path({Level::C2, Level::B2, Level::B1, Level::A2});
    ConversationState state = make_initial_state(input, path);
    PromptConfig config;
    config.include_history = true;

    // Step 1.
    const Transition first(Level::C2, Level::B2);
    auto messages = build_step_prompt(state, first, harvested_set(first, 1), config);
    CHECK(messages.size() == 2);
    advance_state(state, messages.back().content, "raw reply one", "extracted one");

    // Step 2 carries one user/assistant turn.
    const Transition second(Level::B2, Level::B1);
    messages = build_step_prompt(state, second, harvested_set(second, 1), config);
    REQUIRE(messages.size() == 4);
    CHECK(messages[0].role == Role::System);
    CHECK(messages[1].role == Role::User);
    CHECK(messages[2].role == Role::Assistant);
    CHECK(messages[2].content == "raw reply one");
    CHECK(messages[3].role == Role::User);
    CHECK(messages[3].content.find("Sentence: extracted one") != std::string::npos);
    advance_state(state, messages.back().content, "raw reply two", "extracted two");

    // Step 3: 2 + 2*(3-1) messages.
    const Transition third(Level::B1, Level::A2);
    messages = build_step_prompt(state, third, harvested_set(third, 1), config);
    CHECK(messages.size() == 6);
}

TEST_CASE("without history every step has exactly two messages") {
    const LabeledSentence input = sentence_at(Level::C2, "the source sentence to walk down");
    const LevelPath path({Level::C2, Level::B2, Level::B1});
    ConversationState state = make_initial_state(input, path);
    PromptConfig config;
    config.include_history = false;

    const Transition first(Level::C2, Level::B2);
    auto messages = build_step_prompt(state, first, harvested_set(first, 1), config);
    CHECK(messages.size() == 2);
    advance_state(state, messages.back().content, "raw one", "extracted one");

    const Transition second(Level::B2, Level::B1);
    messages = build_step_prompt(state, second, harvested_set(second, 1), config);
    CHECK(messages.size() == 2);
}

TEST_CASE("flat prompting collapses everything into one user message") {
    const LabeledSentence input = sentence_at(Level::B2, "the source sentence");
    const LevelPath path({Level::B2, Level::B1});
    ConversationState state = make_initial_state(input, path);
    PromptConfig config;
    config.use_chat_template = false;

    const Transition transition(Level::B2, Level::B1);
    const auto messages = build_step_prompt(state, transition, harvested_set(transition, 1), config);
    REQUIRE(messages.size() == 1);
    CHECK(messages[0].role == Role::User);
    CHECK(messages[0].content.find("expert text simplification assistant") != std::string::npos);
    CHECK(messages[0].content.find("Sentence: the source sentence") != std::string::npos);
}

TEST_CASE("fallback exemplars render as single sentences") {
    const LabeledSentence input = sentence_at(Level::B2, "the source sentence");
    const LevelPath path({Level::B2, Level::B1});
    ConversationState state = make_initial_state(input, path);
    const Transition transition(Level::B2, Level::B1);

    ExemplarSet set{transition, {}, ExemplarProvenance::FallbackSingleSentences};
    ExemplarPair pair;
    pair.simplified_text = "a plain level sentence";
    pair.source_level = Level::B1;
    pair.achieved_level = Level::B1;
    set.pairs.push_back(pair);

    const auto messages = build_step_prompt(state, transition, set, PromptConfig{});
    CHECK(messages.back().content.find("Example 1 of a sentence at level B1: a plain level sentence") !=
          std::string::npos);
    CHECK(messages.back().content.find("Original:") == std::string::npos);
}

TEST_CASE("prompt construction preconditions") {
    const LabeledSentence input = sentence_at(Level::B2, "text");
    const LevelPath path({Level::B2, Level::B1});
    ConversationState state = make_initial_state(input, path);

    SECTION("transition must start at the conversation level") {
        const Transition wrong(Level::C2, Level::B1);
        CHECK_THROWS_AS(build_step_prompt(state, wrong, harvested_set(wrong, 1), PromptConfig{}),
                        PreconditionError);
    }
    SECTION("missing descriptor") {
        PromptConfig config;
        config.descriptor_catalog.erase(Level::B1);
        const Transition transition(Level::B2, Level::B1);
        CHECK_THROWS_AS(build_step_prompt(state, transition, harvested_set(transition, 1), config),
                        MissingDescriptorError);
    }
    SECTION("plan must start at the sentence level") {
        CHECK_THROWS_AS(make_initial_state(sentence_at(Level::C1, "text"), path), PreconditionError);
    }
}

TEST_CASE("extract_output strips quotes") {
    CHECK(extract_output("\"The cat sat.\"") == "The cat sat.");
    CHECK(extract_output("'The cat sat.'") == "The cat sat.");
    CHECK(extract_output("  The cat sat.  ") == "The cat sat.");
}

TEST_CASE("extract_output drops configured prefixes and takes the first non-empty line") {
    ExtractionConfig config;
    config.drop_prefixes = {"Here is"};
    CHECK(extract_output("Here is the simplified sentence:\nThe cat sat.", config) == "The cat sat.");
    CHECK(extract_output("\n\nThe cat sat.\nAnd more.", config) == "The cat sat.");
}

TEST_CASE("extract_output honors sentinel markers") {
    ExtractionConfig config;
    config.sentinel_open = "<output>";
    config.sentinel_close = "</output>";
    CHECK(extract_output("preamble\n<output>The cat sat.</output>\ntrailer", config) == "The cat sat.");
    // Without both markers present it falls back to line extraction.
    CHECK(extract_output("The cat sat.", config) == "The cat sat.");
}

TEST_CASE("extract_output raises EmptyResponse") {
    CHECK_THROWS_AS(extract_output(""), EmptyResponseError);
    CHECK_THROWS_AS(extract_output("   \n  "), EmptyResponseError);
    ExtractionConfig config;
    config.drop_prefixes = {"Here is"};
    CHECK_THROWS_AS(extract_output("Here is something\nHere is more", config), EmptyResponseError);
}
