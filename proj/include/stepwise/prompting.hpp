#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stepwise/backends.hpp"
#include "stepwise/corpus.hpp"
#include "stepwise/errors.hpp"
#include "stepwise/exemplars.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

/// How the simplified sentence is parsed out of the raw model reply:
/// sentinel markers win, then the prefix-drop list, then the first
/// non-empty line, always with surrounding quote stripping.
struct ExtractionConfig {
    std::optional<std::string> sentinel_open;
    std::optional<std::string> sentinel_close;
    std::vector<std::string> drop_prefixes = {"Here is", "Here's", "Sure", "Simplified:"};
};

/// Short can-do style descriptors per level. Editable via config; the
/// template placeholders are the contract, not this prose.
inline std::map<Level, std::string> default_descriptor_catalog() {
    return {
        {Level::A1, "Use very short sentences with the most common everyday words and simple present-tense "
                    "structures about concrete things."},
        {Level::A2, "Use short sentences with frequent everyday vocabulary and basic grammar about familiar "
                    "routines and direct needs."},
        {Level::B1, "Use clear sentences with common vocabulary that describe experiences, events and plans "
                    "without specialised terms."},
        {Level::B2, "Use well-structured sentences that can handle abstract topics and some field-specific "
                    "vocabulary while staying clear."},
        {Level::C1, "Use fluent, flexible sentences with a wide vocabulary range, including idiomatic and "
                    "less frequent expressions."},
        {Level::C2, "Use precise, sophisticated sentences with full command of complex structures, nuance and "
                    "domain terminology."},
    };
}

struct PromptConfig {
    std::string system_instruction_template =
        "You are an expert text simplification assistant. Rewrite the given sentence so that it reads at "
        "CEFR level {target_level}. {descriptor}";
    std::map<Level, std::string> descriptor_catalog = default_descriptor_catalog();
    std::string pair_exemplar_template =
        "Example {index} (simplified to {target_level}):\nOriginal: {source}\nSimplified: {simplified}";
    std::string single_exemplar_template =
        "Example {index} of a sentence at level {target_level}: {example}";
    std::string user_instruction_template =
        "Sentence: {text}\nSimplify the sentence to CEFR level {target_level}.";
    bool include_history = true;
    bool include_semantic_exemplars = true;
    bool use_chat_template = true;
    ExtractionConfig extraction;
};

/// Message history plus the rolling text for one cascading simplification.
/// Confined to its cascade; never shared.
struct ConversationState {
    std::vector<ChatMessage> turns;  // completed user/assistant turns, append-only
    std::string current_text;
    Level current_level_nominal;
    LevelPath path;
    std::size_t step_index = 0;
};

inline ConversationState make_initial_state(const LabeledSentence& sentence, const LevelPath& path) {
    if (path.source() != sentence.level) {
        throw PreconditionError("plan starts at " + std::string(render(path.source())) +
                                " but sentence \"" + sentence.id + "\" is labeled " +
                                std::string(render(sentence.level)));
    }
    return ConversationState{{}, sentence.text, sentence.level, path, 0};
}

namespace detail {

inline std::string substitute(std::string text, std::string_view placeholder, std::string_view value) {
    const std::string token = "{" + std::string(placeholder) + "}";
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        text.replace(pos, token.size(), value);
        pos += value.size();
    }
    return text;
}

}  // namespace detail

inline std::string render_exemplar_block(const ExemplarSet& exemplars, const PromptConfig& config) {
    std::string block;
    std::size_t index = 1;
    for (const ExemplarPair& pair : exemplars.pairs) {
        std::string entry = exemplars.provenance == ExemplarProvenance::FallbackSingleSentences
                                ? config.single_exemplar_template
                                : config.pair_exemplar_template;
        entry = detail::substitute(std::move(entry), "index", std::to_string(index));
        entry = detail::substitute(std::move(entry), "target_level", render(exemplars.transition.target));
        entry = detail::substitute(std::move(entry), "source", pair.source_text);
        entry = detail::substitute(std::move(entry), "simplified", pair.simplified_text);
        entry = detail::substitute(std::move(entry), "example", pair.simplified_text);
        if (!block.empty()) block += "\n\n";
        block += entry;
        ++index;
    }
    return block;
}

/// Assembles the messages for one step: system instruction with target level
/// and descriptor, prior turns when history is on, then a user message with
/// the exemplar block and the current sentence plus the explicit
/// "simplify to {target}" instruction.
inline std::vector<ChatMessage> build_step_prompt(const ConversationState& state, const Transition& transition,
                                                  const ExemplarSet& exemplars, const PromptConfig& config) {
    if (transition.source != state.current_level_nominal) {
        throw PreconditionError("step transition starts at " + std::string(render(transition.source)) +
                                " but the conversation is at " +
                                std::string(render(state.current_level_nominal)));
    }
    const auto descriptor = config.descriptor_catalog.find(transition.target);
    if (descriptor == config.descriptor_catalog.end()) {
        throw MissingDescriptorError("no descriptor configured for level " +
                                     std::string(render(transition.target)));
    }

    std::string system_text = config.system_instruction_template;
    system_text = detail::substitute(std::move(system_text), "target_level", render(transition.target));
    system_text = detail::substitute(std::move(system_text), "descriptor", descriptor->second);

    std::string user_text = render_exemplar_block(exemplars, config);
    std::string instruction = config.user_instruction_template;
    instruction = detail::substitute(std::move(instruction), "text", state.current_text);
    instruction = detail::substitute(std::move(instruction), "target_level", render(transition.target));
    if (user_text.empty()) {
        user_text = std::move(instruction);
    } else {
        user_text += "\n\n" + instruction;
    }

    std::vector<ChatMessage> messages;
    if (!config.use_chat_template) {
        // Single flat prompt, no roles beyond one user turn and no history.
        messages.push_back({Role::User, system_text + "\n\n" + user_text});
        return messages;
    }
    messages.push_back({Role::System, std::move(system_text)});
    if (config.include_history) {
        messages.insert(messages.end(), state.turns.begin(), state.turns.end());
    }
    messages.push_back({Role::User, std::move(user_text)});
    return messages;
}

/// Appends the completed turn verbatim and rolls the state forward to the
/// next level with the extracted output as the new working text.
inline void advance_state(ConversationState& state, const std::string& user_content,
                          const std::string& assistant_raw, const std::string& extracted_text) {
    state.turns.push_back({Role::User, user_content});
    state.turns.push_back({Role::Assistant, assistant_raw});
    state.current_text = extracted_text;
    ++state.step_index;
    state.current_level_nominal = state.path.levels().at(state.step_index);
}

namespace detail {

inline std::string strip_surrounding_quotes(std::string s) {
    while (s.size() >= 2) {
        const char first = s.front();
        const char last = s.back();
        if ((first == '"' && last == '"') || (first == '\'' && last == '\'')) {
            s = s.substr(1, s.size() - 2);
            s = trim_copy(s);
        } else {
            break;
        }
    }
    return s;
}

}  // namespace detail

/// Pulls the simplified sentence out of a raw model reply.
inline std::string extract_output(const std::string& raw_response, const ExtractionConfig& config = {}) {
    const std::string trimmed = detail::trim_copy(raw_response);
    if (trimmed.empty()) {
        throw EmptyResponseError("model reply is empty");
    }

    if (config.sentinel_open && config.sentinel_close) {
        const std::size_t open = trimmed.find(*config.sentinel_open);
        if (open != std::string::npos) {
            const std::size_t start = open + config.sentinel_open->size();
            const std::size_t close = trimmed.find(*config.sentinel_close, start);
            if (close != std::string::npos) {
                const std::string span =
                    detail::strip_surrounding_quotes(detail::trim_copy(trimmed.substr(start, close - start)));
                if (span.empty()) throw EmptyResponseError("sentinel markers enclose an empty span");
                return span;
            }
        }
    }

    std::size_t pos = 0;
    while (pos <= trimmed.size()) {
        const std::size_t eol = trimmed.find('\n', pos);
        const std::string line =
            detail::trim_copy(trimmed.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos));
        pos = eol == std::string::npos ? trimmed.size() + 1 : eol + 1;
        if (line.empty()) continue;
        bool dropped = false;
        for (const std::string& prefix : config.drop_prefixes) {
            if (line.rfind(prefix, 0) == 0) {
                dropped = true;
                break;
            }
        }
        if (dropped) continue;
        const std::string cleaned = detail::strip_surrounding_quotes(line);
        if (cleaned.empty()) continue;
        return cleaned;
    }
    throw EmptyResponseError("model reply contains no usable line");
}

}  // namespace stepwise
