#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stepwise/backends.hpp"
#include "stepwise/corpus.hpp"
#include "stepwise/errors.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

/// A validated (source, simplified) sentence pair. Harvested pairs satisfy
/// achieved_level == transition target (the exact-match filter); fallback
/// singles carry only simplified_text with both levels set to the target.
struct ExemplarPair {
    std::string source_text;
    std::string simplified_text;
    Level source_level = Level::A1;
    Level achieved_level = Level::A1;
    std::optional<double> similarity;

    bool operator==(const ExemplarPair&) const = default;
};

enum class ExemplarProvenance { Harvested, FallbackSingleSentences };

inline std::string_view render(ExemplarProvenance p) {
    return p == ExemplarProvenance::Harvested ? "harvested" : "fallback_single_sentences";
}

inline ExemplarProvenance parse_provenance(std::string_view name) {
    if (name == "harvested") return ExemplarProvenance::Harvested;
    if (name == "fallback_single_sentences") return ExemplarProvenance::FallbackSingleSentences;
    throw Error("unknown exemplar provenance: " + std::string(name));
}

/// The few-shot examples chosen for one transition, sorted by similarity
/// descending for harvested provenance.
struct ExemplarSet {
    Transition transition;
    std::vector<ExemplarPair> pairs;
    ExemplarProvenance provenance = ExemplarProvenance::Harvested;
};

/// Scores every candidate (source vs simplified) with the similarity backend
/// and keeps the top k, ties broken by candidate order. Fewer than k
/// candidates means all are used.
inline ExemplarSet select_exemplars(std::vector<ExemplarPair> candidates, std::size_t k,
                                    SimilarityScorer& scorer, const Transition& transition) {
    if (k == 0) {
        throw PreconditionError("exemplar count k must be positive");
    }
    for (ExemplarPair& pair : candidates) {
        pair.similarity = scorer.similarity(pair.source_text, pair.simplified_text);
    }
    std::stable_sort(candidates.begin(), candidates.end(), [](const ExemplarPair& a, const ExemplarPair& b) {
        return *a.similarity > *b.similarity;
    });
    if (candidates.size() > k) candidates.resize(k);
    return ExemplarSet{transition, std::move(candidates), ExemplarProvenance::Harvested};
}

/// When no harvested pair exists for a transition, fall back to the first k
/// training sentences labeled with the target level, in corpus order.
inline ExemplarSet fallback_exemplars(std::span<const LabeledSentence> train, Level target_level,
                                      std::size_t k, const Transition& transition) {
    if (k == 0) {
        throw PreconditionError("exemplar count k must be positive");
    }
    ExemplarSet set{transition, {}, ExemplarProvenance::FallbackSingleSentences};
    for (const LabeledSentence& s : train) {
        if (s.level != target_level) continue;
        ExemplarPair pair;
        pair.simplified_text = s.text;
        pair.source_level = target_level;
        pair.achieved_level = target_level;
        set.pairs.push_back(std::move(pair));
        if (set.pairs.size() == k) break;
    }
    if (set.pairs.empty()) {
        throw NoFallbackError("no training sentence at level " + std::string(render(target_level)) +
                              " available for fallback exemplars");
    }
    return set;
}

using ExemplarStore = std::map<Transition, ExemplarSet>;

inline nlohmann::json exemplar_set_to_json(const ExemplarSet& set) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const ExemplarPair& p : set.pairs) {
        nlohmann::json entry{{"source_text", p.source_text},
                             {"simplified_text", p.simplified_text},
                             {"source_level", std::string(render(p.source_level))},
                             {"achieved_level", std::string(render(p.achieved_level))}};
        entry["similarity"] = p.similarity ? nlohmann::json(*p.similarity) : nlohmann::json(nullptr);
        pairs.push_back(std::move(entry));
    }
    return nlohmann::json{{"source", std::string(render(set.transition.source))},
                          {"target", std::string(render(set.transition.target))},
                          {"provenance", std::string(render(set.provenance))},
                          {"pairs", std::move(pairs)}};
}

inline ExemplarSet exemplar_set_from_json(const nlohmann::json& j) {
    const Transition transition(parse_level(j.at("source").get<std::string>()),
                                parse_level(j.at("target").get<std::string>()));
    ExemplarSet set{transition, {}, parse_provenance(j.at("provenance").get<std::string>())};
    for (const nlohmann::json& entry : j.at("pairs")) {
        ExemplarPair pair;
        pair.source_text = entry.at("source_text").get<std::string>();
        pair.simplified_text = entry.at("simplified_text").get<std::string>();
        pair.source_level = parse_level(entry.at("source_level").get<std::string>());
        pair.achieved_level = parse_level(entry.at("achieved_level").get<std::string>());
        if (!entry.at("similarity").is_null()) pair.similarity = entry.at("similarity").get<double>();
        set.pairs.push_back(std::move(pair));
    }
    return set;
}

inline nlohmann::json store_to_json(const ExemplarStore& store) {
    nlohmann::json transitions = nlohmann::json::array();
    for (const auto& [transition, set] : store) {
        transitions.push_back(exemplar_set_to_json(set));
    }
    return nlohmann::json{{"transitions", std::move(transitions)}};
}

inline ExemplarStore store_from_json(const nlohmann::json& j) {
    ExemplarStore store;
    for (const nlohmann::json& entry : j.at("transitions")) {
        ExemplarSet set = exemplar_set_from_json(entry);
        const Transition key = set.transition;
        store.emplace(key, std::move(set));
    }
    return store;
}

}  // namespace stepwise
