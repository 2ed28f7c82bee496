#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "stepwise/errors.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

/// One level-labeled sentence, stored verbatim apart from whitespace trimming.
struct LabeledSentence {
    std::string id;
    std::string text;
    Level level = Level::A1;
    std::string language;       // ISO 639-1 code
    std::string source_corpus;  // origin tag

    bool operator==(const LabeledSentence&) const = default;
};

enum class CorpusFormat { Jsonl, Tsv };

inline CorpusFormat parse_corpus_format(std::string_view name) {
    if (name == "jsonl") return CorpusFormat::Jsonl;
    if (name == "tsv") return CorpusFormat::Tsv;
    throw Error("unknown corpus format: " + std::string(name));
}

/// TSV lines carry only id/text/level; language and source_corpus come from here.
struct LoadOptions {
    CorpusFormat format = CorpusFormat::Jsonl;
    std::string language = "en";
    std::string source_corpus = "unknown";
};

struct SplitStats {
    std::map<Level, std::size_t> per_level;  // all six levels present, absent ones 0
    std::size_t total = 0;
};

struct CorpusSplit {
    std::vector<LabeledSentence> train;
    std::vector<LabeledSentence> dev;
    std::vector<LabeledSentence> test;
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return std::string(s.substr(begin, end - begin));
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return fields;
}

}  // namespace detail

/// Loads one split, one record per line. Malformed lines are reported with
/// their 1-based line number; ids must be unique within the split.
inline std::vector<LabeledSentence> load_split(const std::filesystem::path& path, const LoadOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open corpus file: " + path.string());
    }

    std::vector<LabeledSentence> out;
    std::unordered_set<std::string> seen_ids;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;

        LabeledSentence sentence;
        if (options.format == CorpusFormat::Jsonl) {
            nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
            if (record.is_discarded() || !record.is_object()) {
                throw ParseError(line_no, "not a JSON object");
            }
            for (const char* field : {"id", "text", "level", "language", "source_corpus"}) {
                if (!record.contains(field) || !record[field].is_string()) {
                    throw ParseError(line_no, std::string("missing or non-string field \"") + field + "\"");
                }
            }
            sentence.id = record["id"].get<std::string>();
            sentence.text = detail::trim(record["text"].get<std::string>());
            try {
                sentence.level = parse_level(record["level"].get<std::string>());
            } catch (const UnknownLevelError& e) {
                throw UnknownLevelError("line " + std::to_string(line_no) + ": " + e.what());
            }
            sentence.language = record["language"].get<std::string>();
            sentence.source_corpus = record["source_corpus"].get<std::string>();
        } else {
            const std::vector<std::string> fields = detail::split_tabs(line);
            if (fields.size() != 3) {
                throw ParseError(line_no, "expected 3 tab-separated fields (id, text, level), got " +
                                              std::to_string(fields.size()));
            }
            sentence.id = detail::trim(fields[0]);
            sentence.text = detail::trim(fields[1]);
            try {
                sentence.level = parse_level(detail::trim(fields[2]));
            } catch (const UnknownLevelError& e) {
                throw UnknownLevelError("line " + std::to_string(line_no) + ": " + e.what());
            }
            sentence.language = options.language;
            sentence.source_corpus = options.source_corpus;
        }

        if (sentence.text.empty()) {
            throw ParseError(line_no, "empty sentence text");
        }
        if (sentence.id.empty()) {
            throw ParseError(line_no, "empty id");
        }
        if (!seen_ids.insert(sentence.id).second) {
            throw ParseError(line_no, "duplicate id \"" + sentence.id + "\"");
        }
        out.push_back(std::move(sentence));
    }
    return out;
}

inline nlohmann::json sentence_to_json(const LabeledSentence& s) {
    return nlohmann::json{{"id", s.id},
                          {"text", s.text},
                          {"level", std::string(render(s.level))},
                          {"language", s.language},
                          {"source_corpus", s.source_corpus}};
}

/// Writes the canonical JSONL interchange form; load_split round-trips it.
inline void save_jsonl(const std::filesystem::path& path, std::span<const LabeledSentence> split) {
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write corpus file: " + path.string());
    }
    for (const LabeledSentence& s : split) {
        out << sentence_to_json(s).dump() << '\n';
    }
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

inline SplitStats split_stats(std::span<const LabeledSentence> split) {
    SplitStats stats;
    for (Level level : all_levels()) stats.per_level[level] = 0;
    for (const LabeledSentence& s : split) {
        ++stats.per_level[s.level];
        ++stats.total;
    }
    return stats;
}

/// Order-preserving subset at the given level.
inline std::vector<LabeledSentence> filter_by_level(std::span<const LabeledSentence> split, Level level) {
    std::vector<LabeledSentence> out;
    for (const LabeledSentence& s : split) {
        if (s.level == level) out.push_back(s);
    }
    return out;
}

/// Test splits should contain only simplification sources (B2 and above);
/// returns a warning per offending sentence.
inline std::vector<std::string> test_split_warnings(std::span<const LabeledSentence> test) {
    std::vector<std::string> warnings;
    for (const LabeledSentence& s : test) {
        if (level_index(s.level) < level_index(Level::B2)) {
            warnings.push_back("test sentence \"" + s.id + "\" has level " + std::string(render(s.level)) +
                               ", below the expected source levels (B2, C1, C2)");
        }
    }
    return warnings;
}

}  // namespace stepwise
