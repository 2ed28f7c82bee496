#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "stepwise/corpus.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

/// Per-level sentence counts (index 0 = A1 .. index 5 = C2) for a synthetic
/// corpus. The bundled shapes mirror published benchmark statistics; the
/// sentences themselves are synthetic because the originals cannot be
/// redistributed.
struct FixtureShape {
    std::array<std::size_t, 6> train{};
    std::array<std::size_t, 6> dev{};
    std::array<std::size_t, 6> test{};
};

inline FixtureShape readme_en_shape() {
    FixtureShape shape;
    shape.train = {146, 539, 485, 713, 304, 56};
    shape.dev = {14, 69, 61, 91, 39, 9};
    shape.test = {0, 0, 0, 92, 34, 6};
    return shape;
}

inline FixtureShape readme_ru_shape() {
    FixtureShape shape;
    shape.train = {321, 223, 334, 260, 193, 73};
    shape.dev = {39, 34, 38, 32, 23, 10};
    shape.test = {0, 0, 0, 34, 21, 8};
    return shape;
}

/// A few sentences per level; enough to exercise every pipeline stage fast.
inline FixtureShape small_shape() {
    FixtureShape shape;
    shape.train = {4, 4, 4, 4, 4, 4};
    shape.dev = {3, 3, 3, 3, 3, 3};
    shape.test = {0, 0, 0, 4, 3, 2};
    return shape;
}

namespace detail {

// Word counts sit inside the mock estimator's band for each level, so a
// fixture sentence estimates to its own label unless deliberately shortened.
inline std::size_t fixture_word_count(Level level) {
    switch (level) {
        case Level::A1: return 5;
        case Level::A2: return 10;
        case Level::B1: return 15;
        case Level::B2: return 22;
        case Level::C1: return 29;
        case Level::C2: return 40;
    }
    return 5;
}

inline std::string fixture_text(Level level, std::size_t index, std::size_t words) {
    // Tokens are unique per sentence so bag-of-words similarity across
    // different sentences is exactly zero.
    std::string text;
    const std::string stem = "v" + std::to_string(level_index(level)) + "s" + std::to_string(index) + "w";
    for (std::size_t w = 0; w < words; ++w) {
        if (w > 0) text += ' ';
        text += stem + std::to_string(w);
    }
    text += '.';
    return text;
}

inline std::vector<LabeledSentence> fixture_split(std::string_view split_name,
                                                  const std::array<std::size_t, 6>& counts,
                                                  const std::string& language, bool dev_irregularities) {
    std::vector<LabeledSentence> out;
    for (const Level level : all_levels()) {
        const std::size_t count = counts[static_cast<std::size_t>(level_index(level) - 1)];
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t words = fixture_word_count(level);
            if (dev_irregularities) {
                // Deterministic sprinkle of short, effectively mislabeled
                // sentences so reward cells see adjacent and miss outcomes.
                if (level_index(level) >= level_index(Level::B1) && i % 7 == 6) words = 9;
                if (level_index(level) >= level_index(Level::C1) && i % 11 == 10) words = 11;
            }
            LabeledSentence sentence;
            sentence.id = std::string(split_name) + "-" + std::string(render(level)) + "-" + std::to_string(i);
            sentence.text = fixture_text(level, i, words);
            sentence.level = level;
            sentence.language = language;
            sentence.source_corpus = "synthetic";
            out.push_back(std::move(sentence));
        }
    }
    return out;
}

}  // namespace detail

/// Deterministic synthetic corpus matching the shape. Dev sentences include
/// a sprinkle of short outliers; train and test are regular.
inline CorpusSplit synthetic_corpus(const FixtureShape& shape, const std::string& language = "en") {
    CorpusSplit corpus;
    corpus.train = detail::fixture_split("train", shape.train, language, false);
    corpus.dev = detail::fixture_split("dev", shape.dev, language, true);
    corpus.test = detail::fixture_split("test", shape.test, language, false);
    return corpus;
}

}  // namespace stepwise
