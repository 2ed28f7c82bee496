#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "stepwise/errors.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

enum class Role { System, User, Assistant };

inline std::string_view render(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    throw Error("corrupt role value");
}

inline Role parse_role(std::string_view name) {
    if (name == "system") return Role::System;
    if (name == "user") return Role::User;
    if (name == "assistant") return Role::Assistant;
    throw Error("unknown chat role: " + std::string(name));
}

struct ChatMessage {
    Role role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

/// One generation call. The reproducibility profile is temperature 0.0 with
/// sampling disabled; only such requests are ever cached.
struct GenerationRequest {
    std::vector<ChatMessage> messages;
    int max_new_tokens = 128;
    double temperature = 0.0;
    bool sampling_enabled = false;
    std::string model_id;

    bool reproducible() const { return temperature == 0.0 && !sampling_enabled; }
};

struct EstimatorVerdict {
    Level level = Level::A1;
    std::optional<double> raw_score;

    bool operator==(const EstimatorVerdict&) const = default;
};

// ---------------------------------------------------------------------------
// Capability interfaces. Implementations must be safe to share across
// concurrent in-flight calls.
// ---------------------------------------------------------------------------

class TextGenerator {
public:
    virtual ~TextGenerator() = default;

    /// Returns the assistant reply for the request. Throws TransportError
    /// once retries are exhausted, ProtocolError on malformed responses and
    /// BudgetExceededError when a configured call ceiling is hit.
    virtual std::string generate(const GenerationRequest& request) = 0;
};

class LevelEstimator {
public:
    virtual ~LevelEstimator() = default;
    virtual EstimatorVerdict estimate_level(const std::string& text, const std::string& language) = 0;
};

class SimilarityScorer {
public:
    virtual ~SimilarityScorer() = default;

    /// Symmetric score in [-1, 1].
    virtual double similarity(const std::string& a, const std::string& b) = 0;
};

namespace detail {

inline void require_generation_preconditions(const GenerationRequest& request) {
    if (request.messages.empty()) {
        throw PreconditionError("generation request has no messages");
    }
    for (const ChatMessage& m : request.messages) {
        if (m.content.empty()) throw PreconditionError("generation request contains an empty message");
    }
    if (request.max_new_tokens <= 0) throw PreconditionError("max_new_tokens must be positive");
    if (request.temperature < 0.0) throw PreconditionError("temperature must be non-negative");
}

inline std::vector<std::string> whitespace_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) tokens.emplace_back(text.substr(start, i - start));
    }
    return tokens;
}

inline std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::string trim_copy(const std::string& s) {
    std::size_t begin = 0, end = s.size();
    while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
    while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
    return s.substr(begin, end - begin);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Deterministic mock backends for offline testing.
// ---------------------------------------------------------------------------

/// Rule-based generator: parses the current sentence and target level out of
/// the last user message, then emits the first N(target) whitespace tokens of
/// the sentence with a terminal period. N is level-monotone and chosen so the
/// output lands in the mock estimator's band for the target level.
class MockGenerator : public TextGenerator {
public:
    struct Config {
        std::string text_marker = "Sentence: ";
        // 1-based call number that fails once with TransportError (fault injection).
        std::optional<std::size_t> fail_at_call;
    };

    MockGenerator() = default;
    explicit MockGenerator(Config config) : config_(std::move(config)) {}

    static int token_budget(Level target) {
        switch (target) {
            case Level::A1: return 6;
            case Level::A2: return 10;
            case Level::B1: return 15;
            case Level::B2: return 21;
            case Level::C1: return 28;
            case Level::C2: return 36;
        }
        throw Error("corrupt level value");
    }

    std::string generate(const GenerationRequest& request) override {
        detail::require_generation_preconditions(request);
        const std::size_t call = ++calls_;
        if (config_.fail_at_call && call == *config_.fail_at_call) {
            throw TransportError("injected mock generator fault at call " + std::to_string(call));
        }

        const std::string& content = last_user_content(request);
        const std::string text = extract_marked_text(content);
        const Level target = extract_last_level(content);

        std::vector<std::string> tokens = detail::whitespace_tokens(text);
        if (tokens.empty()) {
            throw ProtocolError("mock generator found an empty sentence after the text marker");
        }
        const std::size_t keep = std::min<std::size_t>(tokens.size(), static_cast<std::size_t>(token_budget(target)));
        std::string out;
        for (std::size_t i = 0; i < keep; ++i) {
            if (i > 0) out += ' ';
            out += tokens[i];
        }
        if (out.empty() || out.back() != '.') out += '.';
        return out;
    }

    std::size_t call_count() const { return calls_.load(); }

private:
    const std::string& last_user_content(const GenerationRequest& request) const {
        for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
            if (it->role == Role::User) return it->content;
        }
        throw ProtocolError("mock generator needs at least one user message");
    }

    std::string extract_marked_text(const std::string& content) const {
        const std::size_t pos = content.rfind(config_.text_marker);
        if (pos == std::string::npos) {
            throw ProtocolError("mock generator could not find the text marker \"" + config_.text_marker + "\"");
        }
        const std::size_t start = pos + config_.text_marker.size();
        const std::size_t end = content.find('\n', start);
        return content.substr(start, end == std::string::npos ? std::string::npos : end - start);
    }

    Level extract_last_level(const std::string& content) const {
        static const std::regex level_re("\\b(A1|A2|B1|B2|C1|C2)\\b");
        std::optional<Level> found;
        for (auto it = std::sregex_iterator(content.begin(), content.end(), level_re);
             it != std::sregex_iterator(); ++it) {
            found = parse_level(it->str(1));
        }
        if (!found) {
            throw ProtocolError("mock generator could not find a target level in the user message");
        }
        return *found;
    }

    Config config_;
    std::atomic<std::size_t> calls_{0};
};

/// Word-count estimator: sentence length is a crude but monotone readability
/// proxy, which is all the pipeline tests need.
class MockEstimator : public LevelEstimator {
public:
    EstimatorVerdict estimate_level(const std::string& text, const std::string& /*language*/) override {
        if (detail::trim_copy(text).empty()) {
            throw PreconditionError("estimate_level requires non-empty text");
        }
        ++calls_;
        const std::size_t words = detail::whitespace_tokens(text).size();
        Level level = Level::C2;
        if (words <= 7) level = Level::A1;
        else if (words <= 12) level = Level::A2;
        else if (words <= 18) level = Level::B1;
        else if (words <= 25) level = Level::B2;
        else if (words <= 32) level = Level::C1;
        return EstimatorVerdict{level, static_cast<double>(words)};
    }

    std::size_t call_count() const { return calls_.load(); }

private:
    std::atomic<std::size_t> calls_{0};
};

/// Cosine over binary bag-of-words vectors on lowercased whitespace tokens.
class MockSimilarity : public SimilarityScorer {
public:
    double similarity(const std::string& a, const std::string& b) override {
        if (a.empty() || b.empty()) {
            throw PreconditionError("similarity requires two non-empty texts");
        }
        ++calls_;
        const std::set<std::string> sa = token_set(a);
        const std::set<std::string> sb = token_set(b);
        if (sa.empty() || sb.empty()) {
            throw PreconditionError("similarity requires texts with at least one token");
        }
        std::size_t common = 0;
        for (const std::string& t : sa) common += sb.count(t);
        return static_cast<double>(common) /
               std::sqrt(static_cast<double>(sa.size()) * static_cast<double>(sb.size()));
    }

    std::size_t call_count() const { return calls_.load(); }

private:
    static std::set<std::string> token_set(const std::string& text) {
        std::set<std::string> out;
        for (std::string& t : detail::whitespace_tokens(detail::lowercase(text))) {
            out.insert(std::move(t));
        }
        return out;
    }

    std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Decorators: retry, budget, caching.
// ---------------------------------------------------------------------------

/// Client hygiene for transient failures: retry on transport-level errors
/// only, with exponential backoff.
struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

template <typename Fn>
auto with_retries(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    std::chrono::milliseconds backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const TransportError&) {
            if (attempt >= policy.max_attempts) throw;
            std::this_thread::sleep_for(backoff);
            backoff = std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
        }
    }
}

/// Shared ceiling on the number of generation calls a run may make.
class CallBudget {
public:
    explicit CallBudget(std::size_t ceiling) : ceiling_(ceiling) {}

    void acquire() {
        const std::size_t n = ++used_;
        if (n > ceiling_) {
            --used_;
            throw BudgetExceededError("generation call ceiling of " + std::to_string(ceiling_) + " reached");
        }
    }

    std::size_t used() const { return used_.load(); }
    std::size_t ceiling() const { return ceiling_; }

private:
    std::size_t ceiling_;
    std::atomic<std::size_t> used_{0};
};

class BudgetedGenerator : public TextGenerator {
public:
    BudgetedGenerator(TextGenerator& inner, CallBudget& budget) : inner_(inner), budget_(budget) {}

    std::string generate(const GenerationRequest& request) override {
        budget_.acquire();
        return inner_.generate(request);
    }

private:
    TextGenerator& inner_;
    CallBudget& budget_;
};

/// Exact-match caches. Observationally equivalent to the wrapped backend;
/// generation is cached only under the reproducibility profile.
class CachedEstimator : public LevelEstimator {
public:
    explicit CachedEstimator(LevelEstimator& inner) : inner_(inner) {}

    EstimatorVerdict estimate_level(const std::string& text, const std::string& language) override {
        const std::pair<std::string, std::string> key{text, language};
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        EstimatorVerdict verdict = inner_.estimate_level(text, language);
        std::lock_guard lock(mutex_);
        cache_.emplace(key, verdict);
        return verdict;
    }

private:
    LevelEstimator& inner_;
    std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, EstimatorVerdict> cache_;
};

class CachedSimilarity : public SimilarityScorer {
public:
    explicit CachedSimilarity(SimilarityScorer& inner) : inner_(inner) {}

    double similarity(const std::string& a, const std::string& b) override {
        const std::pair<std::string, std::string> key{a, b};
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        const double score = inner_.similarity(a, b);
        std::lock_guard lock(mutex_);
        cache_.emplace(key, score);
        return score;
    }

private:
    SimilarityScorer& inner_;
    std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, double> cache_;
};

class CachedGenerator : public TextGenerator {
public:
    explicit CachedGenerator(TextGenerator& inner) : inner_(inner) {}

    std::string generate(const GenerationRequest& request) override {
        if (!request.reproducible()) {
            return inner_.generate(request);
        }
        const std::string key = request_key(request);
        {
            std::lock_guard lock(mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        std::string reply = inner_.generate(request);
        std::lock_guard lock(mutex_);
        cache_.emplace(key, reply);
        return reply;
    }

private:
    static std::string request_key(const GenerationRequest& request) {
        std::ostringstream key;
        key << request.model_id << '\x1f' << request.max_new_tokens << '\x1f';
        for (const ChatMessage& m : request.messages) {
            key << render(m.role) << '\x1e' << m.content << '\x1e';
        }
        return key.str();
    }

    TextGenerator& inner_;
    std::mutex mutex_;
    std::map<std::string, std::string> cache_;
};

}  // namespace stepwise
