#pragma once

#include <cstdlib>
#include <memory>
#include <string>

#include <httplib.h>
#include <json.hpp>

#include "stepwise/backends.hpp"
#include "stepwise/errors.hpp"
#include "stepwise/levels.hpp"

namespace stepwise {

/// Shared settings for one HTTP backend. The API key is never stored in
/// config files; only the name of the environment variable holding it is.
struct HttpEndpointConfig {
    std::string base_url;  // e.g. "http://127.0.0.1:8080"
    std::string path;      // request path, see per-client defaults
    std::string api_key_env;
    RetryPolicy retry;
    int timeout_seconds = 120;
};

namespace detail {

class HttpJsonClient {
public:
    explicit HttpJsonClient(HttpEndpointConfig config) : config_(std::move(config)) {
        if (!config_.api_key_env.empty()) {
            if (const char* key = std::getenv(config_.api_key_env.c_str())) {
                bearer_token_ = key;
            }
        }
    }

    nlohmann::json post(const nlohmann::json& body) const {
        return with_retries(config_.retry, [&] { return post_once(body); });
    }

    const HttpEndpointConfig& config() const { return config_; }

private:
    nlohmann::json post_once(const nlohmann::json& body) const {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        client.set_read_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!bearer_token_.empty()) {
            headers.emplace("Authorization", "Bearer " + bearer_token_);
        }
        httplib::Result result = client.Post(config_.path, headers, body.dump(), "application/json");
        if (!result) {
            throw TransportError("request to " + config_.base_url + config_.path +
                                 " failed: " + httplib::to_string(result.error()));
        }
        if (result->status == 429 || result->status >= 500) {
            throw TransportError("server returned status " + std::to_string(result->status) + " for " +
                                 config_.path);
        }
        if (result->status != 200) {
            throw ProtocolError("server returned status " + std::to_string(result->status) + " for " +
                                config_.path + ": " + result->body);
        }
        nlohmann::json parsed = nlohmann::json::parse(result->body, nullptr, false);
        if (parsed.is_discarded()) {
            throw ProtocolError("response from " + config_.path + " is not valid JSON");
        }
        return parsed;
    }

    HttpEndpointConfig config_;
    std::string bearer_token_;
};

}  // namespace detail

/// OpenAI-compatible chat-completions client.
class ChatCompletionsClient : public TextGenerator {
public:
    explicit ChatCompletionsClient(HttpEndpointConfig config) : client_(with_default_path(std::move(config))) {}

    std::string generate(const GenerationRequest& request) override {
        detail::require_generation_preconditions(request);
        nlohmann::json messages = nlohmann::json::array();
        for (const ChatMessage& m : request.messages) {
            messages.push_back({{"role", std::string(render(m.role))}, {"content", m.content}});
        }
        const nlohmann::json body{{"model", request.model_id},
                                  {"messages", messages},
                                  {"temperature", request.temperature},
                                  {"max_tokens", request.max_new_tokens}};
        const nlohmann::json reply = client_.post(body);
        if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty()) {
            throw ProtocolError("chat-completions response has no choices");
        }
        const nlohmann::json& first = reply["choices"][0];
        if (!first.contains("message") || !first["message"].contains("content") ||
            !first["message"]["content"].is_string()) {
            throw ProtocolError("chat-completions response is missing choices[0].message.content");
        }
        return first["message"]["content"].get<std::string>();
    }

private:
    static HttpEndpointConfig with_default_path(HttpEndpointConfig config) {
        if (config.path.empty()) config.path = "/v1/chat/completions";
        return config;
    }

    detail::HttpJsonClient client_;
};

/// JSON POST estimator endpoint: {"text","language"} -> {"level"}.
class HttpEstimator : public LevelEstimator {
public:
    explicit HttpEstimator(HttpEndpointConfig config) : client_(with_default_path(std::move(config))) {}

    EstimatorVerdict estimate_level(const std::string& text, const std::string& language) override {
        if (detail::trim_copy(text).empty()) {
            throw PreconditionError("estimate_level requires non-empty text");
        }
        const nlohmann::json reply = client_.post({{"text", text}, {"language", language}});
        if (!reply.contains("level") || !reply["level"].is_string()) {
            throw ProtocolError("estimator response is missing a string \"level\" field");
        }
        EstimatorVerdict verdict;
        try {
            verdict.level = parse_level(reply["level"].get<std::string>());
        } catch (const UnknownLevelError& e) {
            throw ProtocolError(std::string("estimator returned an unknown level: ") + e.what());
        }
        if (reply.contains("raw_score") && reply["raw_score"].is_number()) {
            verdict.raw_score = reply["raw_score"].get<double>();
        }
        return verdict;
    }

private:
    static HttpEndpointConfig with_default_path(HttpEndpointConfig config) {
        if (config.path.empty()) config.path = "/estimate";
        return config;
    }

    detail::HttpJsonClient client_;
};

/// JSON POST similarity endpoint: {"a","b"} -> {"score"}.
class HttpSimilarityScorer : public SimilarityScorer {
public:
    explicit HttpSimilarityScorer(HttpEndpointConfig config) : client_(with_default_path(std::move(config))) {}

    double similarity(const std::string& a, const std::string& b) override {
        if (a.empty() || b.empty()) {
            throw PreconditionError("similarity requires two non-empty texts");
        }
        const nlohmann::json reply = client_.post({{"a", a}, {"b", b}});
        if (!reply.contains("score") || !reply["score"].is_number()) {
            throw ProtocolError("similarity response is missing a numeric \"score\" field");
        }
        const double score = reply["score"].get<double>();
        if (score < -1.0 || score > 1.0) {
            throw ProtocolError("similarity score out of [-1, 1]: " + std::to_string(score));
        }
        return score;
    }

private:
    static HttpEndpointConfig with_default_path(HttpEndpointConfig config) {
        if (config.path.empty()) config.path = "/similarity";
        return config;
    }

    detail::HttpJsonClient client_;
};

}  // namespace stepwise
