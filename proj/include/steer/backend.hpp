#pragma once

#include "steer/message.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace steer {

struct CompletionRequest {
    std::string model;
    MessageList messages;
    std::optional<double> temperature;  // unset = provider default
    std::optional<int> max_tokens;
    std::string request_tag;            // replay key, unique within a run
};

enum class FinishReason { Stop, Length, Other };

std::string_view finish_reason_name(FinishReason r);
FinishReason finish_reason_from_string(std::string_view s);

struct Usage {
    int prompt_tokens = 0;
    int completion_tokens = 0;
    int total_tokens = 0;
};

struct CompletionResult {
    std::string text;
    FinishReason finish_reason = FinishReason::Stop;
    std::optional<Usage> usage;
};

// Error hierarchy surfaced by every backend.
class BackendError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Timeouts, refused connections, TLS failures.
class TransportError : public BackendError {
public:
    using BackendError::BackendError;
};

// Non-2xx HTTP status other than 429.
class ApiError : public BackendError {
public:
    ApiError(int status, std::string body_excerpt);
    int status;
    std::string body_excerpt;

    // 413, or 400 whose body mentions the context window.
    bool is_context_overflow() const;
};

class RateLimited : public BackendError {
public:
    explicit RateLimited(std::optional<std::chrono::milliseconds> retry_after = std::nullopt);
    std::optional<std::chrono::milliseconds> retry_after;
};

class FixtureMiss : public BackendError {
public:
    explicit FixtureMiss(std::string tag, std::string_view why = "no entry");
    std::string tag;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual CompletionResult complete(const CompletionRequest& req) = 0;
    // Short description recorded in run manifests.
    virtual std::string identity() const = 0;
    // True when identical tag sequences always yield identical results.
    virtual bool deterministic() const { return false; }
    virtual std::size_t max_parallel() const { return 1; }
};

// Answers by request_tag from a JSON-lines fixture:
//   {"tag": "ocean/O", "text": "5\n2\n...", "reusable": false}
// Each tag is served once per backend instance unless marked reusable.
class ReplayBackend : public Backend {
public:
    struct Entry {
        std::string text;
        FinishReason finish_reason = FinishReason::Stop;
        bool reusable = false;
    };

    ReplayBackend() = default;
    static std::unique_ptr<ReplayBackend> from_jsonl(std::string_view content, std::string source = "<memory>");

    void add(std::string tag, Entry entry);
    std::size_t size() const;

    CompletionResult complete(const CompletionRequest& req) override;
    std::string identity() const override { return "replay:" + source_; }
    bool deterministic() const override { return true; }
    std::size_t max_parallel() const override { return 8; }

private:
    std::string source_ = "<memory>";
    std::map<std::string, Entry, std::less<>> entries_;
    std::map<std::string, bool, std::less<>> consumed_;
    mutable std::mutex mu_;
};

std::unique_ptr<ReplayBackend> replay_from_fixture(const std::filesystem::path& path);

// Calls a user function; `call_index` counts calls to this backend from 0.
class ScriptedBackend : public Backend {
public:
    using Script = std::function<CompletionResult(const CompletionRequest&, std::size_t call_index)>;

    explicit ScriptedBackend(Script script, std::string name = "scripted");
    static std::unique_ptr<ScriptedBackend> constant(std::string text);
    // Replies cycle through `texts`.
    static std::unique_ptr<ScriptedBackend> sequence(std::vector<std::string> texts);

    CompletionResult complete(const CompletionRequest& req) override;
    std::string identity() const override { return name_; }
    bool deterministic() const override { return true; }
    std::size_t max_parallel() const override { return 8; }
    std::size_t calls() const;

private:
    Script script_;
    std::string name_;
    std::size_t calls_ = 0;
    mutable std::mutex mu_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Retries TransportError, RateLimited and 5xx ApiError with exponential
// backoff. Other ApiErrors surface immediately.
class RetryingBackend : public Backend {
public:
    RetryingBackend(std::unique_ptr<Backend> inner, RetryPolicy policy, Sleeper sleeper = {});

    CompletionResult complete(const CompletionRequest& req) override;
    std::string identity() const override { return inner_->identity(); }
    bool deterministic() const override { return inner_->deterministic(); }
    std::size_t max_parallel() const override { return inner_->max_parallel(); }

    // Attempts made for the most recent call with this tag.
    int attempts(std::string_view tag) const;
    const Backend& inner() const { return *inner_; }

private:
    std::unique_ptr<Backend> inner_;
    RetryPolicy policy_;
    Sleeper sleep_;
    std::map<std::string, int, std::less<>> attempts_;
    mutable std::mutex mu_;
};

std::unique_ptr<RetryingBackend> with_retries(std::unique_ptr<Backend> inner, RetryPolicy policy,
                                              Sleeper sleeper = {});

enum class BackendKind { Http, Replay, Scripted };
std::string_view backend_kind_name(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

// How role prompts reach the model: a system message for chat models, plain
// text prepended to the user turn for completion models.
enum class PromptStyle { Chat, Completion };

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct BackendConfig {
    BackendKind kind = BackendKind::Replay;
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-3.5-turbo";
    std::string api_key_env = "OPENAI_API_KEY";
    std::chrono::milliseconds timeout{60000};
    RetryPolicy retry;
    std::size_t max_parallel = 1;
    PromptStyle style = PromptStyle::Chat;
    std::optional<double> temperature;
    std::optional<int> max_tokens;
    std::filesystem::path fixture;   // replay
    std::string scripted_text;       // scripted: constant reply

    void validate() const;
};

// JSON config document; unknown keys are rejected.
BackendConfig load_backend_config(std::string_view document);
std::string serialize_backend_config(const BackendConfig& cfg);

// Builds the configured backend wrapped in the retry policy. The HTTP API key
// is read from the environment variable named by api_key_env.
std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, Sleeper sleeper = {});

// OpenAI-compatible chat-completions wire format.
std::string encode_chat_request(const CompletionRequest& req);
CompletionResult decode_chat_response(std::string_view body);

class HttpBackend : public Backend {
public:
    HttpBackend(BackendConfig cfg, std::string api_key);
    ~HttpBackend() override;

    CompletionResult complete(const CompletionRequest& req) override;
    std::string identity() const override;
    std::size_t max_parallel() const override { return cfg_.max_parallel; }

private:
    struct Endpoint;
    BackendConfig cfg_;
    std::string api_key_;
    std::unique_ptr<Endpoint> endpoint_;
};

} // namespace steer
