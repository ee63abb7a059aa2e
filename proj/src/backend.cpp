#include "steer/backend.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

namespace steer {

using nlohmann::json;

std::string_view finish_reason_name(FinishReason r) {
    switch (r) {
    case FinishReason::Stop: return "stop";
    case FinishReason::Length: return "length";
    case FinishReason::Other: return "other";
    }
    return "other";
}

FinishReason finish_reason_from_string(std::string_view s) {
    if (s == "stop") return FinishReason::Stop;
    if (s == "length") return FinishReason::Length;
    return FinishReason::Other;
}

ApiError::ApiError(int status, std::string body)
    : BackendError("API error " + std::to_string(status) + ": " + body),
      status(status), body_excerpt(std::move(body)) {}

bool ApiError::is_context_overflow() const {
    if (status == 413)
        return true;
    return status == 400 && (body_excerpt.find("context_length") != std::string::npos ||
                             body_excerpt.find("context length") != std::string::npos ||
                             body_excerpt.find("maximum context") != std::string::npos);
}

RateLimited::RateLimited(std::optional<std::chrono::milliseconds> after)
    : BackendError("rate limited" +
                   (after ? " (retry after " + std::to_string(after->count()) + " ms)"
                          : std::string())),
      retry_after(after) {}

FixtureMiss::FixtureMiss(std::string t, std::string_view why)
    : BackendError("fixture miss for tag '" + t + "': " + std::string(why)), tag(std::move(t)) {}

// ---- replay ---------------------------------------------------------------

std::unique_ptr<ReplayBackend> ReplayBackend::from_jsonl(std::string_view content,
                                                         std::string source) {
    auto ptr = std::make_unique<ReplayBackend>();
    ReplayBackend& b = *ptr;
    b.source_ = std::move(source);
    std::istringstream in{std::string(content)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const json rec = json::parse(line);
            Entry e;
            e.text = rec.at("text").get<std::string>();
            e.reusable = rec.value("reusable", false);
            e.finish_reason = finish_reason_from_string(rec.value("finish_reason", "stop"));
            b.add(rec.at("tag").get<std::string>(), std::move(e));
        } catch (const json::exception& ex) {
            throw std::runtime_error(b.source_ + ":" + std::to_string(lineno) +
                                     ": bad fixture record: " + ex.what());
        }
    }
    return ptr;
}

void ReplayBackend::add(std::string tag, Entry entry) {
    std::lock_guard lock(mu_);
    if (entries_.count(tag))
        throw std::runtime_error("duplicate fixture tag '" + tag + "'");
    entries_.emplace(std::move(tag), std::move(entry));
}

std::size_t ReplayBackend::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

CompletionResult ReplayBackend::complete(const CompletionRequest& req) {
    std::lock_guard lock(mu_);
    auto it = entries_.find(req.request_tag);
    if (it == entries_.end())
        throw FixtureMiss(req.request_tag);
    auto& used = consumed_[req.request_tag];
    if (used && !it->second.reusable)
        throw FixtureMiss(req.request_tag, "already consumed");
    used = true;
    return {it->second.text, it->second.finish_reason, std::nullopt};
}

std::unique_ptr<ReplayBackend> replay_from_fixture(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot open fixture " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ReplayBackend::from_jsonl(ss.str(), path.filename().string());
}

// ---- scripted -------------------------------------------------------------

ScriptedBackend::ScriptedBackend(Script script, std::string name)
    : script_(std::move(script)), name_(std::move(name)) {}

std::unique_ptr<ScriptedBackend> ScriptedBackend::constant(std::string text) {
    return std::make_unique<ScriptedBackend>(
        [text](const CompletionRequest&, std::size_t) {
            return CompletionResult{text, FinishReason::Stop, std::nullopt};
        },
        "scripted:constant");
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::sequence(std::vector<std::string> texts) {
    if (texts.empty())
        throw std::invalid_argument("scripted sequence needs at least one reply");
    return std::make_unique<ScriptedBackend>(
        [texts = std::move(texts)](const CompletionRequest&, std::size_t i) {
            return CompletionResult{texts[i % texts.size()], FinishReason::Stop, std::nullopt};
        },
        "scripted:sequence");
}

CompletionResult ScriptedBackend::complete(const CompletionRequest& req) {
    std::size_t call;
    {
        std::lock_guard lock(mu_);
        call = calls_++;
    }
    return script_(req, call);
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

// ---- retries --------------------------------------------------------------

RetryingBackend::RetryingBackend(std::unique_ptr<Backend> inner, RetryPolicy policy,
                                 Sleeper sleeper)
    : inner_(std::move(inner)), policy_(policy), sleep_(std::move(sleeper)) {
    if (!inner_)
        throw std::invalid_argument("retry wrapper needs an inner backend");
    if (policy_.max_attempts < 1)
        throw std::invalid_argument("max_attempts must be at least 1");
    if (!sleep_)
        sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

CompletionResult RetryingBackend::complete(const CompletionRequest& req) {
    auto backoff = policy_.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        {
            std::lock_guard lock(mu_);
            attempts_[req.request_tag] = attempt;
        }
        std::chrono::milliseconds wait = backoff;
        try {
            return inner_->complete(req);
        } catch (const RateLimited& e) {
            if (attempt >= policy_.max_attempts)
                throw;
            if (e.retry_after && *e.retry_after > wait)
                wait = *e.retry_after;
        } catch (const TransportError&) {
            if (attempt >= policy_.max_attempts)
                throw;
        } catch (const ApiError& e) {
            if (e.status < 500 || attempt >= policy_.max_attempts)
                throw;
        }
        sleep_(wait);
        backoff = std::chrono::milliseconds(
            static_cast<long long>(static_cast<double>(backoff.count()) * policy_.multiplier));
    }
}

int RetryingBackend::attempts(std::string_view tag) const {
    std::lock_guard lock(mu_);
    auto it = attempts_.find(tag);
    return it == attempts_.end() ? 0 : it->second;
}

std::unique_ptr<RetryingBackend> with_retries(std::unique_ptr<Backend> inner, RetryPolicy policy,
                                              Sleeper sleeper) {
    return std::make_unique<RetryingBackend>(std::move(inner), policy, std::move(sleeper));
}

// ---- configuration --------------------------------------------------------

std::string_view backend_kind_name(BackendKind k) {
    switch (k) {
    case BackendKind::Http: return "http";
    case BackendKind::Replay: return "replay";
    case BackendKind::Scripted: return "scripted";
    }
    return "replay";
}

BackendKind backend_kind_from_string(std::string_view s) {
    if (s == "http") return BackendKind::Http;
    if (s == "replay") return BackendKind::Replay;
    if (s == "scripted") return BackendKind::Scripted;
    throw ConfigError("unknown backend kind '" + std::string(s) + "'");
}

void BackendConfig::validate() const {
    if (retry.max_attempts < 1)
        throw ConfigError("retry.max_attempts must be >= 1");
    if (retry.initial_backoff.count() < 0 || retry.multiplier < 1.0)
        throw ConfigError("retry backoff must be >= 0 and multiplier >= 1");
    if (timeout.count() <= 0)
        throw ConfigError("timeout must be positive");
    if (max_parallel < 1)
        throw ConfigError("max_parallel must be >= 1");
    if (temperature && *temperature < 0)
        throw ConfigError("temperature must be >= 0");
    if (max_tokens && *max_tokens <= 0)
        throw ConfigError("max_tokens must be positive");
    if (kind == BackendKind::Http && base_url.empty())
        throw ConfigError("http backend needs base_url");
    if (kind == BackendKind::Replay && fixture.empty())
        throw ConfigError("replay backend needs a fixture path");
}

BackendConfig load_backend_config(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document.begin(), document.end());
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    if (!doc.is_object())
        throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known = {
        "kind", "base_url", "model", "api_key_env", "timeout_ms", "retry", "max_parallel",
        "style", "temperature", "max_tokens", "fixture", "scripted_text"};
    for (const auto& [key, _] : doc.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key '" + key + "'");

    BackendConfig cfg;
    try {
        if (doc.contains("kind"))
            cfg.kind = backend_kind_from_string(doc["kind"].get<std::string>());
        cfg.base_url = doc.value("base_url", cfg.base_url);
        cfg.model = doc.value("model", cfg.model);
        cfg.api_key_env = doc.value("api_key_env", cfg.api_key_env);
        cfg.timeout = std::chrono::milliseconds(doc.value("timeout_ms", cfg.timeout.count()));
        cfg.max_parallel = doc.value("max_parallel", cfg.max_parallel);
        if (doc.contains("retry")) {
            const auto& r = doc["retry"];
            cfg.retry.max_attempts = r.value("max_attempts", cfg.retry.max_attempts);
            cfg.retry.initial_backoff =
                std::chrono::milliseconds(r.value("initial_backoff_ms", cfg.retry.initial_backoff.count()));
            cfg.retry.multiplier = r.value("multiplier", cfg.retry.multiplier);
        }
        if (doc.contains("style")) {
            const auto s = doc["style"].get<std::string>();
            if (s == "chat")
                cfg.style = PromptStyle::Chat;
            else if (s == "completion")
                cfg.style = PromptStyle::Completion;
            else
                throw ConfigError("style must be 'chat' or 'completion'");
        }
        if (doc.contains("temperature") && !doc["temperature"].is_null())
            cfg.temperature = doc["temperature"].get<double>();
        if (doc.contains("max_tokens") && !doc["max_tokens"].is_null())
            cfg.max_tokens = doc["max_tokens"].get<int>();
        if (doc.contains("fixture"))
            cfg.fixture = doc["fixture"].get<std::string>();
        cfg.scripted_text = doc.value("scripted_text", std::string());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string serialize_backend_config(const BackendConfig& cfg) {
    json doc = {
        {"kind", backend_kind_name(cfg.kind)},
        {"base_url", cfg.base_url},
        {"model", cfg.model},
        {"api_key_env", cfg.api_key_env},
        {"timeout_ms", cfg.timeout.count()},
        {"retry",
         {{"max_attempts", cfg.retry.max_attempts},
          {"initial_backoff_ms", cfg.retry.initial_backoff.count()},
          {"multiplier", cfg.retry.multiplier}}},
        {"max_parallel", cfg.max_parallel},
        {"style", cfg.style == PromptStyle::Chat ? "chat" : "completion"},
        {"temperature", cfg.temperature ? json(*cfg.temperature) : json(nullptr)},
        {"max_tokens", cfg.max_tokens ? json(*cfg.max_tokens) : json(nullptr)},
    };
    if (!cfg.fixture.empty())
        doc["fixture"] = cfg.fixture.string();
    if (!cfg.scripted_text.empty())
        doc["scripted_text"] = cfg.scripted_text;
    return doc.dump(2) + "\n";
}

std::unique_ptr<Backend> make_backend(const BackendConfig& cfg, Sleeper sleeper) {
    cfg.validate();
    std::unique_ptr<Backend> inner;
    switch (cfg.kind) {
    case BackendKind::Replay:
        inner = replay_from_fixture(cfg.fixture);
        break;
    case BackendKind::Scripted:
        inner = ScriptedBackend::constant(cfg.scripted_text);
        break;
    case BackendKind::Http: {
        const char* key = std::getenv(cfg.api_key_env.c_str());
        if (!key || !*key)
            throw ConfigError("environment variable " + cfg.api_key_env + " is not set");
        inner = std::make_unique<HttpBackend>(cfg, key);
        break;
    }
    }
    return with_retries(std::move(inner), cfg.retry, std::move(sleeper));
}

} // namespace steer
