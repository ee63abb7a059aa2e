#include "steer/backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <semaphore>

namespace steer {

using nlohmann::json;

std::string encode_chat_request(const CompletionRequest& req) {
    json messages = json::array();
    for (const auto& m : req.messages)
        messages.push_back({{"role", role_name(m.role)}, {"content", m.content}});
    json body = {{"model", req.model}, {"messages", messages}};
    if (req.temperature)
        body["temperature"] = *req.temperature;
    if (req.max_tokens)
        body["max_tokens"] = *req.max_tokens;
    return body.dump();
}

CompletionResult decode_chat_response(std::string_view body) {
    json doc;
    try {
        doc = json::parse(body.begin(), body.end());
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("malformed completion response: ") + e.what());
    }
    const json* choice = nullptr;
    if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty())
        choice = &doc["choices"][0];
    if (!choice || !choice->contains("message") || !(*choice)["message"].contains("content"))
        throw BackendError("completion response has no choices[0].message.content");

    CompletionResult out;
    const auto& content = (*choice)["message"]["content"];
    out.text = content.is_string() ? content.get<std::string>() : std::string();
    const auto reason = choice->value("finish_reason", json("stop"));
    out.finish_reason =
        reason.is_string() ? finish_reason_from_string(reason.get<std::string>()) : FinishReason::Other;
    if (doc.contains("usage") && doc["usage"].is_object()) {
        const auto& u = doc["usage"];
        out.usage = Usage{u.value("prompt_tokens", 0), u.value("completion_tokens", 0),
                          u.value("total_tokens", 0)};
    }
    return out;
}

namespace {

// "https://host:port/v1" -> ("https://host:port", "/v1")
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("base_url must include a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return {url, ""};
    std::string path = url.substr(path_start);
    while (!path.empty() && path.back() == '/')
        path.pop_back();
    return {url.substr(0, path_start), path};
}

std::string excerpt(const std::string& body, std::size_t limit = 512) {
    return body.size() <= limit ? body : body.substr(0, limit) + "...";
}

std::optional<std::chrono::milliseconds> parse_retry_after(const httplib::Result& res) {
    if (!res->has_header("Retry-After"))
        return std::nullopt;
    try {
        const double seconds = std::stod(res->get_header_value("Retry-After"));
        return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
    } catch (const std::exception&) {
        return std::nullopt;  // HTTP-date form is not supported
    }
}

} // namespace

struct HttpBackend::Endpoint {
    explicit Endpoint(std::ptrdiff_t slots) : gate(slots) {}
    std::string origin;
    std::string path;
    std::counting_semaphore<> gate;
};

HttpBackend::HttpBackend(BackendConfig cfg, std::string api_key)
    : cfg_(std::move(cfg)), api_key_(std::move(api_key)) {
    cfg_.validate();
    endpoint_ = std::make_unique<Endpoint>(static_cast<std::ptrdiff_t>(cfg_.max_parallel));
    auto [origin, prefix] = split_base_url(cfg_.base_url);
    endpoint_->origin = origin;
    endpoint_->path = prefix + "/chat/completions";
}

HttpBackend::~HttpBackend() = default;

std::string HttpBackend::identity() const { return "http:" + cfg_.base_url + " model=" + cfg_.model; }

CompletionResult HttpBackend::complete(const CompletionRequest& req) {
    struct Slot {
        std::counting_semaphore<>& s;
        explicit Slot(std::counting_semaphore<>& s) : s(s) { s.acquire(); }
        ~Slot() { s.release(); }
    } slot(endpoint_->gate);

    httplib::Client client(endpoint_->origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    CompletionRequest sent = req;
    if (sent.model.empty())
        sent.model = cfg_.model;
    httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
    auto res = client.Post(endpoint_->path, headers, encode_chat_request(sent), "application/json");
    if (!res)
        throw TransportError("POST " + endpoint_->origin + endpoint_->path + ": " +
                             httplib::to_string(res.error()));
    if (res->status == 429)
        throw RateLimited(parse_retry_after(res));
    if (res->status < 200 || res->status >= 300)
        throw ApiError(res->status, excerpt(res->body));
    return decode_chat_response(res->body);
}

} // namespace steer
