#include "helpers.hpp"

#include "steer/backend.hpp"

#include <doctest.h>
#include <json.hpp>

using namespace steer;
using namespace std::chrono_literals;

namespace {

CompletionRequest tagged(std::string tag) {
    CompletionRequest r;
    r.request_tag = std::move(tag);
    r.messages = {{Role::User, "hi"}};
    return r;
}

// Inner backend that throws a scripted sequence of errors before answering.
std::unique_ptr<ScriptedBackend> failing(std::vector<std::function<void()>> failures, std::string text = "ok") {
    auto shared = std::make_shared<std::vector<std::function<void()>>>(std::move(failures));
    return std::make_unique<ScriptedBackend>(
        [shared, text](const CompletionRequest&, std::size_t call) -> CompletionResult {
            if (call < shared->size())
                (*shared)[call]();
            return {text};
        });
}

} // namespace

TEST_CASE("replay backend") {
    SUBCASE("keyed lookup returns the exact text") {
        auto b = ReplayBackend::from_jsonl(R"({"tag": "ocean/E/batch0", "text": "5\n2\n5"})");
        CHECK(b->complete(tagged("ocean/E/batch0")).text == "5\n2\n5");
        CHECK(b->deterministic());
    }
    SUBCASE("unknown tag names the tag") {
        auto b = ReplayBackend::from_jsonl(R"({"tag": "a", "text": "x"})");
        try {
            b->complete(tagged("nope"));
            FAIL("expected FixtureMiss");
        } catch (const FixtureMiss& e) {
            CHECK(e.tag == "nope");
            CHECK(std::string(e.what()).find("nope") != std::string::npos);
        }
    }
    SUBCASE("tags are consumed once unless reusable") {
        auto b = ReplayBackend::from_jsonl("{\"tag\": \"a\", \"text\": \"x\"}\n"
                                           "{\"tag\": \"b\", \"text\": \"y\", \"reusable\": true}\n");
        CHECK(b->complete(tagged("a")).text == "x");
        CHECK_THROWS_AS(b->complete(tagged("a")), FixtureMiss);
        CHECK(b->complete(tagged("b")).text == "y");
        CHECK(b->complete(tagged("b")).text == "y");
    }
    SUBCASE("empty fixture misses everything") {
        auto b = ReplayBackend::from_jsonl("");
        CHECK(b->size() == 0);
        CHECK_THROWS_AS(b->complete(tagged("ocean/O")), FixtureMiss);
    }
    SUBCASE("bad records report the line") {
        try {
            ReplayBackend::from_jsonl("{\"tag\": \"a\", \"text\": \"x\"}\n{\"tag\": 3}\n", "f.jsonl");
            FAIL("expected error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find("f.jsonl:2") != std::string::npos);
        }
        CHECK_THROWS(ReplayBackend::from_jsonl("{\"tag\": \"a\", \"text\": \"x\"}\n{\"tag\": \"a\", \"text\": \"y\"}"));
    }
    SUBCASE("published survey fixture has one answer per condition") {
        auto b = replay_from_fixture(testing::data_dir() / "fixtures" / "ocean_published.jsonl");
        CHECK(b->size() == 5);
        for (const char* tag : {"ocean/O", "ocean/C", "ocean/E", "ocean/A", "ocean/N"}) {
            const auto text = b->complete(tagged(tag)).text;
            CHECK(std::count(text.begin(), text.end(), '\n') == 49);
        }
    }
    SUBCASE("published dialogue fixture holds 50 turns") {
        auto b = replay_from_fixture(testing::data_dir() / "fixtures" / "dialogue_gandhi_mandela.jsonl");
        CHECK(b->size() == 50);
        CHECK_FALSE(b->complete(tagged("dialogue/gandhi-mandela/0")).text.empty());
    }
    CHECK_THROWS(replay_from_fixture("/nonexistent/fixture.jsonl"));
}

TEST_CASE("scripted backend") {
    auto c = ScriptedBackend::constant("3");
    CHECK(c->complete(tagged("x")).text == "3");
    CHECK(c->complete(tagged("y")).text == "3");
    CHECK(c->calls() == 2);
    auto s = ScriptedBackend::sequence({"a", "b"});
    CHECK(s->complete(tagged("1")).text == "a");
    CHECK(s->complete(tagged("2")).text == "b");
    CHECK(s->complete(tagged("3")).text == "a");
}

TEST_CASE("retry policy") {
    std::vector<std::chrono::milliseconds> slept;
    Sleeper sleeper = [&](std::chrono::milliseconds d) { slept.push_back(d); };

    SUBCASE("two timeouts then success") {
        auto throw_timeout = [] { throw TransportError("timeout"); };
        RetryingBackend b(failing({throw_timeout, throw_timeout}), {3, 100ms, 2.0}, sleeper);
        CHECK(b.complete(tagged("t")).text == "ok");
        CHECK(b.attempts("t") == 3);
        REQUIRE(slept.size() == 2);
        CHECK(slept[0] == 100ms);
        CHECK(slept[1] == 200ms);
    }
    SUBCASE("401 is not retried") {
        RetryingBackend b(failing({[] { throw ApiError(401, "unauthorized"); }}), {3, 100ms, 2.0}, sleeper);
        try {
            b.complete(tagged("t"));
            FAIL("expected ApiError");
        } catch (const ApiError& e) {
            CHECK(e.status == 401);
        }
        CHECK(b.attempts("t") == 1);
        CHECK(slept.empty());
    }
    SUBCASE("persistent timeout exhausts attempts") {
        auto inner = std::make_unique<ScriptedBackend>(
            [](const CompletionRequest&, std::size_t) -> CompletionResult { throw TransportError("timeout"); });
        RetryingBackend b(std::move(inner), {2, 10ms, 2.0}, sleeper);
        CHECK_THROWS_AS(b.complete(tagged("t")), TransportError);
        CHECK(b.attempts("t") == 2);
    }
    SUBCASE("rate limit honours retry-after") {
        RetryingBackend b(failing({[] { throw RateLimited(750ms); }}), {3, 100ms, 2.0}, sleeper);
        CHECK(b.complete(tagged("t")).text == "ok");
        REQUIRE(slept.size() == 1);
        CHECK(slept[0] == 750ms);
    }
    SUBCASE("server errors are retried") {
        RetryingBackend b(failing({[] { throw ApiError(503, "busy"); }}), {3, 10ms, 2.0}, sleeper);
        CHECK(b.complete(tagged("t")).text == "ok");
        CHECK(b.attempts("t") == 2);
    }
    SUBCASE("fixture misses are not retried") {
        RetryingBackend b(ReplayBackend::from_jsonl(""), {3, 10ms, 2.0}, sleeper);
        CHECK_THROWS_AS(b.complete(tagged("t")), FixtureMiss);
        CHECK(b.attempts("t") == 1);
    }
}

TEST_CASE("context overflow classification") {
    CHECK(ApiError(413, "").is_context_overflow());
    CHECK(ApiError(400, R"({"error":{"code":"context_length_exceeded"}})").is_context_overflow());
    CHECK(ApiError(400, "This model's maximum context length is 4097 tokens").is_context_overflow());
    CHECK_FALSE(ApiError(400, "bad request").is_context_overflow());
    CHECK_FALSE(ApiError(500, "context_length").is_context_overflow());
}

TEST_CASE("backend config") {
    SUBCASE("defaults and round trip") {
        BackendConfig cfg = load_backend_config(R"({"kind": "http", "model": "m", "timeout_ms": 1500,
            "retry": {"max_attempts": 4, "initial_backoff_ms": 20, "multiplier": 3},
            "max_parallel": 2, "temperature": 0.5})");
        CHECK(cfg.kind == BackendKind::Http);
        CHECK(cfg.timeout == 1500ms);
        CHECK(cfg.retry.max_attempts == 4);
        CHECK(cfg.max_parallel == 2);
        CHECK(cfg.temperature == doctest::Approx(0.5));
        CHECK_FALSE(cfg.max_tokens.has_value());
        const BackendConfig back = load_backend_config(serialize_backend_config(cfg));
        CHECK(back.model == "m");
        CHECK(back.retry.initial_backoff == 20ms);
        CHECK(back.api_key_env == "OPENAI_API_KEY");
    }
    SUBCASE("unknown keys are rejected") {
        CHECK_THROWS_AS(load_backend_config(R"({"kind": "replay", "api_key": "sk-123"})"), ConfigError);
    }
    SUBCASE("invalid values") {
        CHECK_THROWS_AS(load_backend_config(R"({"kind": "carrier-pigeon"})"), ConfigError);
        CHECK_THROWS_AS(load_backend_config(R"({"kind": "http", "max_parallel": 0})"), ConfigError);
        CHECK_THROWS_AS(load_backend_config("{not json"), ConfigError);
    }
    SUBCASE("missing API key variable is a config error") {
        BackendConfig cfg;
        cfg.kind = BackendKind::Http;
        cfg.api_key_env = "STEER_TEST_SURELY_UNSET_VARIABLE";
        CHECK_THROWS_AS(make_backend(cfg), ConfigError);
    }
    SUBCASE("replay and scripted construction") {
        BackendConfig cfg;
        cfg.kind = BackendKind::Scripted;
        cfg.scripted_text = "4";
        auto b = make_backend(cfg);
        CHECK(b->complete(tagged("x")).text == "4");
        cfg.kind = BackendKind::Replay;
        cfg.fixture = testing::data_dir() / "fixtures" / "ocean_published.jsonl";
        CHECK(make_backend(cfg)->deterministic());
    }
}

TEST_CASE("chat wire format") {
    CompletionRequest req = tagged("t");
    req.model = "gpt-3.5-turbo";
    req.messages = {{Role::System, "sys"}, {Role::User, "hello"}};
    req.temperature = 0.7;
    const auto j = nlohmann::json::parse(encode_chat_request(req));
    CHECK(j["model"] == "gpt-3.5-turbo");
    CHECK(j["messages"].size() == 2);
    CHECK(j["messages"][0]["role"] == "system");
    CHECK(j["messages"][1]["content"] == "hello");
    CHECK(j["temperature"] == doctest::Approx(0.7));
    CHECK_FALSE(j.contains("max_tokens"));

    const auto res = decode_chat_response(R"({"choices": [{"index": 0,
        "message": {"role": "assistant", "content": "5\n4"}, "finish_reason": "length"}],
        "usage": {"prompt_tokens": 10, "completion_tokens": 3, "total_tokens": 13}})");
    CHECK(res.text == "5\n4");
    CHECK(res.finish_reason == FinishReason::Length);
    REQUIRE(res.usage.has_value());
    CHECK(res.usage->total_tokens == 13);
    CHECK_THROWS_AS(decode_chat_response(R"({"choices": []})"), BackendError);
    CHECK_THROWS_AS(decode_chat_response("<html>"), BackendError);
}

TEST_CASE("prompt flattening for completion models") {
    const MessageList flat = flatten_for_completion({{Role::System, "instr"}, {Role::User, "items"}});
    REQUIRE(flat.size() == 1);
    CHECK(flat[0].role == Role::User);
    CHECK(flat[0].content == "instr\n\nitems");
}
