// HTTP backend against an in-process loopback server.

#include "steer/backend.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <thread>

using namespace steer;
using namespace std::chrono_literals;

namespace {

class LoopbackServer {
public:
    explicit LoopbackServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LoopbackServer() {
        server_.stop();
        thread_.join();
    }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string reply(const std::string& text) {
    return nlohmann::json{{"choices", {{{"index", 0},
                                        {"message", {{"role", "assistant"}, {"content", text}}},
                                        {"finish_reason", "stop"}}}}}
        .dump();
}

BackendConfig config_for(const LoopbackServer& s) {
    BackendConfig cfg;
    cfg.kind = BackendKind::Http;
    cfg.base_url = s.base_url();
    cfg.model = "test-model";
    cfg.timeout = 5000ms;
    return cfg;
}

CompletionRequest request() {
    CompletionRequest r;
    r.request_tag = "ocean/O";
    r.messages = {{Role::System, "be open"}, {Role::User, "1. item"}};
    return r;
}

} // namespace

TEST_CASE("http backend sends bearer auth and the chat body") {
    std::string auth, model, first_role;
    LoopbackServer server([&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        const auto body = nlohmann::json::parse(req.body);
        model = body["model"];
        first_role = body["messages"][0]["role"];
        res.set_content(reply("5\n4\n3"), "application/json");
    });
    HttpBackend b(config_for(server), "sk-test");
    CHECK(b.complete(request()).text == "5\n4\n3");
    CHECK(auth == "Bearer sk-test");
    CHECK(model == "test-model");
    CHECK(first_role == "system");
    CHECK_FALSE(b.deterministic());
}

TEST_CASE("http status mapping") {
    SUBCASE("429 with Retry-After") {
        LoopbackServer server([](const httplib::Request&, httplib::Response& res) {
            res.status = 429;
            res.set_header("Retry-After", "2");
            res.set_content("slow down", "text/plain");
        });
        HttpBackend b(config_for(server), "k");
        try {
            b.complete(request());
            FAIL("expected RateLimited");
        } catch (const RateLimited& e) {
            REQUIRE(e.retry_after.has_value());
            CHECK(*e.retry_after == 2000ms);
        }
    }
    SUBCASE("401") {
        LoopbackServer server([](const httplib::Request&, httplib::Response& res) {
            res.status = 401;
            res.set_content(R"({"error": "bad key"})", "application/json");
        });
        HttpBackend b(config_for(server), "k");
        try {
            b.complete(request());
            FAIL("expected ApiError");
        } catch (const ApiError& e) {
            CHECK(e.status == 401);
            CHECK(e.body_excerpt.find("bad key") != std::string::npos);
        }
    }
    SUBCASE("context overflow") {
        LoopbackServer server([](const httplib::Request&, httplib::Response& res) {
            res.status = 400;
            res.set_content(R"({"error": {"code": "context_length_exceeded"}})", "application/json");
        });
        HttpBackend b(config_for(server), "k");
        try {
            b.complete(request());
            FAIL("expected ApiError");
        } catch (const ApiError& e) {
            CHECK(e.is_context_overflow());
        }
    }
}

TEST_CASE("retries over http: 500 then success") {
    std::atomic<int> hits{0};
    LoopbackServer server([&](const httplib::Request&, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 500;
            res.set_content("oops", "text/plain");
            return;
        }
        res.set_content(reply("ok"), "application/json");
    });
    RetryingBackend b(std::make_unique<HttpBackend>(config_for(server), "k"), {3, 1ms, 2.0},
                      [](std::chrono::milliseconds) {});
    CHECK(b.complete(request()).text == "ok");
    CHECK(hits == 2);
    CHECK(b.attempts("ocean/O") == 2);
}

TEST_CASE("refused connection is a transport error") {
    BackendConfig cfg;
    cfg.kind = BackendKind::Http;
    cfg.base_url = "http://127.0.0.1:9/v1";
    cfg.timeout = 1000ms;
    HttpBackend b(cfg, "k");
    CHECK_THROWS_AS(b.complete(request()), TransportError);
}

TEST_CASE("max_parallel bounds concurrent requests") {
    std::atomic<int> inflight{0}, peak{0};
    LoopbackServer server([&](const httplib::Request&, httplib::Response& res) {
        const int now = ++inflight;
        int prev = peak.load();
        while (now > prev && !peak.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(30ms);
        --inflight;
        res.set_content(reply("1"), "application/json");
    });
    BackendConfig cfg = config_for(server);
    cfg.max_parallel = 2;
    HttpBackend b(cfg, "k");
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i)
        threads.emplace_back([&] { b.complete(request()); });
    for (auto& t : threads)
        t.join();
    CHECK(peak.load() <= 2);
    CHECK(peak.load() >= 1);
}
