#include "doctest.h"

#include <algorithm>
#include <mutex>

#include "absaforge/llm_gateway.hpp"
#include "support.hpp"

using namespace absaforge;
using nlohmann::json;

namespace {

ChatRequest hello(std::string text = "hello") {
    ChatRequest r;
    r.system = "be brief";
    r.messages.push_back({Role::user, std::move(text)});
    r.temperature = 0.0;
    return r;
}

BackendConfig live(const testing::StubServer& stub, ApiFlavor flavor = ApiFlavor::ollama_chat) {
    BackendConfig c;
    c.endpoint_url = stub.url();
    c.api_flavor = flavor;
    c.model = "test-model";
    c.timeout_ms = 2000;
    c.max_retries = 3;
    c.backoff_base_ms = 1;
    return c;
}

std::string ollama_reply(const std::string& content) {
    return json{{"message", {{"role", "assistant"}, {"content", content}}}, {"done_reason", "stop"},
                {"prompt_eval_count", 5}, {"eval_count", 2}}
        .dump();
}

}  // namespace

TEST_CASE("request validation") {
    ChatRequest r;
    CHECK_THROWS_AS(r.validate(), InvalidArgument);
    r = hello();
    CHECK_NOTHROW(r.validate());
    r.temperature = -0.1;
    CHECK_THROWS_AS(r.validate(), InvalidArgument);
    r = hello();
    r.max_tokens = 0;
    CHECK_THROWS_AS(r.validate(), InvalidArgument);
}

TEST_CASE("fingerprints cover the system prompt and messages only") {
    auto a = hello();
    auto b = hello();
    b.temperature = 0.8;
    b.model = "other";
    CHECK(fingerprint(a) == fingerprint(b));
    CHECK(fingerprint(a).size() == 16);
    b.system = "be verbose";
    CHECK(fingerprint(a) != fingerprint(b));
    CHECK(fingerprint(a) != fingerprint(hello("hello!")));
}

TEST_CASE("backend config validation") {
    BackendConfig c;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.endpoint_url = "https://example.com";
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.endpoint_url = "http://localhost:11434";
    CHECK_NOTHROW(c.validate());
    c.timeout_ms = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);

    BackendConfig s;
    s.api_flavor = ApiFlavor::scripted;
    CHECK_THROWS_AS(s.validate(), InvalidArgument);
    CHECK_THROWS_AS(record_transcript(s, "/tmp/x.jsonl"), InvalidArgument);

    CHECK(parse_api_flavor("openai") == ApiFlavor::openai_compatible);
    CHECK_THROWS_AS(parse_api_flavor("grpc"), InvalidArgument);
}

TEST_CASE("environment overlay") {
    ::setenv("ABSA_FORGE_ENDPOINT", "http://10.0.0.2:8000", 1);
    ::setenv("ABSA_FORGE_MODEL", "qwen-test", 1);
    ::setenv("ABSA_FORGE_TIMEOUT_MS", "1234", 1);
    auto c = BackendConfig::from_env();
    CHECK(c.endpoint_url == "http://10.0.0.2:8000");
    CHECK(c.model == "qwen-test");
    CHECK(c.timeout_ms == 1234);
    ::setenv("ABSA_FORGE_TIMEOUT_MS", "soon", 1);
    CHECK_THROWS_AS(BackendConfig::from_env(), InvalidArgument);
    ::unsetenv("ABSA_FORGE_ENDPOINT");
    ::unsetenv("ABSA_FORGE_MODEL");
    ::unsetenv("ABSA_FORGE_TIMEOUT_MS");
    CHECK(BackendConfig::from_env().endpoint_url == "http://localhost:11434");
}

TEST_CASE("scripted backend in sequence mode") {
    auto gw = testing::scripted_gateway({"one", "two"});
    CHECK(gw->chat(hello()).content == "one");
    CHECK(gw->chat(hello()).content == "two");
    try {
        gw->chat(hello());
        FAIL("expected exhaustion");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::script_exhausted);
    }
    CHECK(gw->calls() == 3);
}

TEST_CASE("scripted backend in fingerprint mode") {
    std::vector<ScriptedBackend::Entry> es(3);
    es[0].fingerprint = fingerprint(hello("a"));
    es[0].response.content = "A1";
    es[1].fingerprint = fingerprint(hello("b"));
    es[1].response.content = "B";
    es[2].fingerprint = fingerprint(hello("a"));
    es[2].response.content = "A2";
    ScriptedBackend backend(es, ScriptMode::fingerprint);
    CHECK(backend.complete(hello("b")).content == "B");
    CHECK(backend.complete(hello("a")).content == "A1");
    CHECK(backend.complete(hello("a")).content == "A2");
    CHECK(backend.remaining() == 0);

    ScriptedBackend other(es, ScriptMode::fingerprint);
    try {
        other.complete(hello("c"));
        FAIL("expected miss");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::fingerprint_miss);
    }

    es[1].fingerprint.clear();
    CHECK_THROWS_AS(ScriptedBackend(es, ScriptMode::fingerprint), InvalidArgument);
}

TEST_CASE("transcript files") {
    testing::TempDir tmp;
    testing::write_file(tmp / "t.jsonl",
                        "{\"content\": \"plain\"}\n\n"
                        "{\"response\": {\"content\": \"nested\", \"finish_reason\": \"length\"}}\n");
    auto b = ScriptedBackend::from_file(tmp / "t.jsonl", ScriptMode::sequence);
    CHECK(b.remaining() == 2);
    CHECK(b.complete(hello()).content == "plain");
    auto r = b.complete(hello());
    CHECK(r.content == "nested");
    CHECK(r.finish_reason == FinishReason::length);

    testing::write_file(tmp / "bad.jsonl", "{\"content\": \"ok\"}\n{\"nope\": 1}\n");
    CHECK_THROWS_WITH_AS(ScriptedBackend::from_file(tmp / "bad.jsonl", ScriptMode::sequence),
                         doctest::Contains(":2:"), FormatError);
    CHECK_THROWS_AS(ScriptedBackend::from_file(tmp / "missing.jsonl", ScriptMode::sequence), IoError);
}

TEST_CASE("call budget") {
    auto gw = testing::scripted_gateway({"a", "b", "c"});
    gw->set_call_budget(2);
    gw->chat(hello());
    gw->chat(hello());
    try {
        gw->chat(hello());
        FAIL("expected budget error");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::budget_exhausted);
    }
}

TEST_CASE("call scopes count their own calls") {
    auto gw = testing::scripted_gateway({"a", "b", "c"});
    CallScope s1(*gw);
    CallScope s2(*gw);
    s1.chat(hello());
    s2.chat(hello());
    s1.chat(hello());
    CHECK(s1.calls() == 2);
    CHECK(s2.calls() == 1);
    CHECK(gw->calls() == 3);
}

TEST_CASE("transient server errors are retried") {
    testing::StubServer stub;
    std::mutex m;
    int hits = 0;
    json last_body;
    std::string last_path;
    stub.server.Post(R"(/.*)", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(m);
        ++hits;
        last_path = req.path;
        last_body = json::parse(req.body);
        if (hits <= 2) {
            res.status = 503;
            res.set_content("busy", "text/plain");
            return;
        }
        res.set_content(ollama_reply("fine"), "application/json");
    });
    stub.start();

    Gateway gw(live(stub));
    auto r = gw.chat(hello());
    CHECK(r.content == "fine");
    CHECK(r.attempts == 3);
    CHECK(hits == 3);
    REQUIRE(r.token_counts);
    CHECK(r.token_counts->completion == 2);
    CHECK(last_path == "/api/chat");
    CHECK(last_body["model"] == "test-model");
    CHECK(last_body["stream"] == false);
    CHECK(last_body["options"]["temperature"] == 0.0);
    REQUIRE(last_body["messages"].size() == 2);
    CHECK(last_body["messages"][0]["role"] == "system");
    CHECK(last_body["messages"][1]["content"] == "hello");
}

TEST_CASE("retries run out") {
    testing::StubServer stub;
    int hits = 0;
    stub.server.Post(R"(/.*)", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 429;
    });
    stub.start();
    auto cfg = live(stub);
    cfg.max_retries = 1;
    Gateway gw(cfg);
    try {
        gw.chat(hello());
        FAIL("expected failure");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::retries_exhausted);
        CHECK(std::string(e.what()).find("HTTP 429") != std::string::npos);
    }
    CHECK(hits == 2);
}

TEST_CASE("client errors are not retried") {
    testing::StubServer stub;
    int hits = 0;
    stub.server.Post(R"(/.*)", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 404;
        res.set_content("model not found", "text/plain");
    });
    stub.start();
    Gateway gw(live(stub));
    try {
        gw.chat(hello());
        FAIL("expected failure");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::http_status);
        CHECK(std::string(e.what()).find("model not found") != std::string::npos);
    }
    CHECK(hits == 1);
}

TEST_CASE("malformed replies and refused connections") {
    testing::StubServer stub;
    stub.server.Post(R"(/.*)", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"unexpected\": true}", "application/json");
    });
    stub.start();
    Gateway gw(live(stub));
    try {
        gw.chat(hello());
        FAIL("expected failure");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::malformed_reply);
    }

    BackendConfig down;
    down.endpoint_url = "http://127.0.0.1:" + std::to_string(testing::closed_port());
    down.max_retries = 1;
    down.backoff_base_ms = 1;
    down.timeout_ms = 500;
    Gateway dead(down);
    try {
        dead.chat(hello());
        FAIL("expected failure");
    } catch (const GatewayError& e) {
        CHECK(e.kind() == GatewayError::Kind::retries_exhausted);
        CHECK(std::string(e.what()).find("transport") != std::string::npos);
    }
}

TEST_CASE("openai-compatible flavor") {
    testing::StubServer stub;
    json body;
    std::string path, auth;
    stub.server.Post(R"(/.*)", [&](const httplib::Request& req, httplib::Response& res) {
        body = json::parse(req.body);
        path = req.path;
        auth = req.get_header_value("Authorization");
        res.set_content(json{{"choices", {{{"message", {{"content", "hi"}}}, {"finish_reason", "length"}}}},
                             {"usage", {{"prompt_tokens", 7}, {"completion_tokens", 1}}}}
                            .dump(),
                        "application/json");
    });
    stub.start();
    auto cfg = live(stub, ApiFlavor::openai_compatible);
    cfg.endpoint_url = stub.url("/v1/");
    cfg.bearer_token = "secret";
    Gateway gw(cfg);
    auto req = hello();
    req.seed = 3;
    req.max_tokens = 40;
    auto r = gw.chat(req);
    CHECK(r.content == "hi");
    CHECK(r.finish_reason == FinishReason::length);
    CHECK(r.token_counts->prompt == 7);
    CHECK(path == "/v1/chat/completions");
    CHECK(auth == "Bearer secret");
    CHECK(body["temperature"] == 0.0);
    CHECK(body["seed"] == 3);
    CHECK(body["max_tokens"] == 40);
}

TEST_CASE("recorded transcripts replay the same replies") {
    testing::StubServer stub;
    stub.server.Post(R"(/.*)", [&](const httplib::Request& req, httplib::Response& res) {
        const auto j = json::parse(req.body);
        res.set_content(ollama_reply("echo: " + j["messages"].back()["content"].get<std::string>()), "application/json");
    });
    stub.start();

    testing::TempDir tmp;
    const auto transcript = tmp / "rec.jsonl";
    std::vector<std::string> live_replies;
    {
        Gateway gw(record_transcript(live(stub), transcript));
        for (auto msg : {"x", "y", "x"}) live_replies.push_back(gw.chat(hello(msg)).content);
    }
    const auto lines = testing::read_file(transcript);
    CHECK(std::count(lines.begin(), lines.end(), '\n') == 3);
    const auto first = json::parse(lines.substr(0, lines.find('\n')));
    CHECK(first["request"]["model"] == "test-model");
    CHECK(first["fingerprint"] == fingerprint(hello("x")));

    for (auto mode : {ScriptMode::sequence, ScriptMode::fingerprint}) {
        BackendConfig replay;
        replay.api_flavor = ApiFlavor::scripted;
        replay.script_path = transcript;
        replay.script_mode = mode;
        Gateway gw(replay);
        std::vector<std::string> replayed;
        for (auto msg : {"x", "y", "x"}) replayed.push_back(gw.chat(hello(msg)).content);
        CHECK(replayed == live_replies);
    }

    CHECK_THROWS_AS(record_transcript(live(stub), tmp / "no/such/dir/rec.jsonl"), IoError);
}
