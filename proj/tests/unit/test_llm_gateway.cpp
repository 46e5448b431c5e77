#include <gtest/gtest.h>

#include <atomic>

#include "http_stub.hpp"
#include "recexplain/error.hpp"
#include "recexplain/llm_gateway.hpp"
#include "recexplain/util.hpp"
#include "test_support.hpp"

using namespace recexplain;
using namespace std::chrono_literals;

namespace {

// Throws the queued errors in order, then answers "ok".
class QueueProvider : public LlmProvider {
public:
    std::vector<TransportError> failures;
    std::atomic<int> calls{0};
    std::string complete(const CompletionRequest&) override {
        const int n = calls++;
        if (n < static_cast<int>(failures.size())) throw failures[static_cast<std::size_t>(n)];
        return "ok";
    }
};

GatewayOptions fast_options(std::vector<std::chrono::milliseconds>* sleeps) {
    GatewayOptions options;
    options.sleep = [sleeps](std::chrono::milliseconds d) { sleeps->push_back(d); };
    return options;
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error raised";
    return ErrorCode::config;
}

}  // namespace

TEST(GenerationParams, DefaultsAndValidation) {
    const GenerationParams p;
    EXPECT_DOUBLE_EQ(p.temperature, 0.7);
    EXPECT_DOUBLE_EQ(p.top_p, 0.6);
    EXPECT_EQ(p.max_tokens, 256);
    EXPECT_NO_THROW(p.validate());
    auto bad = [](auto mutate) {
        GenerationParams q;
        mutate(q);
        return code_of([&] { q.validate(); });
    };
    EXPECT_EQ(bad([](auto& q) { q.temperature = -0.1; }), ErrorCode::contract);
    EXPECT_EQ(bad([](auto& q) { q.top_p = 0.0; }), ErrorCode::contract);
    EXPECT_EQ(bad([](auto& q) { q.top_p = 1.01; }), ErrorCode::contract);
    EXPECT_EQ(bad([](auto& q) { q.max_tokens = 0; }), ErrorCode::contract);
    GenerationParams edge;
    edge.temperature = 0.0;
    edge.top_p = 1.0;
    EXPECT_NO_THROW(edge.validate());
}

TEST(GenerationParams, JsonRoundTrip) {
    GenerationParams p;
    p.stop_sequences = {"\nMovie:"};
    p.seed = 11;
    EXPECT_EQ(params_from_json(nlohmann::json::parse(to_json(p).dump())), p);
}

TEST(ScriptedProvider, FirstMatchingRuleWins) {
    auto provider = make_scripted_provider(script_from_json(nlohmann::json::parse(R"([
        {"match": "contains", "pattern": "Step 2 answer:", "also_contains": ["Title: Heat\n"], "response": "heat-2"},
        {"match": "contains", "pattern": "Step 2 answer:", "response": "generic-2"},
        {"match": "prefix", "pattern": "List", "response": "list"},
        {"match": "equals", "pattern": "exact", "response": "exact!"},
        {"match": "regex", "pattern": "^Movie: [A-Z]", "response": "regex"},
        {"match": "sha256", "pattern": "BA7816BF8F01CFEA414140DE5DAE2223B00361A396177A9CB410FF61F20015AD", "response": "abc"}
    ])")));
    auto ask = [&](const std::string& prompt) { return provider->complete({"m", prompt, {}}); };
    EXPECT_EQ(ask("Title: Heat\nStep 2 answer:"), "heat-2");
    EXPECT_EQ(ask("Title: Casino\nStep 2 answer:"), "generic-2");
    EXPECT_EQ(ask("List the aspects"), "list");
    EXPECT_EQ(ask("exact"), "exact!");
    EXPECT_EQ(ask("Movie: Heat"), "regex");
    EXPECT_EQ(ask("abc"), "abc");
    try {
        ask(std::string(100, 'z'));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::no_script);
        EXPECT_NE(std::string(e.what()).find(std::string(80, 'z') + "\""), std::string::npos);
        EXPECT_EQ(std::string(e.what()).find(std::string(81, 'z')), std::string::npos);
    }
    EXPECT_EQ(provider->calls(), 7u);
}

TEST(ScriptedProvider, MalformedScripts) {
    EXPECT_EQ(code_of([] { script_from_json(nlohmann::json::object()); }), ErrorCode::config);
    EXPECT_EQ(code_of([] { script_from_json(nlohmann::json::parse(R"([{"match":"fuzzy","pattern":"a","response":"b"}])")); }),
              ErrorCode::config);
    EXPECT_EQ(code_of([] { script_from_json(nlohmann::json::parse(R"([{"pattern":"a"}])")); }), ErrorCode::config);
    EXPECT_EQ(code_of([] { ScriptedProvider({{MatchKind::regex, "(", "x", {}}}); }), ErrorCode::config);
}

TEST(ScriptedProvider, FixtureScriptLoads) {
    const auto rules = load_script(testsupport::fixtures() / "llm_script.json");
    EXPECT_GE(rules.size(), 13u);
}

TEST(Gateway, RejectsBeforeCallingBackend) {
    auto provider = std::make_shared<QueueProvider>();
    Gateway gateway(provider);
    EXPECT_EQ(code_of([&] { gateway.complete("  ", {}); }), ErrorCode::contract);
    GenerationParams bad;
    bad.top_p = 2.0;
    EXPECT_EQ(code_of([&] { gateway.complete("hello", bad); }), ErrorCode::contract);
    EXPECT_EQ(provider->calls.load(), 0);
    EXPECT_EQ(gateway.audit().count(), 0u);
}

TEST(Gateway, RetriesTransportFailuresWithBackoff) {
    auto provider = std::make_shared<QueueProvider>();
    provider->failures = {TransportError("timeout", true), TransportError("503", true, 1, 503)};
    std::vector<std::chrono::milliseconds> sleeps;
    Gateway gateway(provider, nullptr, fast_options(&sleeps));
    const auto record = gateway.complete("hello", {});
    EXPECT_EQ(record.output, "ok");
    EXPECT_EQ(record.model_id, "Falcon-40b");
    EXPECT_EQ(provider->calls.load(), 3);
    EXPECT_EQ(sleeps, (std::vector<std::chrono::milliseconds>{500ms, 1000ms}));
    EXPECT_EQ(gateway.calls(), 1u);
    ASSERT_EQ(gateway.audit().count(), 1u);
    EXPECT_EQ(gateway.audit().records()[0].prompt, "hello");
    EXPECT_EQ(record.timestamp.size(), std::string("2026-01-01T00:00:00.000Z").size());
}

TEST(Gateway, GivesUpAfterThreeAttempts) {
    auto provider = std::make_shared<QueueProvider>();
    provider->failures = {TransportError("a", true), TransportError("b", true), TransportError("c", true),
                          TransportError("d", true)};
    std::vector<std::chrono::milliseconds> sleeps;
    Gateway gateway(provider, nullptr, fast_options(&sleeps));
    try {
        gateway.complete("hello", {});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_EQ(e.attempts(), 3);
        EXPECT_EQ(e.code(), ErrorCode::transport);
    }
    EXPECT_EQ(provider->calls.load(), 3);
    EXPECT_EQ(gateway.audit().count(), 0u);
}

TEST(Gateway, ContractFailuresAreNotRetried) {
    auto provider = std::make_shared<QueueProvider>();
    provider->failures = {TransportError("bad request", false, 1, 400)};
    std::vector<std::chrono::milliseconds> sleeps;
    Gateway gateway(provider, nullptr, fast_options(&sleeps));
    EXPECT_EQ(code_of([&] { gateway.complete("hello", {}); }), ErrorCode::contract);
    EXPECT_EQ(provider->calls.load(), 1);
    EXPECT_TRUE(sleeps.empty());
}

TEST(AuditLog, WritesOneJsonLinePerCompletion) {
    testsupport::TempDir dir;
    auto audit = std::make_shared<AuditLog>(dir / "audit.jsonl");
    Gateway gateway(make_scripted_provider({{MatchKind::contains, "", "reply", {}}}), audit);
    gateway.complete("first", {});
    gateway.complete("second", {});
    const auto lines = read_lines(dir / "audit.jsonl");
    ASSERT_EQ(lines.size(), 2u);
    const auto j = nlohmann::json::parse(lines[1]);
    EXPECT_EQ(j.at("prompt"), "second");
    EXPECT_EQ(j.at("output"), "reply");
    EXPECT_EQ(j.at("model_id"), "Falcon-40b");
    EXPECT_DOUBLE_EQ(j.at("params").at("temperature").get<double>(), 0.7);
    EXPECT_TRUE(j.at("latency_ms").is_number());
}

TEST(HttpLlmProvider, WireContractAgainstStubServer) {
    testsupport::HttpStub stub;
    std::atomic<int> flaky_calls{0};
    std::string seen_auth;
    nlohmann::json seen_body;
    stub.server().Post("/v1/complete", [&](const httplib::Request& req, httplib::Response& res) {
        seen_auth = req.get_header_value("Authorization");
        seen_body = nlohmann::json::parse(req.body);
        res.set_content(R"({"text": "generated"})", "application/json");
    });
    stub.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
        res.status = ++flaky_calls < 3 ? 503 : 200;
        res.set_content(R"({"text": "finally"})", "application/json");
    });
    stub.server().Post("/reject", [](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("nope", "text/plain");
    });
    stub.server().Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("<html>", "text/html");
    });
    stub.start();

    GenerationParams params;
    params.stop_sequences = {"Step 2 answer:"};
    HttpLlmProvider provider({stub.url("/v1/complete"), "secret", 5s});
    EXPECT_EQ(provider.complete({"Falcon-40b", "Why?", params}), "generated");
    EXPECT_EQ(seen_auth, "Bearer secret");
    EXPECT_EQ(seen_body.at("model_id"), "Falcon-40b");
    EXPECT_EQ(seen_body.at("prompt"), "Why?");
    EXPECT_DOUBLE_EQ(seen_body.at("temperature").get<double>(), 0.7);
    EXPECT_DOUBLE_EQ(seen_body.at("top_p").get<double>(), 0.6);
    EXPECT_EQ(seen_body.at("max_tokens"), 256);
    EXPECT_EQ(seen_body.at("stop"), nlohmann::json::array({"Step 2 answer:"}));

    std::vector<std::chrono::milliseconds> sleeps;
    Gateway gateway(std::make_shared<HttpLlmProvider>(HttpEndpoint{stub.url("/flaky"), "", 5s}), nullptr,
                    fast_options(&sleeps));
    EXPECT_EQ(gateway.complete("retry me", {}).output, "finally");
    EXPECT_EQ(flaky_calls.load(), 3);

    HttpLlmProvider reject({stub.url("/reject"), "", 5s});
    try {
        reject.complete({"m", "p", {}});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_FALSE(e.retryable());
        EXPECT_EQ(e.status(), 400);
    }
    HttpLlmProvider garbage({stub.url("/garbage"), "", 5s});
    EXPECT_EQ(code_of([&] { garbage.complete({"m", "p", {}}); }), ErrorCode::contract);

    const int port = stub.port();
    stub.stop();
    HttpLlmProvider down({"http://127.0.0.1:" + std::to_string(port) + "/v1", "", 1s});
    try {
        down.complete({"m", "p", {}});
        FAIL();
    } catch (const TransportError& e) {
        EXPECT_TRUE(e.retryable());
    }
    EXPECT_EQ(code_of([] { HttpLlmProvider({"ftp://x", "", 1s}).complete({"m", "p", {}}); }), ErrorCode::config);
}
