#include "doctest.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "absaforge/pipeline.hpp"
#include "support.hpp"

using namespace absaforge;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeed = 11927;

const std::string kGingerReply =
    "The Ginger House is a cozy spot that really warms the heart!\nTerms=['Ginger House']\nPolarity=['positive']";

RunConfig scripted(Method method, const std::filesystem::path& script, std::size_t count) {
    RunConfig c;
    c.method = method;
    c.train_path = testing::fixture("rest16_train.jsonl");
    c.count = count;
    c.seed = kSeed;
    c.backend.api_flavor = ApiFlavor::scripted;
    c.backend.script_path = script;
    return c;
}

std::filesystem::path write_script(const testing::TempDir& tmp, const std::vector<std::string>& replies) {
    std::string body;
    for (const auto& r : replies) body += json{{"content", r}}.dump() + "\n";
    const auto p = tmp / "script.jsonl";
    testing::write_file(p, body);
    return p;
}

std::vector<json> policies(const std::filesystem::path& dir, Method method, std::size_t n) {
    std::vector<json> out;
    for (std::size_t i = 1; i <= n; ++i) {
        char name[64];
        std::snprintf(name, sizeof name, "%s-%06zu-1.jsonl", std::string(to_string(method)).c_str(), i);
        std::ifstream in(dir / name);
        REQUIRE_MESSAGE(in, name);
        std::string line;
        while (std::getline(in, line)) {
            auto j = json::parse(line);
            if (j["type"] == "policy") out.push_back({j["terms"], j["polarities"]});
        }
    }
    return out;
}

}  // namespace

TEST_CASE("method names") {
    CHECK(parse_method("Agentic") == Method::agentic);
    CHECK(to_string(Method::prompting) == "prompting");
    CHECK_THROWS_AS(parse_method("manual"), InvalidArgument);
}

TEST_CASE("run configuration") {
    RunConfig c;
    c.train_path = "x.jsonl";
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.ratio = 0.5;
    CHECK_NOTHROW(c.validate());
    CHECK(c.target(37) == 19);
    CHECK(c.target(8) == 4);
    c.ratio = 1;
    CHECK(c.target(8) == 8);
    c.ratio = 0.29;
    CHECK(c.target(100) == 29);
    c.count = 3;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.ratio.reset();
    CHECK(c.target(1000) == 3);
    c.workers = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c.workers = 2;
    c.max_attempts_per_sample = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);

    RunConfig r;
    r.method = Method::prompting;
    r.task = Task::ATE;
    r.train_path = "data/rest16_train.jsonl";
    r.ratio = 2;
    r.seed = 42;
    r.evaluator_mode = EvaluatorMode::react;
    r.sampling = SamplingMode::frequency_weighted;
    r.output_path = "runs/a.jsonl";
    const auto back = RunConfig::from_json(json::parse(r.to_json().dump()));
    CHECK(back.to_json() == r.to_json());
    CHECK_THROWS_AS(RunConfig::from_json(json{{"method", "agentic"}}), FormatError);
}

TEST_CASE("stats table") {
    RunStats s;
    s.requested = 2;
    s.accepted = 2;
    s.rejected_semantic = 1;
    CHECK(s.attempts() == 3);
    const auto table = s.to_table();
    CHECK(table.find("accepted" + std::string(24, ' ') + "2\n") != std::string::npos);
    CHECK(table.find("attempts" + std::string(24, ' ') + "3\n") != std::string::npos);
}

TEST_CASE("scripted agentic run reproduces the golden dataset") {
    testing::TempDir tmp;
    auto c = scripted(Method::agentic, testing::fixture("agentic_run.script.jsonl"), 2);
    c.output_path = tmp / "agentic.jsonl";
    c.stats_path = tmp / "agentic.stats.json";
    c.trace_dir = tmp / "traces";
    auto r = run_agentic(c);

    CHECK(r.stats.accepted == 2);
    CHECK(r.stats.rejected_semantic == 1);
    CHECK(r.stats.rejected_inclusion == 0);
    CHECK(r.stats.attempts() == 3);
    CHECK(r.stats.total_chat_calls == 18);
    CHECK(r.stats.requested == 2);
    REQUIRE(r.dataset.size() == 2);
    CHECK(r.dataset.examples[1].raw_text == "The food was lousy, too sweet and too salty.");

    const auto out = testing::read_file(*c.output_path);
    CHECK(out == testing::golden("agentic_run.jsonl", out));

    const auto stats = json::parse(testing::read_file(*c.stats_path));
    CHECK(stats["stats"]["accepted"] == 2);
    CHECK(stats["stats"]["rejected_semantic"] == 1);
    CHECK(stats["config"]["seed"] == kSeed);
    CHECK(stats["config"]["domain"] == "Restaurants");

    CHECK(std::filesystem::exists(tmp / "traces" / "agentic-000001-1.jsonl"));
    CHECK(std::filesystem::exists(tmp / "traces" / "agentic-000002-1.jsonl"));
    CHECK(std::filesystem::exists(tmp / "traces" / "agentic-000002-2.jsonl"));
    const auto rejected = testing::read_file(tmp / "traces" / "agentic-000002-1.jsonl");
    CHECK(rejected.find("\"status\":\"rejected_semantic\"") != std::string::npos);
}

TEST_CASE("prompting over the same label sequence keeps the rejected candidate") {
    testing::TempDir tmp;
    auto c = scripted(Method::prompting, testing::fixture("prompting_run.script.jsonl"), 2);
    c.output_path = tmp / "prompting.jsonl";
    c.trace_dir = tmp / "ptraces";
    auto r = run_prompting(c);
    CHECK(r.stats.accepted == 2);
    CHECK(r.stats.total_chat_calls == 2);
    REQUIRE(r.dataset.size() == 2);
    CHECK(r.dataset.examples[1].raw_text ==
          "The balcony was cramped and had limited tables, but I loved the view from it.");
    CHECK(r.dataset.examples[1].provenance == Provenance::prompting);
    CHECK(r.dataset.examples[1].id == "prompting-000002");

    auto a = scripted(Method::agentic, testing::fixture("agentic_run.script.jsonl"), 2);
    a.trace_dir = tmp / "atraces";
    run_agentic(a);
    const auto agentic_labels = policies(tmp / "atraces", Method::agentic, 2);
    const auto prompting_labels = policies(tmp / "ptraces", Method::prompting, 2);
    CHECK(agentic_labels == prompting_labels);
    CHECK(agentic_labels[1] == json::array({json::array({"balcony"}), json::array({"negative"})}));
}

TEST_CASE("prompting accepts a mislabeled udon soup sentence") {
    testing::TempDir tmp;
    const auto script = write_script(tmp, {"The udon soup was rich and flavorful.\nTerms=['soup']\nPolarity=['positive']"});
    auto r = run_prompting(scripted(Method::prompting, script, 1));
    REQUIRE(r.dataset.size() == 1);
    CHECK(r.dataset.examples[0].annotations == std::vector<AspectAnnotation>{{"soup", Polarity::positive}});
}

TEST_CASE("a zero target makes no calls") {
    testing::TempDir tmp;
    const auto script = write_script(tmp, {});
    auto c = scripted(Method::agentic, script, 0);
    auto r = run_agentic(c);
    CHECK(r.dataset.empty());
    CHECK(r.stats.total_chat_calls == 0);
    CHECK(r.stats.attempts() == 0);

    c.count.reset();
    c.ratio = 0;
    CHECK(run_agentic(c).stats.total_chat_calls == 0);
}

TEST_CASE("unparseable outputs are retried") {
    testing::TempDir tmp;
    const auto script = write_script(tmp, {"Sorry, I cannot do that.", kGingerReply});
    auto r = run_prompting(scripted(Method::prompting, script, 1));
    CHECK(r.stats.failed_parse == 1);
    CHECK(r.stats.accepted == 1);
    CHECK(r.stats.total_chat_calls == 2);
}

TEST_CASE("samples are skipped when their attempts run out") {
    testing::TempDir tmp;
    {
        const auto script = write_script(tmp, {"bad", "bad"});
        auto c = scripted(Method::prompting, script, 1);
        c.max_attempts_per_sample = 2;
        try {
            run_prompting(c);
            FAIL("expected RunError");
        } catch (const RunError& e) {
            CHECK(e.stats().skipped == 1);
            CHECK(e.stats().failed_parse == 2);
        }
    }
    {
        const auto script = write_script(tmp, {"bad", kGingerReply});
        auto c = scripted(Method::prompting, script, 2);
        c.max_attempts_per_sample = 1;
        testing::LogCapture logs;
        auto r = run_prompting(c);
        CHECK(r.stats.skipped == 1);
        CHECK(r.stats.accepted == 1);
        CHECK(logs.contains("shortfall"));
    }
}

TEST_CASE("fatal gateway errors stop the run") {
    testing::TempDir tmp;
    SUBCASE("script exhausted before any acceptance") {
        const auto script = write_script(tmp, {"bad"});
        try {
            run_prompting(scripted(Method::prompting, script, 1));
            FAIL("expected RunError");
        } catch (const RunError& e) {
            CHECK(std::string(e.what()).find("exhausted") != std::string::npos);
            CHECK(e.stats().failed_parse == 1);
            CHECK(e.stats().failed_transport == 1);
        }
    }
    SUBCASE("budget") {
        auto c = scripted(Method::agentic, testing::fixture("agentic_run.script.jsonl"), 1);
        c.call_budget = 3;
        try {
            run_agentic(c);
            FAIL("expected RunError");
        } catch (const RunError& e) {
            CHECK(std::string(e.what()).find("budget") != std::string::npos);
            CHECK(e.stats().failed_transport == 1);
            CHECK(e.stats().total_chat_calls == 4);
        }
    }
}

TEST_CASE("partial runs keep what was accepted") {
    testing::TempDir tmp;
    const auto script = write_script(tmp, {kGingerReply});
    auto c = scripted(Method::prompting, script, 3);
    c.output_path = tmp / "out.jsonl";
    testing::LogCapture logs;
    auto r = run_prompting(c);
    CHECK(r.stats.accepted == 1);
    CHECK(r.stats.failed_transport == 1);
    CHECK(logs.contains("stopped early"));
    CHECK(load_semeval(*c.output_path).size() == 1);
}

TEST_CASE("an unreachable backend aborts after consecutive failures") {
    RunConfig c;
    c.method = Method::prompting;
    c.train_path = testing::fixture("rest16_train.jsonl");
    c.count = 5;
    c.max_attempts_per_sample = 2;
    c.backend.endpoint_url = "http://127.0.0.1:" + std::to_string(testing::closed_port());
    c.backend.max_retries = 0;
    c.backend.timeout_ms = 500;
    try {
        run_prompting(c);
        FAIL("expected RunError");
    } catch (const RunError& e) {
        CHECK(std::string(e.what()).find("backend unavailable") != std::string::npos);
        CHECK(e.stats().failed_transport == 2);
    }
}

TEST_CASE("resuming appends to an existing output") {
    testing::TempDir tmp;
    const auto script = write_script(tmp, {kGingerReply, kGingerReply, kGingerReply});
    auto c = scripted(Method::prompting, script, 1);
    c.output_path = tmp / "out.jsonl";
    run_prompting(c);

    c.count = 2;
    auto r = run_prompting(c);
    CHECK(r.stats.resumed == 1);
    CHECK(r.stats.requested == 1);
    CHECK(r.stats.total_chat_calls == 1);
    const auto d = load_semeval(*c.output_path);
    REQUIRE(d.size() == 2);
    CHECK(d.examples[1].id == "prompting-000002");

    c.resume = false;
    c.count = 1;
    run_prompting(c);
    CHECK(load_semeval(*c.output_path).size() == 1);
}

TEST_CASE("parallel workers fill the target with unique ids") {
    testing::TempDir tmp;
    std::vector<std::string> replies(12, kGingerReply);
    const auto script = write_script(tmp, replies);
    auto c = scripted(Method::prompting, script, 12);
    c.workers = 4;
    c.output_path = tmp / "out.jsonl";
    auto r = run_prompting(c);
    CHECK(r.stats.accepted == 12);
    CHECK(r.stats.total_chat_calls == 12);
    std::set<std::string> ids;
    for (const auto& ex : load_semeval(*c.output_path).examples) ids.insert(ex.id);
    CHECK(ids.size() == 12);
    CHECK(ids.count("prompting-000012") == 1);
}

TEST_CASE("experiment grids") {
    ExperimentGrid g;
    g.methods = {Method::agentic};
    g.ratios = {1};
    g.tasks = {Task::ATE};
    g.datasets = {"rest16", "lap14"};
    g.base_seed = 100;
    auto plan = plan_experiment(g);
    REQUIRE(plan.size() == 2);
    CHECK(plan[1].seed == 101);
    CHECK(plan[1].train_path == std::filesystem::path("data/lap14_train.jsonl"));
    CHECK(plan[0].output_path->generic_string() == "runs/rest16/agentic_x1_ate.jsonl");

    g.methods = {Method::agentic, Method::prompting};
    g.ratios = {0.5, 2};
    g.tasks = {Task::ATE, Task::ATSC, Task::ASPE};
    g.datasets = {"lap14", "rest14", "rest15", "rest16"};
    plan = plan_experiment(g);
    CHECK(plan.size() == 48);
    std::set<std::string> outs;
    for (const auto& c : plan) outs.insert(c.output_path->generic_string());
    CHECK(outs.size() == 48);
    CHECK(plan[47].seed == 147);
    CHECK(plan[47].output_path->generic_string() == "runs/rest16/prompting_x2_aspe.jsonl");

    const auto manifest = plan_manifest(plan);
    CHECK(std::count(manifest.begin(), manifest.end(), '\n') == 49);
    CHECK(manifest.rfind("index\tmethod\tratio\ttask\tdataset\tseed\ttrain\toutput\n", 0) == 0);
    CHECK(manifest.find("\n0\tagentic\t0.5\tate\tlap14\t100\tdata/lap14_train.jsonl\truns/lap14/agentic_x0.5_ate.jsonl\n") !=
          std::string::npos);

    g.ratios = {1, 1.0};
    CHECK_THROWS_AS(plan_experiment(g), InvalidArgument);
    g.ratios = {};
    CHECK_THROWS_AS(plan_experiment(g), InvalidArgument);

    CHECK(format_ratio(0.5) == "0.5");
    CHECK(format_ratio(2.0) == "2");
}
