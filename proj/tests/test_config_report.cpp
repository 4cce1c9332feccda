#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace verify;

TEST(Config, LoadResolvesRelativePaths) {
  auto cfg = testutil::fixture_config("two_lemma");
  EXPECT_EQ(cfg.transport, "mock");
  EXPECT_EQ(cfg.mock_script, testutil::data("e2e/two_lemma/agents.json"));
  EXPECT_EQ(cfg.backend.stub_script, testutil::data("e2e/two_lemma/backend.json"));
  EXPECT_EQ(cfg.prover_retries, 2);
  EXPECT_EQ(cfg.intro_vars, IntroVars::Off);
}

TEST(Config, Defaults) {
  PipelineConfig c = config_from_json(json::object());
  EXPECT_EQ(c.prover_retries, 2);
  EXPECT_EQ(c.translator.sampling.at("temperature"), 0.0);
  EXPECT_EQ(c.backend.kind, "stub");
  EXPECT_GT(c.trivial_budget, 0.0);
}

TEST(Config, Rejects) {
  auto bad = [](const char* text) {
    try {
      config_from_json(json::parse(text));
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(bad(R"({"agents": {"transport": "carrier-pigeon"}})"), ErrorCode::ConfigError);
  EXPECT_EQ(bad(R"({"pipeline": {"prover_retries": -1}})"), ErrorCode::ConfigError);
  EXPECT_EQ(bad(R"({"pipeline": {"intro_vars": "sometimes"}})"), ErrorCode::ConfigError);
  EXPECT_EQ(bad(R"({"batch": {"workers": 0}})"), ErrorCode::ConfigError);
  EXPECT_EQ(bad(R"({"pipeline": {"prover_retries": "two"}})"), ErrorCode::ConfigError);
  EXPECT_EQ(bad(R"([1])"), ErrorCode::ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), Error);
}

TEST(Config, MergeAndRoundTrip) {
  auto base = testutil::fixture_config("two_lemma");
  auto m = merge_config(base, {{"pipeline", {{"prover_retries", 5}}}});
  EXPECT_EQ(m.prover_retries, 5);
  EXPECT_EQ(m.mock_script, base.mock_script);
  auto back = config_from_json(to_json(base));
  EXPECT_EQ(canonical_dump(to_json(back)), canonical_dump(to_json(base)));
}

TEST(Config, FactoryGivesFreshMockCursors) {
  ServiceFactory f(testutil::fixture_config("two_lemma"), testutil::no_sleep);
  auto a = f.make(), b = f.make();
  EXPECT_NE(a->agents.client.get(), b->agents.client.get());
  EXPECT_EQ(a->backend.get(), b->backend.get());
  PipelineConfig broken;
  broken.mock_inline = json::array({1});
  EXPECT_THROW(ServiceFactory{broken}, Error);
}

TEST(Report, ShapeRenderingAndTiming) {
  auto cfg = testutil::fixture_config("two_lemma");
  ServiceFactory factory(cfg, testutil::no_sleep);
  json r = run_automatic(testutil::fixture_problem("two_lemma"), cfg, factory, testutil::step_clock());
  for (auto key : {"schema_version", "session_id", "problem", "mode", "options", "state", "passes", "chosen_pass",
                   "final_proof", "verdict", "assumed", "transcripts", "compiles", "event_count"})
    EXPECT_TRUE(r.contains(key)) << key;
  EXPECT_EQ(r["state"], "Finished");
  EXPECT_EQ(r["passes"][0]["steps"][0]["phase"], "AwaitingSolve");
  // Each transcript and compile id referenced by a step exists.
  std::set<std::string> tids, cids;
  for (auto& t : r["transcripts"]) tids.insert(t["id"].get<std::string>());
  for (auto& c : r["compiles"]) cids.insert(c["id"].get<std::string>());
  for (auto& s : r["passes"][0]["steps"]) {
    for (auto& t : s["transcripts"]) EXPECT_TRUE(tids.count(t.get<std::string>()));
    for (auto& c : s["compiles"]) EXPECT_TRUE(cids.count(c.get<std::string>()));
  }
  EXPECT_TRUE(cids.count(r["final_proof"]["compile_id"].get<std::string>()));

  std::string text = render_report(r);
  EXPECT_NE(text.find("VERDICT: Verified"), std::string::npos);
  EXPECT_NE(text.find("Composed proof"), std::string::npos);
  EXPECT_EQ(text.find("WARNING"), std::string::npos);

  json s = strip_timing(r);
  EXPECT_FALSE(s.contains("started_at"));
  EXPECT_FALSE(s["passes"][0]["steps"][0].contains("wall_clock"));
  EXPECT_FALSE(s["transcripts"][0].contains("latency"));
  EXPECT_EQ(s["verdict"], r["verdict"]);
}

TEST(Report, UnfinishedRendersState) {
  SessionSpec spec = testutil::spec_for("fact_compile_failure", Mode::Interactive,
                                        testutil::fixture_config("fact_compile_failure"));
  ServiceFactory f(spec.config, testutil::no_sleep);
  Session s(spec, f.make(), testutil::step_clock());
  s.run_until_blocked();
  json r = build_report(s.spec(), s.state(), s.events());
  EXPECT_TRUE(r["verdict"].is_null());
  EXPECT_EQ(r["state"], "AwaitingDecision");
  EXPECT_NE(render_report(r).find("not finished"), std::string::npos);
}
