#include "test_util.hpp"

#include "verify/agents.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <thread>

using namespace verify;

namespace {

AgentEndpoint ep(AgentRole role, int retries = 2) {
  AgentEndpoint e = endpoint_from_json(role, nullptr);
  e.max_retries = retries;
  return e;
}

std::shared_ptr<MockChatBackend> mock(const char* script) {
  return std::make_shared<MockChatBackend>(ordered_json::parse(script));
}

}  // namespace

TEST(Templates, KeysAndRendering) {
  EXPECT_EQ(template_key(AgentRole::Solver, true), "solver_vars_on");
  EXPECT_EQ(template_key(AgentRole::Prover, false), "prover_vars_off");
  TemplateSet t = TemplateSet::defaults();
  for (auto role : {AgentRole::Solver, AgentRole::Translator, AgentRole::Prover})
    for (bool on : {true, false}) EXPECT_NE(t.find(template_key(role, on)), nullptr);

  std::string a = render_prompt(t, AgentRole::Solver, {{"problem", "Find x."}}, {});
  std::string b = render_prompt(t, AgentRole::Solver, {{"problem", "Find x."}}, {});
  EXPECT_EQ(a, b);
  EXPECT_NE(a.find("Find x."), std::string::npos);
  EXPECT_EQ(a.find("{{"), std::string::npos);
  PromptOptions on;
  on.introduce_variables = true;
  EXPECT_NE(render_prompt(t, AgentRole::Solver, {{"problem", "Find x."}}, on).find("VARIABLES"), std::string::npos);
}

TEST(Templates, MissingFieldAndTemplate) {
  TemplateSet t = TemplateSet::defaults();
  try {
    render_prompt(t, AgentRole::Solver, {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidArgument);
  }
  t.erase("prover_vars_on");
  PromptOptions on;
  on.introduce_variables = true;
  try {
    render_prompt(t, AgentRole::Prover, {{"formal_statement", "x"}, {"context", ""}, {"variables", ""}}, on);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingTemplate);
  }
}

TEST(Templates, ContextFallsBackToExtraContext) {
  TemplateSet t;
  t.set("translator_vars_off", "ctx:\n{{context}}\nstmt: {{statement}}");
  PromptOptions o;
  o.extra_context = {Statement::make("a = 1"), Statement::make("b = 2")};
  EXPECT_EQ(render_prompt(t, AgentRole::Translator, {{"statement", "c"}}, o), "ctx:\nh1: a = 1\nh2: b = 2\nstmt: c");
}

TEST(Templates, DirectoryOverlay) {
  testutil::TempDir d("tmpl");
  write_file(d.str() + "/solver_vars_off.txt", "custom {{problem}}");
  TemplateSet t = TemplateSet::from_directory(d.str());
  EXPECT_EQ(render_prompt(t, AgentRole::Solver, {{"problem", "P"}}, {}), "custom P");
  EXPECT_NE(t.find("prover_vars_on"), nullptr);
}

TEST(Mock, LookupOrder) {
  std::string prompt = "Statement:\nx = 3";
  auto m = mock(R"({
    "contains:x = 3": ["by contains"],
    "Translator:*": ["role star"],
    "*": ["global star"]
  })");
  ordered_json hashed = {{"Prover:sha256:" + sha256_hex(prompt), {"by hash"}}, {"*", {"global star"}}};
  MockChatBackend h(hashed);
  EXPECT_EQ(h.complete(ep(AgentRole::Prover), prompt), "by hash");
  EXPECT_EQ(h.complete(ep(AgentRole::Solver), prompt), "global star");
  EXPECT_EQ(m->complete(ep(AgentRole::Translator), prompt), "by contains");
  EXPECT_EQ(m->complete(ep(AgentRole::Translator), "other"), "role star");
  EXPECT_EQ(m->complete(ep(AgentRole::Solver), "other"), "global star");
  EXPECT_EQ(m->calls(), 3u);
}

TEST(Mock, CursorAndRepeat) {
  auto m = mock(R"({"*": ["one", {"text": "two"}]})");
  EXPECT_EQ(m->complete(ep(AgentRole::Solver), "p"), "one");
  EXPECT_EQ(m->complete(ep(AgentRole::Solver), "p"), "two");
  EXPECT_EQ(m->complete(ep(AgentRole::Solver), "p"), "two");
}

// An unscripted prompt behaves like a failed call so the pipeline's agent
// failure path is what a fixture gap exercises.
TEST(Mock, UnscriptedPromptIsTransportError) {
  auto m = mock(R"({"contains:zzz": ["x"]})");
  try {
    m->complete(ep(AgentRole::Solver), "p");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TransportError);
  }
  EXPECT_THROW(mock(R"({"contains:zzz": []})"), Error);
  EXPECT_THROW(mock(R"(["x"])"), Error);
}

TEST(Client, RetriesThenSucceeds) {
  auto m = mock(R"({"*": [{"error": "timeout"}, {"error": "transport"}, "ok"]})");
  std::vector<double> delays;
  AgentClient c(m, 1, RetryPolicy{1.0, 2.0, 0.0}, [&](double d) { delays.push_back(d); });
  auto t = c.call(ep(AgentRole::Solver, 2), "p");
  EXPECT_EQ(t.response, "ok");
  EXPECT_EQ(t.attempt, 3);
  EXPECT_FALSE(t.error.has_value());
  EXPECT_EQ(delays, (std::vector<double>{1.0, 2.0}));
}

TEST(Client, ExhaustionCarriesTranscript) {
  auto m = mock(R"({"*": [{"error": "timeout"}]})");
  AgentClient c(m, 1, {}, testutil::no_sleep);
  try {
    c.call(ep(AgentRole::Prover, 1), "p");
    FAIL();
  } catch (const AgentError& e) {
    EXPECT_EQ(e.code(), ErrorCode::Timeout);
    EXPECT_EQ(e.transcript().attempt, 2);
    EXPECT_EQ(e.transcript().error, ErrorCode::Timeout);
  }
  EXPECT_EQ(m->calls(), 2u);
}

TEST(Client, AttemptsNeverExceedBudget) {
  for (int retries = 0; retries <= 4; ++retries) {
    auto m = mock(R"({"*": [{"error": "empty"}]})");
    AgentClient c(m, 1, {}, testutil::no_sleep);
    EXPECT_THROW(c.call(ep(AgentRole::Solver, retries), "p"), AgentError);
    EXPECT_EQ(m->calls(), static_cast<size_t>(retries + 1));
  }
}

TEST(Client, BackoffJitterBounded) {
  std::mt19937_64 rng(7);
  RetryPolicy p{0.5, 3.0, 0.2};
  for (int k = 1; k <= 4; ++k) {
    double base = 0.5 * std::pow(3.0, k - 1);
    for (int i = 0; i < 50; ++i) {
      double d = backoff_delay(k, p, rng);
      EXPECT_GE(d, base * 0.8 - 1e-12);
      EXPECT_LE(d, base * 1.2 + 1e-12);
    }
  }
}

TEST(Client, InflightCapShared) {
  struct Slow : ChatBackend {
    std::atomic<int> now{0}, peak{0};
    std::string complete(const AgentEndpoint&, const std::string&) override {
      int n = ++now;
      int p = peak.load();
      while (n > p && !peak.compare_exchange_weak(p, n)) {
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(15));
      --now;
      return "r";
    }
  };
  auto backend = std::make_shared<Slow>();
  auto limiter = std::make_shared<CallLimiter>(2);
  AgentClient a(backend, limiter), b(backend, limiter);
  std::vector<std::thread> ts;
  for (int i = 0; i < 4; ++i) ts.emplace_back([&] { a.call(ep(AgentRole::Solver), "p"); });
  for (int i = 0; i < 4; ++i) ts.emplace_back([&] { b.call(ep(AgentRole::Solver), "p"); });
  for (auto& t : ts) t.join();
  EXPECT_LE(backend->peak.load(), 2);
}

TEST(Extract, Shapes) {
  auto code = [](std::string_view r) { return trim(extract_code_block(r).value()); };
  EXPECT_EQ(code("text\n```lean4\ntheorem a : 1 = 1 := rfl\n```\nmore ```lean\nx\n```"), "theorem a : 1 = 1 := rfl");
  EXPECT_EQ(code("<think>```lean\nwrong\n```</think>```lean\nright\n```"), "right");
  EXPECT_EQ(code("theorem a : 1 = 1 := rfl"), "theorem a : 1 = 1 := rfl");
  EXPECT_FALSE(extract_code_block("I cannot do this.").has_value());
  EXPECT_FALSE(extract_code_block("").has_value());
}

TEST(Endpoint, FromJson) {
  auto t = endpoint_from_json(AgentRole::Translator, {{"base_url", "http://h:1/v1"}, {"model_name", "m"}});
  EXPECT_EQ(t.sampling.at("temperature"), 0.0);
  EXPECT_THROW(endpoint_from_json(AgentRole::Solver, {{"max_retries", -1}}), Error);
  EXPECT_THROW(endpoint_from_json(AgentRole::Solver, {{"timeout", 0}}), Error);
}

TEST(Roles, ThreeOperations) {
  auto m = mock(R"({
    "Solver:*": ["LEMMA 1: ..."],
    "Translator:*": ["```lean4\ntheorem x : 1 = 1 := by sorry\n```"],
    "Prover:*": ["no code here"]
  })");
  Agents a;
  a.client = std::make_shared<AgentClient>(m, 2, RetryPolicy{}, testutil::no_sleep);
  ProblemStatement p;
  p.id = "p";
  p.text = "Show 1 = 1.";
  auto s = solve(a, p, {});
  EXPECT_EQ(s.response, "LEMMA 1: ...");
  EXPECT_NE(s.prompt.find("Show 1 = 1."), std::string::npos);
  auto f = formalize(a, Statement::make("1 = 1"), {Statement::make("0 = 0")}, {}, {});
  EXPECT_EQ(trim(f.code.value()), "theorem x : 1 = 1 := by sorry");
  EXPECT_NE(f.transcript.prompt.find("h1: 0 = 0"), std::string::npos);
  auto pr = prove(a, "theorem x : 1 = 1", {{"fact_1", "theorem fact_1 : 0 = 0 := rfl"}}, {}, {});
  EXPECT_FALSE(pr.code.has_value());
  EXPECT_NE(pr.transcript.prompt.find("theorem fact_1"), std::string::npos);
  EXPECT_EQ(format_variables({}), "(none)");
}

TEST(Transcript, JsonRoundTrip) {
  AgentTranscript t;
  t.id = "t1";
  t.role = AgentRole::Prover;
  t.prompt = "p";
  t.response = "r";
  t.attempt = 2;
  t.error = ErrorCode::Timeout;
  auto j = to_json(t);
  EXPECT_EQ(j["prompt_sha256"], sha256_hex("p"));
  EXPECT_EQ(canonical_dump(to_json(transcript_from_json(j))), canonical_dump(j));
}

TEST(Http, WireShapeAgainstLocalServer) {
  httplib::Server srv;
  json seen;
  srv.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(json{{"choices", {{{"message", {{"role", "assistant"}, {"content", "hello"}}}}}}}.dump(),
                    "application/json");
  });
  srv.Post("/bad/chat/completions", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  srv.Post("/slow/chat/completions", [](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1500));
    res.set_content("{}", "application/json");
  });
  int port = srv.bind_to_any_port("127.0.0.1");
  std::thread th([&] { srv.listen_after_bind(); });
  srv.wait_until_ready();

  AgentEndpoint e = ep(AgentRole::Prover);
  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  e.model_name = "kimina";
  e.max_tokens = 128;
  HttpChatBackend http;
  EXPECT_EQ(http.complete(e, "prompt text"), "hello");
  EXPECT_EQ(seen["model"], "kimina");
  EXPECT_EQ(seen["messages"][0]["role"], "user");
  EXPECT_EQ(seen["messages"][0]["content"], "prompt text");
  EXPECT_EQ(seen["max_tokens"], 128);
  EXPECT_TRUE(seen.contains("temperature"));

  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/bad";
  try {
    http.complete(e, "p");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::TransportError);
  }
  e.base_url = "http://127.0.0.1:" + std::to_string(port) + "/slow";
  e.timeout = 0.3;
  try {
    http.complete(e, "p");
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), ErrorCode::Timeout);
  }
  srv.stop();
  th.join();
}

TEST(Http, ResponseShapeErrors) {
  EXPECT_EQ(HttpChatBackend::response_content({{"choices", {{{"message", {{"content", "x"}}}}}}}), "x");
  EXPECT_THROW(HttpChatBackend::response_content({{"nope", 1}}), Error);
}
