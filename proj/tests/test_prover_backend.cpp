#include "test_util.hpp"

#include "verify/prover_backend.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <thread>

using namespace verify;

namespace {

Formalization compiled(const std::string& name, const std::string& header) {
  Formalization f;
  f.name = name;
  f.code = header;
  f.status = FormalStatus::CompileOk;
  return f;
}

BackendConfig fake_lean() {
  BackendConfig c;
  c.kind = "lean";
  c.command = {testutil::data("fake_lean.sh")};
  c.timeout_seconds = 2.0;
  c.prelude = "import Mathlib\n";
  return c;
}

}  // namespace

TEST(CompilerOutput, ParsesDiagnostics) {
  auto r = parse_compiler_output("/tmp/x/Main.lean:7:2: error: unsolved goals\nx : ℤ\n/tmp/x/Main.lean:9:0: warning: unused", 1);
  EXPECT_FALSE(r.ok());
  ASSERT_EQ(r.diagnostics.size(), 2u);
  EXPECT_EQ(r.diagnostics[0].line, 7);
  EXPECT_EQ(r.diagnostics[0].column, 2);
  EXPECT_EQ(r.diagnostics[0].severity, Severity::Error);
  EXPECT_EQ(r.diagnostics[1].severity, Severity::Warning);
  EXPECT_NE(r.raw_tail.find("x : ℤ"), std::string::npos);
  // Exit 0 with only warnings compiles.
  EXPECT_TRUE(parse_compiler_output("a.lean:1:1: warning: w", 0).ok());
  // An error line fails even with exit 0.
  EXPECT_FALSE(parse_compiler_output("a.lean:1:1: error: e", 0).ok());
}

TEST(Stub, RulesAndDefault) {
  json script = {{"rules", {{{"contains", "bad"}, {"status", "Error"}}}}, {"default", {{"status", "Ok"}, {"elapsed", 0.5}}}};
  StubBackend b(script, 10.0);
  EXPECT_FALSE(b.check_compile("theorem bad").ok());
  auto ok = b.check_compile("theorem good");
  EXPECT_TRUE(ok.ok());
  EXPECT_DOUBLE_EQ(ok.elapsed, 0.5);
  std::string code = "exact hash";
  StubBackend h(json::array({{{"code_sha256", sha256_hex(code)}, {"status", "Error"}}}), 10.0);
  EXPECT_FALSE(h.check_compile(code).ok());
  EXPECT_TRUE(h.check_compile(code + " ").ok());
  EXPECT_EQ(h.compile_count(), 2u);
}

TEST(Stub, SleepPastTimeoutIsTimeout) {
  StubBackend b(json::array({{{"contains", "slow"}, {"sleep", 0.3}}}), 0.05);
  auto r = b.check_compile("slow");
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.timed_out());
}

namespace {

class Probe : public ProofBackend {
 public:
  Probe() : ProofBackend(2) {}
  std::string name() const override { return "probe"; }
  double default_timeout() const override { return 10.0; }
  std::atomic<int> now{0}, peak{0};

 protected:
  CompileResult do_compile(std::string_view, double) override {
    int n = ++now;
    int p = peak.load();
    while (n > p && !peak.compare_exchange_weak(p, n)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    --now;
    return {};
  }
};

}  // namespace

TEST(Backend, ConcurrencyCapHonored) {
  Probe b;
  std::vector<std::thread> ts;
  for (int i = 0; i < 6; ++i) ts.emplace_back([&] { b.check_compile("x"); });
  for (auto& t : ts) t.join();
  EXPECT_LE(b.peak.load(), 2);
  EXPECT_GE(b.peak.load(), 1);
}

TEST(Assemble, UnitShape) {
  Formalization h = compiled("lemma_1", "theorem lemma_1 (x : ℤ) : x = x");
  h.status = FormalStatus::ProvedOk;
  h.proof_code = "by rfl";
  Formalization a = compiled("fact_1", "theorem fact_1 : (2:ℤ) + 2 = 4");
  a.status = FormalStatus::AcceptedWithoutProof;
  Formalization g = compiled("lemma_2", "theorem lemma_2 : True");
  std::string u = assemble_unit("import Mathlib", {h, a}, g, "by trivial");
  EXPECT_EQ(u,
            "import Mathlib\n\ntheorem lemma_1 (x : ℤ) : x = x := by rfl\n\ntheorem fact_1 : (2:ℤ) + 2 = 4 := by\n  sorry\n"
            "\ntheorem lemma_2 : True := by trivial\n");
}

TEST(AttemptProof, StatusFollowsCompileAndMarkers) {
  BackendConfig cfg;
  StubBackend b(json::array({{{"contains", "bogus"}, {"status", "Error"}}}), 10.0);
  Formalization g = compiled("lemma_1", "theorem lemma_1 : 1 = 1");
  auto ok = attempt_proof(b, cfg, g, {}, "by\n  rfl");
  EXPECT_EQ(ok.result.status, FormalStatus::ProvedOk);
  EXPECT_EQ(ok.result.proof_code.value(), "by\n  rfl");
  auto bad = attempt_proof(b, cfg, g, {}, "by bogus");
  EXPECT_EQ(bad.result.status, FormalStatus::ProofFailed);
  // The stub accepts it, but the marker in the proof must still fail it.
  auto cheat = attempt_proof(b, cfg, g, {}, "by sorry");
  EXPECT_EQ(cheat.result.status, FormalStatus::ProofFailed);
  EXPECT_FALSE(cheat.result.proof_code.has_value());
  // A marker in a comment is harmless.
  auto commented = attempt_proof(b, cfg, g, {}, "by\n  rfl -- no sorry needed");
  EXPECT_EQ(commented.result.status, FormalStatus::ProvedOk);
  Formalization unchecked = g;
  unchecked.status = FormalStatus::Unchecked;
  EXPECT_THROW(attempt_proof(b, cfg, unchecked, {}, "by rfl"), Error);
}

TEST(TrivialCheck, UsesBudgetAndTactics) {
  BackendConfig cfg;
  Formalization g = compiled("main_goal", "theorem main_goal : Nat.gcd 12 18 = 6");
  StubBackend ok(json::array(), 10.0);
  auto t = trivial_check(ok, cfg, g, 5.0);
  EXPECT_TRUE(t.trivial);
  EXPECT_NE(t.unit.find("theorem trivial_check_goal"), std::string::npos);
  EXPECT_NE(t.unit.find("| norm_num"), std::string::npos);
  auto off = trivial_check(ok, cfg, g, 0.0);
  EXPECT_FALSE(off.trivial);
  EXPECT_FALSE(off.compile.has_value());
  StubBackend fail(json::array({{{"contains", "trivial_check_goal"}, {"status", "Error"}}}), 10.0);
  EXPECT_FALSE(trivial_check(fail, cfg, g, 5.0).trivial);
}

TEST(LeanDriver, RunsCommandAndParses) {
  LeanBackend b(fake_lean());
  auto ok = b.check_compile("theorem t : 1 = 1 := rfl");
  EXPECT_TRUE(ok.ok());
  auto warn = b.check_compile("theorem t : 1 = 1 := by sorry");
  EXPECT_TRUE(warn.ok());
  ASSERT_EQ(warn.diagnostics.size(), 1u);
  EXPECT_EQ(warn.diagnostics[0].severity, Severity::Warning);
  auto bad = b.check_compile("-- FAIL_UNIT\ntheorem t : 1 = 2 := rfl");
  EXPECT_FALSE(bad.ok());
  ASSERT_EQ(bad.diagnostics.size(), 2u);
  EXPECT_EQ(bad.diagnostics[0].line, 7);
}

TEST(LeanDriver, TimeoutKillsProcess) {
  LeanBackend b(fake_lean());
  auto start = std::chrono::steady_clock::now();
  auto r = b.check_compile("-- SLOW_UNIT", 0.3);
  double took = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_FALSE(r.ok());
  EXPECT_TRUE(r.timed_out());
  EXPECT_LT(took, 3.0);
}

TEST(LeanDriver, MissingToolchainIsUnavailable) {
  BackendConfig c;
  c.kind = "lean";
  c.toolchain_root = "/nonexistent/toolchain";
  LeanBackend b(c);
  try {
    b.check_compile("theorem t : 1 = 1 := rfl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BackendUnavailable);
  }
}

TEST(Formalization, JsonRoundTrip) {
  Formalization f = compiled("lemma_3", "theorem lemma_3 : 1 = 1");
  f.source_sid = "abc";
  f.status = FormalStatus::ProvedOk;
  f.proof_code = "by rfl";
  f.diagnostics.push_back({Severity::Warning, 1, 2, "w"});
  auto g = formalization_from_json(to_json(f));
  EXPECT_EQ(canonical_dump(to_json(g)), canonical_dump(to_json(f)));
}
