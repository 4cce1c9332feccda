#include "harness.hpp"

#include "verify/linker.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace verify;
using namespace harness;

namespace {

StructuredSolution parse_file(const std::string& name) {
  return normalize(parse_structured_solution(read_file(testutil::data("solutions/" + name))));
}

Formalization proved(const std::string& name, const std::string& header, const std::string& proof) {
  Formalization f;
  f.name = name;
  f.code = header;
  f.status = FormalStatus::ProvedOk;
  f.proof_code = proof;
  return f;
}

}  // namespace

TEST(Reachability, ExhaustiveSmallGraphs) {
  ASSERT_EQ(all_edge_types().size(), 30u);
  Failures fails;
  size_t checked = linker_exhaustive(6, 4, fails);
  EXPECT_GT(checked, 700000u);
  EXPECT_TRUE(fails.empty()) << join(fails);
}

TEST(Reachability, RandomSolutions) {
  Failures fails;
  linker_random(200, 20240611, fails);
  EXPECT_TRUE(fails.empty()) << join(fails);
}

TEST(Reachability, MonotoneInEdges) {
  auto types = all_edge_types();
  std::mt19937 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<EdgeType> edges;
    for (int k = 0; k < 5; ++k) edges.push_back(types[rng() % types.size()]);
    auto g = graph_of(edges);
    auto full = check_reachability(g);
    auto fewer = check_reachability(without_edges(g, {1 + static_cast<int>(rng() % 5)}));
    for (auto& s : fewer.established) EXPECT_TRUE(full.established.count(s));
  }
}

TEST(Hypergraph, FromSolution) {
  auto s = parse_file("02_triangular.txt");
  auto g = build_hypergraph(s);
  EXPECT_EQ(g.edges.size(), s.lemmas.size());
  EXPECT_EQ(g.nodes.at(g.goal_sid).kind, NodeKind::Goal);
  for (auto& e : g.edges) {
    EXPECT_TRUE(g.nodes.count(e.conclusion));
    for (auto& p : e.premises) EXPECT_TRUE(g.nodes.count(p));
  }
  EXPECT_EQ(check_reachability(g).status, LinkStatus::Reachable);
  auto dot = to_dot(g);
  EXPECT_NE(dot.find("digraph"), std::string::npos);
  EXPECT_NE(dot.find("doubleoctagon"), std::string::npos);
  auto j = to_json(g);
  EXPECT_EQ(j["edges"].size(), g.edges.size());
}

TEST(Hypergraph, CitationWinsOverPremiseText) {
  StructuredSolution s;
  s.lemmas.push_back({1, {{Statement::make("a = 1"), Provenance::given(1)}}, Statement::make("b = 2")});
  // Premise text differs from lemma 1's conclusion; the citation decides.
  s.lemmas.push_back({2, {{Statement::make("b=2 (from above)"), Provenance::prior_lemma(1)}}, Statement::make("c = 3")});
  s.goal = Statement::make("c = 3");
  auto g = build_hypergraph(s);
  EXPECT_EQ(g.edge(2)->premises, std::vector<std::string>{Statement::make("b = 2").sid});
  EXPECT_EQ(check_reachability(g).status, LinkStatus::Reachable);
}

TEST(Hypergraph, DuplicateConclusionWarns) {
  StructuredSolution s;
  s.lemmas.push_back({1, {{Statement::make("a = 1"), Provenance::given(1)}}, Statement::make("b = 2")});
  s.lemmas.push_back({2, {{Statement::make("a = 1"), Provenance::given(1)}}, Statement::make("b = 2")});
  s.goal = Statement::make("b = 2");
  auto g = build_hypergraph(s);
  ASSERT_EQ(g.warnings.size(), 1u);
  EXPECT_NE(g.warnings[0].find("DuplicateConclusion"), std::string::npos);
}

TEST(Blocked, MissingPremiseIsReported) {
  StructuredSolution s;
  s.lemmas.push_back({1, {{Statement::make("a = 1"), Provenance::given(1)}, {Statement::make("z = 9"), Provenance::fact()}},
                      Statement::make("b = 2")});
  s.goal = Statement::make("b = 2");
  auto g = build_hypergraph(s);
  auto r = check_reachability(g, std::set<std::string>{});
  EXPECT_EQ(r.status, LinkStatus::Blocked);
  EXPECT_EQ(r.missing, std::set<std::string>{Statement::make("z = 9").sid});
  EXPECT_FALSE(final_gap_repair(g, r).has_value());
}

TEST(GapRepair, BridgesOnlyTheFinalHop) {
  auto s = parse_file("15_gap_goal.txt");
  ASSERT_TRUE(s.needs_final_gap_repair());
  auto g = build_hypergraph(s);
  auto r = check_reachability(g);
  ASSERT_EQ(r.status, LinkStatus::Blocked);
  EXPECT_EQ(r.missing, std::set<std::string>{g.goal_sid});
  auto bridge = final_gap_repair(g, r);
  ASSERT_TRUE(bridge.has_value());
  EXPECT_EQ(bridge->index, 2);
  EXPECT_EQ(bridge->conclusion.text, "s ^ 2 = 4");
  ASSERT_EQ(bridge->premises.size(), 1u);
  EXPECT_EQ(bridge->premises[0].provenance, Provenance::prior_lemma(1));

  // Adding the bridge makes the goal reachable.
  s.lemmas.push_back(*bridge);
  EXPECT_EQ(check_reachability(build_hypergraph(s)).status, LinkStatus::Reachable);
  EXPECT_FALSE(final_gap_repair(build_hypergraph(s), check_reachability(build_hypergraph(s))).has_value());
}

TEST(GapRepair, NotWhenLastLemmaUnestablished) {
  StructuredSolution s;
  s.lemmas.push_back({1, {{Statement::make("a = 1"), Provenance::given(1)}}, Statement::make("b = 2")});
  s.lemmas.push_back({2, {{Statement::make("q = 0"), Provenance::fact()}}, Statement::make("c = 3")});
  s.goal = Statement::make("d = 4");
  auto g = build_hypergraph(s);
  auto r = check_reachability(g, std::set<std::string>{});
  EXPECT_FALSE(final_gap_repair(g, r).has_value());
}

TEST(Compose, ExactUnit) {
  LinkResult r;
  r.status = LinkStatus::Reachable;
  r.derivation_order = {1, 2};
  LinkInputs in;
  Formalization fact = proved("fact_1", "theorem fact_1 : (2:ℤ) * 3 = 6", "by norm_num");
  in.facts = {fact};
  in.lemmas[1] = proved("lemma_1", "theorem lemma_1 (x : ℤ) (h1 : x + 1 = 4) : x = 3", "by omega");
  in.lemmas[2] = proved("lemma_2", "theorem lemma_2 (x : ℤ) (h1 : x = 3) : 2 * x = 6", "by subst h1; rfl");
  in.goal.name = "main_goal";
  in.goal.code = "theorem main_goal (x : ℤ) (h1 : x + 1 = 4) : 2 * x = 6";
  std::string u = compose_final_proof("import Mathlib", r, in);
  EXPECT_EQ(u,
            "import Mathlib\n"
            "\ntheorem fact_1 : (2:ℤ) * 3 = 6 := by norm_num\n"
            "\ntheorem lemma_1 (x : ℤ) (h1 : x + 1 = 4) : x = 3 := by omega\n"
            "\ntheorem lemma_2 (x : ℤ) (h1 : x = 3) : 2 * x = 6 := by subst h1; rfl\n"
            "\ntheorem main_goal (x : ℤ) (h1 : x + 1 = 4) : 2 * x = 6 := by\n"
            "  intros\n  solve_by_elim (config := { maxDepth := 6 }) [fact_1, lemma_1, lemma_2]\n");
  std::string seq = compose_final_proof("import Mathlib", r, in, CompositionStrategy::Sequential);
  EXPECT_NE(seq.find("repeat' (first | assumption | apply lemma_2 | apply lemma_1 | apply fact_1)"), std::string::npos);

  r.derivation_order = {3};
  EXPECT_THROW(compose_final_proof("", r, in), Error);
}

TEST(Compose, FallsBackThenFails) {
  LinkResult r;
  r.status = LinkStatus::Reachable;
  r.derivation_order = {1};
  LinkInputs in;
  in.lemmas[1] = proved("lemma_1", "theorem lemma_1 : True", "by trivial");
  in.goal.name = "main_goal";
  in.goal.code = "theorem main_goal : True";
  BackendConfig cfg;

  StubBackend elim_fails(json::array({{{"contains", "solve_by_elim"}, {"status", "Error"}}}), 10.0);
  auto attempts = compose_and_check(elim_fails, cfg, r, in);
  ASSERT_EQ(attempts.size(), 2u);
  EXPECT_EQ(attempts[0].strategy, CompositionStrategy::Elimination);
  EXPECT_FALSE(attempts[0].compile.ok());
  EXPECT_EQ(attempts[1].strategy, CompositionStrategy::Sequential);
  EXPECT_TRUE(attempts[1].compile.ok());

  StubBackend all_fail(json::array({{{"contains", "main_goal"}, {"status", "Error"}}}), 10.0);
  try {
    compose_and_check(all_fail, cfg, r, in);
    FAIL();
  } catch (const CompositionCompileError& e) {
    EXPECT_EQ(e.attempts().size(), 2u);
  }
}
