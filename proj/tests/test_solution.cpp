#include "test_util.hpp"

#include "verify/solution.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace verify;

namespace {

std::vector<std::filesystem::path> corpus() {
  std::vector<std::filesystem::path> out;
  for (auto& f : std::filesystem::directory_iterator(testutil::data("solutions")))
    if (f.path().extension() == ".txt") out.push_back(f.path());
  std::sort(out.begin(), out.end());
  return out;
}

StructuredSolution parse_file(const std::filesystem::path& p) { return parse_structured_solution(read_file(p.string())); }

}  // namespace

TEST(Grammar, CorpusIsLargeEnough) { EXPECT_GE(corpus().size(), 25u); }

TEST(Grammar, RoundTripOverCorpus) {
  for (auto& f : corpus()) {
    SCOPED_TRACE(f.filename().string());
    StructuredSolution a = parse_file(f);
    StructuredSolution b = parse_structured_solution(to_text(a));
    EXPECT_TRUE(a.same_structure(b)) << to_text(a);
  }
}

TEST(Grammar, JsonRoundTripOverCorpus) {
  for (auto& f : corpus()) {
    SCOPED_TRACE(f.filename().string());
    StructuredSolution a = parse_file(f);
    EXPECT_TRUE(a.same_structure(solution_from_json(to_json(a))));
  }
}

TEST(Grammar, SingleGivenExample) {
  auto s = parse_structured_solution(
      "VARIABLES: x : integer (given)\nLEMMA 1: PREMISES: [GIVEN] 3*x = 9; CONCLUSION: x = 3\nGOAL: x = 3");
  ASSERT_EQ(s.variables.size(), 1u);
  EXPECT_EQ(s.variables[0].name, "x");
  EXPECT_EQ(s.variables[0].vartype, VarType::Integer);
  ASSERT_EQ(s.lemmas.size(), 1u);
  ASSERT_EQ(s.lemmas[0].premises.size(), 1u);
  EXPECT_EQ(s.lemmas[0].premises[0].statement.text, "3*x = 9");
  EXPECT_EQ(s.lemmas[0].premises[0].provenance.kind, ProvenanceKind::Given);
  EXPECT_EQ(s.lemmas[0].conclusion.text, "x = 3");
  EXPECT_EQ(s.goal.text, "x = 3");
}

TEST(Grammar, TriangularProvenance) {
  auto s = parse_file(testutil::data("solutions/02_triangular.txt"));
  ASSERT_EQ(s.lemmas.size(), 3u);
  auto kinds = [&](int i) {
    std::vector<std::pair<ProvenanceKind, int>> out;
    for (auto& p : s.lemmas[i].premises) out.push_back({p.provenance.kind, p.provenance.index});
    return out;
  };
  using P = std::vector<std::pair<ProvenanceKind, int>>;
  EXPECT_EQ(kinds(1), (P{{ProvenanceKind::PriorLemma, 1}}));
  EXPECT_EQ(kinds(2), (P{{ProvenanceKind::PriorLemma, 1}, {ProvenanceKind::PriorLemma, 2}, {ProvenanceKind::Given, 0}}));
}

TEST(Grammar, ErrorsCarryPositionAndCode) {
  try {
    parse_structured_solution("GOAL: 0 = 0");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoLemmasFound);
    EXPECT_GE(e.line(), 1);
  }
  try {
    parse_structured_solution("LEMMA 1:\nPREMISES:\n[GIVEN] a = 1\nCONCLUSION: a = 1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingGoal);
  }
  try {
    parse_structured_solution("LEMMA 1:\nPREMISES:\n[GIVEN] a = 1\nLEMMA 2:\nPREMISES: a = 1\nCONCLUSION: b = 2\nGOAL: b = 2");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedLemmaBlock);
    EXPECT_EQ(e.detail(), "1");
    EXPECT_EQ(e.line(), 1);
  }
  try {
    parse_structured_solution("VARIABLES:\nz : matrix (given)\nLEMMA 1:\nPREMISES: a\nCONCLUSION: b\nGOAL: b");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownVariableType);
    EXPECT_EQ(e.detail(), "z");
    EXPECT_GE(e.line(), 1);
  }
  EXPECT_THROW(parse_structured_solution("   \n"), ParseError);
}

TEST(Grammar, ThinkBlocksAreIgnored) {
  auto s = parse_file(testutil::data("solutions/06_think_block.txt"));
  ASSERT_EQ(s.lemmas.size(), 1u);
  EXPECT_EQ(s.lemmas[0].conclusion.text, "p + p = 10");
}

TEST(Grammar, BareCitationTakesCitedConclusion) {
  auto s = parse_file(testutil::data("solutions/13_bare_citation.txt"));
  ASSERT_EQ(s.lemmas[1].premises.size(), 1u);
  EXPECT_EQ(s.lemmas[1].premises[0].statement.text, "q / 2 = 4");
  EXPECT_EQ(s.lemmas[1].premises[0].provenance.index, 1);
}

TEST(Grammar, MultilineConclusionJoined) {
  auto s = parse_file(testutil::data("solutions/16_multiline_conclusion.txt"));
  EXPECT_EQ(s.lemmas[0].conclusion.text, "w / 5 = 2");
}

TEST(Statement, SidIgnoresWhitespaceAndKeywordCase) {
  EXPECT_EQ(Statement::make("x + 1 = 4").sid, Statement::make("x+1  =  4").sid);
  EXPECT_EQ(Statement::make("a = 1 AND b = 2").sid, Statement::make("a = 1 and b = 2").sid);
  EXPECT_EQ(Statement::make("x = 3.").sid, Statement::make("x = 3").sid);
  EXPECT_NE(Statement::make("x = 3").sid, Statement::make("x = 4").sid);
  EXPECT_NE(Statement::make("ab = 1").sid, Statement::make("a b = 1").sid);
}

TEST(Normalize, ConjunctionSplitsIntoSiblings) {
  auto s = normalize(parse_structured_solution(
      "LEMMA 1:\nPREMISES:\n[GIVEN] x + y = 7\nCONCLUSION: x = 3 AND y = 4\nGOAL: y = 4"));
  ASSERT_EQ(s.lemmas.size(), 2u);
  EXPECT_EQ(s.lemmas[0].conclusion.text, "x = 3");
  EXPECT_EQ(s.lemmas[1].conclusion.text, "y = 4");
  EXPECT_EQ(s.lemmas[0].premises, s.lemmas[1].premises);
  EXPECT_EQ(s.lemmas[0].index, 1);
  EXPECT_EQ(s.lemmas[1].index, 2);
}

TEST(Normalize, CitationsFollowTheSplitPiece) {
  auto s = normalize(parse_file(testutil::data("solutions/10_conjunction.txt")));
  ASSERT_EQ(s.lemmas.size(), 3u);
  ASSERT_EQ(s.lemmas[2].premises.size(), 2u);
  EXPECT_EQ(s.lemmas[2].premises[0].provenance.index, 1);
  EXPECT_EQ(s.lemmas[2].premises[1].provenance.index, 2);
}

TEST(Normalize, ChainedSplitRenumbersDownstream) {
  auto s = normalize(parse_file(testutil::data("solutions/27_split_chain.txt")));
  ASSERT_EQ(s.lemmas.size(), 4u);
  EXPECT_EQ(s.lemmas[3].index, 4);
  EXPECT_EQ(s.lemmas[3].premises[0].provenance.index, 3);
}

TEST(Normalize, TautologyRemovedAndRepointed) {
  auto s = normalize(parse_file(testutil::data("solutions/12_tautology.txt")));
  ASSERT_EQ(s.lemmas.size(), 1u);
  EXPECT_EQ(s.lemmas[0].index, 1);
  EXPECT_EQ(s.lemmas[0].conclusion.text, "2 * x = 6");
  // Lemma 1 restated its given; the citation now points at the given.
  EXPECT_EQ(s.lemmas[0].premises[0].provenance.kind, ProvenanceKind::Given);
}

TEST(Normalize, UnicodeConjunction) {
  auto s = normalize(parse_file(testutil::data("solutions/11_unicode_and.txt")));
  ASSERT_EQ(s.lemmas.size(), 2u);
  EXPECT_EQ(s.lemmas[0].conclusion.text, "u > 0");
  EXPECT_EQ(s.lemmas[1].conclusion.text, "u < 2");
}

TEST(Normalize, ConjunctionInsideParenthesesKept) {
  auto s = normalize(parse_file(testutil::data("solutions/23_conj_in_parens.txt")));
  ASSERT_EQ(s.lemmas.size(), 1u);
  EXPECT_EQ(s.lemmas[0].conclusion.text, "f(c AND d) = 5");
}

TEST(Normalize, ProseAndNotSplit) {
  EXPECT_EQ(split_top_level_conjunction("a and b are integers").size(), 1u);
  EXPECT_EQ(split_top_level_conjunction("x = 1 and y = 2").size(), 2u);
  EXPECT_EQ(split_top_level_conjunction("x = 1 /\\ y = 2").size(), 2u);
}

TEST(Normalize, NoTopLevelConjunctionOrTautologyAfterwards) {
  for (auto& f : corpus()) {
    SCOPED_TRACE(f.filename().string());
    auto s = normalize(parse_file(f));
    for (size_t i = 0; i < s.lemmas.size(); ++i) {
      EXPECT_EQ(s.lemmas[i].index, static_cast<int>(i) + 1);
      EXPECT_EQ(split_top_level_conjunction(s.lemmas[i].conclusion.text).size(), 1u);
      for (auto& p : s.lemmas[i].premises) EXPECT_NE(p.statement.sid, s.lemmas[i].conclusion.sid);
    }
  }
}

TEST(Normalize, IdempotentOverCorpus) {
  for (auto& f : corpus()) {
    SCOPED_TRACE(f.filename().string());
    auto once = normalize(parse_file(f));
    auto twice = normalize(once);
    EXPECT_EQ(canonical_dump(to_json(once)), canonical_dump(to_json(twice)));
  }
}

TEST(Normalize, CycleReported) {
  // Lemma 2 restates its premise from lemma 3, so its citations would have to
  // point forward.
  auto s = parse_structured_solution(
      "LEMMA 1:\nPREMISES:\n[GIVEN] a = 1\nCONCLUSION: b = 2\n"
      "LEMMA 2:\nPREMISES:\n[LEMMA 3] c = 3\nCONCLUSION: c = 3\n"
      "LEMMA 3:\nPREMISES:\n[LEMMA 2] c = 3\nCONCLUSION: d = 4\nGOAL: d = 4");
  EXPECT_THROW(
      {
        try {
          normalize(s);
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::NormalizationCycle);
          throw;
        }
      },
      Error);
}

TEST(Normalize, RewriteRulesApplied) {
  NormalizeOptions o;
  o.rewrites = {{R"(\bequals\b)", "="}};
  auto s = normalize(parse_structured_solution("LEMMA 1:\nPREMISES:\n[GIVEN] a equals 1\nCONCLUSION: b equals 2\nGOAL: b = 2"), o);
  EXPECT_EQ(s.lemmas[0].conclusion.text, "b = 2");
  EXPECT_EQ(s.lemmas[0].premises[0].statement.text, "a = 1");
}

TEST(Classify, GivenFactAndPriorLemma) {
  ProblemStatement p;
  p.id = "p";
  p.text = "Suppose 3*x = 9. Find x.";
  auto s = classify_premises(
      normalize(parse_structured_solution("LEMMA 1:\nPREMISES:\n3*x = 9\n2 + 2 = 4\nCONCLUSION: x = 3\n"
                                          "LEMMA 2:\nPREMISES:\nx = 3\nCONCLUSION: x + 1 = 4\n"
                                          "LEMMA 3:\nPREMISES:\nx = 3\nx + 1 = 4\nCONCLUSION: x + 2 = 5\nGOAL: x + 2 = 5")),
      p);
  EXPECT_EQ(s.lemmas[0].premises[0].provenance.kind, ProvenanceKind::Given);
  EXPECT_EQ(s.lemmas[0].premises[0].provenance.index, 1);
  EXPECT_EQ(s.lemmas[0].premises[1].provenance.kind, ProvenanceKind::Fact);
  EXPECT_EQ(s.lemmas[2].premises[0].provenance.kind, ProvenanceKind::PriorLemma);
  EXPECT_EQ(s.lemmas[2].premises[0].provenance.index, 1);
  EXPECT_EQ(s.lemmas[2].premises[1].provenance.index, 2);
}

TEST(Classify, TotalPartition) {
  ProblemStatement p;
  p.id = "p";
  p.text = "Let a + b = 10 and a - b = 2.";
  for (auto& f : corpus()) {
    SCOPED_TRACE(f.filename().string());
    auto s = classify_premises(normalize(parse_file(f)), p);
    for (auto& l : s.lemmas)
      for (auto& pr : l.premises) EXPECT_NE(pr.provenance.kind, ProvenanceKind::Unknown);
  }
}

TEST(Classify, MismatchedGivenTagIsAViolation) {
  ProblemStatement p;
  p.id = "p";
  p.text = "Let y = 2.";
  auto s = classify_premises(
      normalize(parse_structured_solution("LEMMA 1:\nPREMISES:\n[GIVEN] y = 5\nCONCLUSION: y + 1 = 6\nGOAL: y + 1 = 6")), p);
  auto v = validate_structure(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::ProvenanceMismatch);
}

TEST(Givens, ExtractedFromText) {
  ProblemStatement p;
  p.text = "Let $x$ be a real number such that 3*x = 9, and y = 2.5. Compute x + y.";
  auto g = extract_givens(p);
  std::vector<std::string> texts;
  for (auto& s : g) texts.push_back(s.text);
  EXPECT_NE(std::find(texts.begin(), texts.end(), "3*x = 9"), texts.end());
  EXPECT_NE(std::find(texts.begin(), texts.end(), "y = 2.5"), texts.end());
}

TEST(Validate, WellFormedIsClean) {
  ProblemStatement p;
  p.text = "Suppose 3*x = 9.";
  auto s = classify_premises(normalize(parse_file(testutil::data("solutions/01_single_given.txt"))), p);
  EXPECT_TRUE(validate_structure(s, true).empty());
}

TEST(Validate, ForwardReference) {
  StructuredSolution s;
  Lemma l1;
  l1.index = 1;
  l1.premises.push_back({Statement::make("b = 1"), Provenance::prior_lemma(2)});
  l1.conclusion = Statement::make("a = 1");
  Lemma l2;
  l2.index = 2;
  l2.premises.push_back({Statement::make("c = 1"), Provenance::fact()});
  l2.conclusion = Statement::make("b = 1");
  s.lemmas = {l1, l2};
  s.goal = Statement::make("a = 1");
  auto v = validate_structure(s);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, ViolationKind::ForwardReference);
  EXPECT_EQ(v[0].at, 1);
  EXPECT_EQ(v[0].cites, 2);
}

TEST(Validate, UndeclaredVariableUnderIntroVars) {
  auto s = normalize(parse_structured_solution(
      "VARIABLES:\nx : integer (given)\nLEMMA 1:\nPREMISES:\n[FACT] x + z = 3\nCONCLUSION: x = 3 - z\nGOAL: x = 3 - z"));
  auto v = validate_structure(s, true);
  ASSERT_FALSE(v.empty());
  EXPECT_EQ(v[0].kind, ViolationKind::UndeclaredVariable);
  EXPECT_EQ(v[0].detail, "z");
  EXPECT_TRUE(validate_structure(s, false).empty());
}

TEST(Validate, ConditionalConclusion) {
  auto s = normalize(parse_structured_solution(
      "LEMMA 1:\nPREMISES:\n[FACT] n > 0\nCONCLUSION: if n is even then n = 2k else n = 2k + 1\nGOAL: n = 2k"));
  auto v = validate_structure(s);
  bool found = false;
  for (auto& x : v) found |= x.kind == ViolationKind::ConditionalConclusion;
  EXPECT_TRUE(found);
  EXPECT_FALSE(is_conditional("x = 1 if and only if y = 1"));
}

TEST(Variables, TypeSpellings) {
  EXPECT_EQ(parse_var_type("int"), VarType::Integer);
  EXPECT_EQ(parse_var_type("ℝ"), VarType::Real);
  EXPECT_EQ(parse_var_type("natural"), VarType::Natural);
  EXPECT_EQ(parse_var_type("rational"), VarType::Rational);
  EXPECT_EQ(parse_var_type("boolean"), VarType::Boolean);
  EXPECT_FALSE(parse_var_type("matrix").has_value());
}
