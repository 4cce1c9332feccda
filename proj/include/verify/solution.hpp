#pragma once

// Structured-solution model: the lemma-form grammar, its parser and
// serializer, and the normalization / premise-classification passes that
// run before anything is formalized.

#include "verify/common.hpp"

#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace verify {

struct ProblemStatement {
  std::string id;
  std::string text;
  std::optional<std::string> answer;
  std::optional<std::string> trusted_goal;
  std::optional<bool> label;
  // Explicit list of given premises. When empty they are extracted from text.
  std::vector<std::string> givens;
};

json to_json(const ProblemStatement& p);
ProblemStatement problem_from_json(const json& j);

enum class VarType { Integer, Rational, Real, Natural, Boolean };
enum class VarOrigin { Given, Introduced };

std::string_view to_string(VarType t);
std::string_view to_string(VarOrigin o);
// Accepts the canonical names plus common spellings ("int", "nat", "ℝ", ...).
std::optional<VarType> parse_var_type(std::string_view word);

struct VariableDecl {
  std::string name;
  VarType vartype = VarType::Integer;
  VarOrigin origin = VarOrigin::Given;

  bool operator==(const VariableDecl&) const = default;
};

// Canonical form used for statement identity: whitespace only between two
// word characters, logical keywords lower-cased, trailing period dropped.
std::string canonical_statement_text(std::string_view text);

struct Statement {
  std::string text;
  std::string sid;

  static Statement make(std::string_view text);
  bool empty() const { return text.empty(); }
  bool operator==(const Statement&) const = default;
};

enum class ProvenanceKind { Unknown, Given, Fact, PriorLemma };
std::string_view to_string(ProvenanceKind k);

struct Provenance {
  ProvenanceKind kind = ProvenanceKind::Unknown;
  // Given: 1-based position in the problem's given list (0 = tagged but
  // unresolved). PriorLemma: cited lemma index.
  int index = 0;

  static Provenance given(int k) { return {ProvenanceKind::Given, k}; }
  static Provenance fact() { return {ProvenanceKind::Fact, 0}; }
  static Provenance prior_lemma(int j) { return {ProvenanceKind::PriorLemma, j}; }

  bool operator==(const Provenance&) const = default;
};

struct Premise {
  Statement statement;
  Provenance provenance;

  bool operator==(const Premise&) const = default;
};

struct Lemma {
  int index = 0;
  std::vector<Premise> premises;
  Statement conclusion;

  bool operator==(const Lemma&) const = default;
};

struct StructuredSolution {
  std::string problem_id;
  std::vector<VariableDecl> variables;
  std::vector<Lemma> lemmas;
  Statement goal;
  std::string raw_text;

  // Structural equality ignores raw_text.
  bool same_structure(const StructuredSolution& other) const;
  // The last conclusion differs from the goal, so linking needs a bridge.
  bool needs_final_gap_repair() const;
};

json to_json(const StructuredSolution& s);
StructuredSolution solution_from_json(const json& j);

class ParseError : public Error {
 public:
  ParseError(ErrorCode code, int line, int column, std::string detail);

  int line() const { return line_; }
  int column() const { return column_; }
  // Lemma index for MalformedLemmaBlock, variable name for UnknownVariableType.
  const std::string& detail() const { return detail_; }

 private:
  int line_;
  int column_;
  std::string detail_;
};

// Throws ParseError.
StructuredSolution parse_structured_solution(std::string_view text,
                                             std::string problem_id = {});

// Renders the solution back into the keyword-block grammar.
std::string to_text(const StructuredSolution& s);

struct RewriteRule {
  std::string pattern;
  std::string replacement;
};

std::vector<RewriteRule> rewrite_rules_from_json(const json& j);

struct NormalizeOptions {
  // Applied to every statement before splitting. Empty by default.
  std::vector<RewriteRule> rewrites;
};

// Splits top-level conjunctions, removes tautological lemmas, renumbers.
// Throws Error(NormalizationCycle) if re-pointing creates a forward reference.
StructuredSolution normalize(const StructuredSolution& s,
                             const NormalizeOptions& opts = {});

// Top-level conjuncts of a statement ("AND", "∧", or lower-case "and" between
// two relations). A single-element result means the statement is atomic.
std::vector<std::string> split_top_level_conjunction(std::string_view text);
bool is_conditional(std::string_view text);

// Problem givens in order of appearance.
std::vector<Statement> extract_givens(const ProblemStatement& p);

StructuredSolution classify_premises(const StructuredSolution& s,
                                     const ProblemStatement& p);

enum class ViolationKind {
  EmptyProof,
  NonContiguousIndex,
  EmptyConclusion,
  CompoundConclusion,
  ConditionalConclusion,
  ForwardReference,
  DanglingReference,
  ProvenanceMismatch,
  MissingGoal,
  UndeclaredVariable,
  DuplicateVariable,
};

std::string_view to_string(ViolationKind k);

struct Violation {
  ViolationKind kind;
  int at = 0;
  int cites = 0;
  std::string detail;

  bool operator==(const Violation&) const = default;
};

json to_json(const Violation& v);
std::string describe(const Violation& v);

std::vector<Violation> validate_structure(const StructuredSolution& s,
                                          bool intro_variables = false);

// Identifier tokens that look like variables in a math context.
std::vector<std::string> variable_like_tokens(std::string_view text);

}  // namespace verify
