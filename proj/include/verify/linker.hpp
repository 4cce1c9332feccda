#pragma once

// Solution hypergraph: statements are nodes, lemmas are hyperedges from their
// premise set to their conclusion. Linking asks whether the goal lies in the
// forward-chaining closure of the established sources, then stitches the
// proven pieces into one compilation unit.

#include "verify/common.hpp"
#include "verify/prover_backend.hpp"
#include "verify/solution.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace verify {

enum class NodeKind { Given, Fact, LemmaConclusion, Goal };
std::string_view to_string(NodeKind k);

struct HyperNode {
  Statement statement;
  NodeKind kind = NodeKind::Fact;
  int lemma_index = 0;  // LemmaConclusion only
};

struct HyperEdge {
  std::vector<std::string> premises;  // sids, first-occurrence order, no repeats
  std::string conclusion;
  int lemma_index = 0;
};

struct SolutionHypergraph {
  std::map<std::string, HyperNode> nodes;
  std::vector<HyperEdge> edges;
  std::string goal_sid;
  std::vector<std::string> warnings;  // DuplicateConclusion notes

  bool is_source(const std::string& sid) const;
  std::vector<std::string> sources() const;
  const HyperEdge* edge(int lemma_index) const;
};

SolutionHypergraph build_hypergraph(const StructuredSolution& sol);

// Copy of g without the hyperedges of the given lemmas.
SolutionHypergraph without_edges(const SolutionHypergraph& g, const std::set<int>& lemma_indices);

json to_json(const SolutionHypergraph& g);
std::string to_dot(const SolutionHypergraph& g);

enum class LinkStatus { Reachable, Blocked };
std::string_view to_string(LinkStatus s);

struct LinkResult {
  LinkStatus status = LinkStatus::Blocked;
  std::set<std::string> established;
  std::set<std::string> missing;  // Blocked only
  std::vector<int> derivation_order;
};

json to_json(const LinkResult& r);

// Forward-chaining fixpoint. Given nodes are always established; Fact nodes
// are established when listed in `established_facts`, or all of them when it
// is absent (pure structural mode).
LinkResult check_reachability(const SolutionHypergraph& g,
                              const std::optional<std::set<std::string>>& established_facts = std::nullopt);

// Bridge lemma for a goal that is only missing its final hop; nothing in
// every other case.
std::optional<Lemma> final_gap_repair(const SolutionHypergraph& g, const LinkResult& r);

enum class CompositionStrategy { Elimination, Sequential };
std::string_view to_string(CompositionStrategy s);

struct LinkInputs {
  std::vector<Formalization> facts;           // established facts, in fact order
  std::map<int, Formalization> lemmas;        // lemma index -> formalization
  Formalization goal;                          // named main_goal
};

// One unit: prelude, established facts, lemmas in derivation order, and the
// main theorem closed by chaining over the lemma names.
std::string compose_final_proof(const std::string& prelude, const LinkResult& r, const LinkInputs& in,
                                CompositionStrategy strategy = CompositionStrategy::Elimination);

struct CompositionAttempt {
  CompositionStrategy strategy = CompositionStrategy::Elimination;
  std::string unit;
  CompileResult compile;
};

class CompositionCompileError : public Error {
 public:
  CompositionCompileError(std::string message, std::vector<CompositionAttempt> attempts)
      : Error(ErrorCode::CompositionCompileError, message), attempts_(std::move(attempts)) {}
  const std::vector<CompositionAttempt>& attempts() const { return attempts_; }

 private:
  std::vector<CompositionAttempt> attempts_;
};

// Tries the elimination tactic, then sequential application. Returns every
// attempt made, the last one compiling; throws CompositionCompileError when
// none does.
std::vector<CompositionAttempt> compose_and_check(ProofBackend& backend, const BackendConfig& cfg,
                                                  const LinkResult& r, const LinkInputs& in);

}  // namespace verify
