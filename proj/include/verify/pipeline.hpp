#pragma once

// One verification run as an event-sourced state machine. advance() performs
// at most one external effect (an agent call or a compile) and appends exactly
// one event; reduce() folds events into state without side effects, so a
// persisted log replays to the identical state.

#include "verify/agents.hpp"
#include "verify/config.hpp"
#include "verify/linker.hpp"
#include "verify/prover_backend.hpp"
#include "verify/solution.hpp"

#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace verify {

enum class Mode { Automatic, Interactive };
std::string_view to_string(Mode m);
Mode mode_from(std::string_view s);

enum class Phase {
  AwaitingSolve,
  AnalyzingStructure,
  FormalizingFacts,
  ProvingFacts,
  FormalizingLemmas,
  CheckingTranslation,
  ProvingLemmas,
  Linking,
  AwaitingDecision,
  Finished,
};
std::string_view to_string(Phase p);
Phase phase_from(std::string_view s);
const std::vector<Phase>& all_phases();

enum class VerdictKind { Verified, VerifiedTrivial, Refuted, Inconclusive };
std::string_view to_string(VerdictKind k);
VerdictKind verdict_kind_from(std::string_view s);
// Higher is more favorable to the solution.
int favorability(VerdictKind k);

struct Verdict {
  VerdictKind kind = VerdictKind::Inconclusive;
  std::optional<std::string> failing_step;  // phase name
  std::string target;                        // e.g. "fact:1", "lemma:2", "goal"
  std::string reason;
  std::vector<std::string> assumed_facts;    // sids

  bool positive() const { return kind == VerdictKind::Verified || kind == VerdictKind::VerifiedTrivial; }
};

json to_json(const Verdict& v);
Verdict verdict_from_json(const json& j);

enum class DecisionKind {
  ContinueWithoutFact,
  AcceptWithoutProof,
  MarkFalseAndStop,
  RetryProver,
  ProvideTranslation,
  ProvideFormalization,
  StopNegative,
};
std::string_view to_string(DecisionKind k);
DecisionKind decision_kind_from(std::string_view s);
const std::vector<DecisionKind>& all_decision_kinds();

struct Decision {
  DecisionKind kind = DecisionKind::StopNegative;
  std::string code;  // ProvideTranslation / ProvideFormalization only
};

json to_json(const Decision& d);
Decision decision_from_json(const json& j);

enum class ContextKind { ProofFailure, CompileFailure, TranslationCheckFailure };
std::string_view to_string(ContextKind k);

const std::vector<DecisionKind>& legal_decisions(ContextKind k);

struct DecisionContext {
  ContextKind kind = ContextKind::ProofFailure;
  Phase phase = Phase::ProvingFacts;
  std::string target;
  std::string statement;  // natural-language text
  std::string code;       // formal statement (and proof when one was tried)
  std::vector<Diagnostic> diagnostics;
  Verdict fallback;  // what StopNegative yields: the automatic-mode outcome
};

json to_json(const DecisionContext& c);
DecisionContext decision_context_from_json(const json& j);

enum class EventKind { StepStarted, AgentCalled, CompileChecked, DecisionRequested, DecisionApplied, VerdictReached };
std::string_view to_string(EventKind k);

struct CompileRecord {
  std::string id;
  std::string target;
  std::string purpose;  // statement | proof | trivial | compose
  std::string code;
  std::optional<std::string> proof;  // proof term, for purpose = proof
  std::optional<std::string> strategy;  // compose only
  CompileResult result;
  std::optional<ErrorCode> error;  // BackendUnavailable: no result
};

json to_json(const CompileRecord& r);
CompileRecord compile_record_from_json(const json& j);

struct SessionEvent {
  int64_t seq = 0;
  double timestamp = 0.0;
  int pass = 0;
  EventKind kind = EventKind::StepStarted;
  Phase phase = Phase::AwaitingSolve;
  std::string target;
  std::string purpose;  // AgentCalled: solve | formalize | prove
  std::optional<AgentTranscript> transcript;
  std::optional<CompileRecord> compile;
  std::optional<DecisionContext> context;
  std::optional<Decision> decision;
  std::optional<Verdict> verdict;
  bool final = false;
};

json to_json(const SessionEvent& e);
SessionEvent event_from_json(const json& j);

// A statement the pipeline formalizes: a fact, a lemma (or the bridge), or
// the goal.
struct WorkItem {
  enum class Kind { Fact, Lemma, Goal };
  Kind kind = Kind::Fact;
  int number = 0;  // fact k (1-based) or lemma index; 0 for the goal
  Statement statement;
  std::vector<Statement> hypotheses;  // translator hypotheses
  std::vector<Statement> context;     // translator reference context
  Formalization form;
  int proof_attempts = 0;
  bool dropped = false;
  bool user_code = false;
  bool trusted = false;
  bool bridge = false;
  bool translation_checked = false;
  std::optional<std::string> pending_proof;  // extracted prover output awaiting compile
  std::string raw_code;                      // translator output before renaming
  std::vector<std::string> translation_issues;

  std::string target() const;
};

json to_json(const WorkItem& w);

struct StepRecord {
  Phase phase = Phase::AwaitingSolve;
  std::string target;
  int64_t started_seq = 0;
  double started_at = 0.0;
  double finished_at = 0.0;
  std::vector<std::string> transcripts;
  std::vector<std::string> compiles;
  std::string outcome;
  std::vector<Diagnostic> diagnostics;
};

struct PassState {
  bool intro_vars = false;
  Phase phase = Phase::AwaitingSolve;
  std::string target;
  bool need_announce = true;

  std::string raw_solution;
  std::optional<StructuredSolution> solution;  // normalized and classified
  std::vector<Violation> violations;
  std::vector<WorkItem> facts;
  std::vector<WorkItem> lemmas;
  WorkItem goal;
  std::optional<bool> trivial;
  bool trivial_done = false;
  bool bridge_tried = false;
  std::optional<SolutionHypergraph> graph;
  std::optional<LinkResult> link;
  std::vector<CompileRecord> compose_attempts;
  std::optional<std::string> final_proof;  // composed unit that compiled
  std::vector<std::string> assumed;        // sids accepted without proof
  std::optional<Verdict> verdict;
  bool verdict_emitted = false;
  std::optional<DecisionContext> request;  // failure awaiting a DecisionRequested event
  std::vector<StepRecord> steps;
};

// Static inputs to the reducer.
struct SessionSpec {
  std::string id;
  ProblemStatement problem;
  Mode mode = Mode::Automatic;
  PipelineConfig config;
};

json to_json(const SessionSpec& s);
SessionSpec session_spec_from_json(const json& j);

struct SessionState {
  std::vector<PassState> passes;
  size_t current = 0;
  std::optional<DecisionContext> awaiting;
  std::optional<Verdict> verdict;  // final
  std::optional<size_t> chosen_pass;
  int64_t last_seq = 0;
  int transcript_count = 0;
  int compile_count = 0;

  bool finished() const { return verdict.has_value(); }
  // Closed set: a Phase name, "AwaitingDecision" or "Finished".
  Phase current_phase() const;
};

SessionState initial_state(const SessionSpec& spec);
void reduce(const SessionSpec& spec, SessionState& state, const SessionEvent& event);
SessionState replay(const SessionSpec& spec, const std::vector<SessionEvent>& events);

using Clock = std::function<double()>;
double wall_clock();

class Session {
 public:
  using Sink = std::function<void(const SessionEvent&)>;

  Session(SessionSpec spec, std::shared_ptr<Services> services, Clock clock = wall_clock, Sink sink = {});
  // Rebuilds from a persisted log; `sink` only sees events appended later.
  static std::unique_ptr<Session> restore(SessionSpec spec, std::shared_ptr<Services> services,
                                          std::vector<SessionEvent> events, Clock clock = wall_clock,
                                          Sink sink = {});

  // Performs the next effect and appends its event. Throws
  // Error(SessionFinished) once finished; while a decision is pending only
  // apply_decision may move the session (Error(InvalidArgument)).
  SessionEvent advance();
  // Runs until finished or awaiting a decision.
  void run_until_blocked();

  SessionEvent apply_decision(const Decision& d, std::optional<int64_t> expected_seq = std::nullopt);

  const SessionSpec& spec() const { return spec_; }
  SessionState state() const;
  std::vector<SessionEvent> events() const;
  std::vector<SessionEvent> events_since(int64_t since) const;
  bool finished() const;
  bool awaiting_decision() const;
  int64_t last_seq() const;

 private:
  SessionEvent emit(SessionEvent e, std::optional<int> pass = std::nullopt);
  SessionEvent plan_and_execute();

  SessionSpec spec_;
  std::shared_ptr<Services> services_;
  Clock clock_;
  Sink sink_;
  std::mutex write_mu_;  // single writer: advance / apply_decision
  mutable std::mutex mu_;  // guards state_ and events_ for readers
  SessionState state_;
  std::vector<SessionEvent> events_;
};

// Report ----------------------------------------------------------------------

inline constexpr int kReportSchemaVersion = 1;

json build_report(const SessionSpec& spec, const SessionState& state, const std::vector<SessionEvent>& events);
std::string render_report(const json& report);
// Drops wall-clock fields (timestamps, latencies, per-step durations).
json strip_timing(const json& j);

// Convenience: a fresh automatic session driven to completion.
json run_automatic(const ProblemStatement& prob, const PipelineConfig& cfg, const ServiceFactory& factory,
                   Clock clock = wall_clock);

}  // namespace verify
