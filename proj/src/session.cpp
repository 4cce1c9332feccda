#include "verify/pipeline.hpp"

#include "verify/formal_code.hpp"

#include <algorithm>
#include <chrono>

namespace verify {

// --- enums and JSON ----------------------------------------------------------

std::string_view to_string(Mode m) { return m == Mode::Automatic ? "auto" : "interactive"; }

Mode mode_from(std::string_view s) {
  std::string l = to_lower(s);
  if (l == "auto" || l == "automatic") return Mode::Automatic;
  if (l == "interactive") return Mode::Interactive;
  throw Error(ErrorCode::InvalidArgument, "mode must be auto or interactive, got " + std::string(s));
}

const std::vector<Phase>& all_phases() {
  static const std::vector<Phase> kAll = {
      Phase::AwaitingSolve,       Phase::AnalyzingStructure, Phase::FormalizingFacts, Phase::ProvingFacts,
      Phase::FormalizingLemmas,   Phase::CheckingTranslation, Phase::ProvingLemmas,   Phase::Linking,
      Phase::AwaitingDecision,    Phase::Finished};
  return kAll;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::AwaitingSolve: return "AwaitingSolve";
    case Phase::AnalyzingStructure: return "AnalyzingStructure";
    case Phase::FormalizingFacts: return "FormalizingFacts";
    case Phase::ProvingFacts: return "ProvingFacts";
    case Phase::FormalizingLemmas: return "FormalizingLemmas";
    case Phase::CheckingTranslation: return "CheckingTranslation";
    case Phase::ProvingLemmas: return "ProvingLemmas";
    case Phase::Linking: return "Linking";
    case Phase::AwaitingDecision: return "AwaitingDecision";
    case Phase::Finished: return "Finished";
  }
  return "?";
}

Phase phase_from(std::string_view s) {
  for (Phase p : all_phases())
    if (to_string(p) == s) return p;
  throw Error(ErrorCode::InvalidArgument, "unknown phase " + std::string(s));
}

std::string_view to_string(VerdictKind k) {
  switch (k) {
    case VerdictKind::Verified: return "Verified";
    case VerdictKind::VerifiedTrivial: return "VerifiedTrivial";
    case VerdictKind::Refuted: return "Refuted";
    case VerdictKind::Inconclusive: return "Inconclusive";
  }
  return "?";
}

VerdictKind verdict_kind_from(std::string_view s) {
  for (auto k : {VerdictKind::Verified, VerdictKind::VerifiedTrivial, VerdictKind::Refuted, VerdictKind::Inconclusive})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown verdict " + std::string(s));
}

int favorability(VerdictKind k) {
  switch (k) {
    case VerdictKind::Verified: return 3;
    case VerdictKind::VerifiedTrivial: return 2;
    case VerdictKind::Inconclusive: return 1;
    case VerdictKind::Refuted: return 0;
  }
  return 0;
}

json to_json(const Verdict& v) {
  json j = {{"kind", to_string(v.kind)}, {"target", v.target}, {"reason", v.reason}, {"assumed_facts", v.assumed_facts}};
  j["failing_step"] = v.failing_step ? json(*v.failing_step) : json(nullptr);
  return j;
}

Verdict verdict_from_json(const json& j) {
  Verdict v;
  v.kind = verdict_kind_from(j.at("kind").get<std::string>());
  if (j.contains("failing_step") && j["failing_step"].is_string()) v.failing_step = j["failing_step"].get<std::string>();
  v.target = j.value("target", "");
  v.reason = j.value("reason", "");
  if (j.contains("assumed_facts")) v.assumed_facts = j["assumed_facts"].get<std::vector<std::string>>();
  return v;
}

const std::vector<DecisionKind>& all_decision_kinds() {
  static const std::vector<DecisionKind> kAll = {
      DecisionKind::ContinueWithoutFact, DecisionKind::AcceptWithoutProof,  DecisionKind::MarkFalseAndStop,
      DecisionKind::RetryProver,         DecisionKind::ProvideTranslation,  DecisionKind::ProvideFormalization,
      DecisionKind::StopNegative};
  return kAll;
}

std::string_view to_string(DecisionKind k) {
  switch (k) {
    case DecisionKind::ContinueWithoutFact: return "ContinueWithoutFact";
    case DecisionKind::AcceptWithoutProof: return "AcceptWithoutProof";
    case DecisionKind::MarkFalseAndStop: return "MarkFalseAndStop";
    case DecisionKind::RetryProver: return "RetryProver";
    case DecisionKind::ProvideTranslation: return "ProvideTranslation";
    case DecisionKind::ProvideFormalization: return "ProvideFormalization";
    case DecisionKind::StopNegative: return "StopNegative";
  }
  return "?";
}

DecisionKind decision_kind_from(std::string_view s) {
  for (auto k : all_decision_kinds())
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::IllegalDecision, "unknown decision " + std::string(s));
}

json to_json(const Decision& d) {
  json j = {{"kind", to_string(d.kind)}};
  if (d.kind == DecisionKind::ProvideTranslation || d.kind == DecisionKind::ProvideFormalization) j["code"] = d.code;
  return j;
}

Decision decision_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
    throw Error(ErrorCode::IllegalDecision, "decision needs a string 'kind'");
  Decision d;
  d.kind = decision_kind_from(j["kind"].get<std::string>());
  if (j.contains("code")) {
    if (!j["code"].is_string()) throw Error(ErrorCode::IllegalDecision, "decision code must be a string");
    d.code = j["code"].get<std::string>();
  }
  return d;
}

std::string_view to_string(ContextKind k) {
  switch (k) {
    case ContextKind::ProofFailure: return "ProofFailure";
    case ContextKind::CompileFailure: return "CompileFailure";
    case ContextKind::TranslationCheckFailure: return "TranslationCheckFailure";
  }
  return "?";
}

static ContextKind context_kind_from(std::string_view s) {
  for (auto k : {ContextKind::ProofFailure, ContextKind::CompileFailure, ContextKind::TranslationCheckFailure})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown decision context " + std::string(s));
}

const std::vector<DecisionKind>& legal_decisions(ContextKind k) {
  static const std::vector<DecisionKind> kProof = {DecisionKind::ContinueWithoutFact, DecisionKind::AcceptWithoutProof,
                                                   DecisionKind::MarkFalseAndStop, DecisionKind::RetryProver,
                                                   DecisionKind::ProvideTranslation};
  static const std::vector<DecisionKind> kCompile = {DecisionKind::ProvideFormalization, DecisionKind::StopNegative};
  return k == ContextKind::ProofFailure ? kProof : kCompile;
}

json to_json(const DecisionContext& c) {
  json diags = json::array();
  for (auto& d : c.diagnostics) diags.push_back(to_json(d));
  json legal = json::array();
  for (auto k : legal_decisions(c.kind)) legal.push_back(to_string(k));
  return {{"kind", to_string(c.kind)}, {"phase", to_string(c.phase)}, {"target", c.target},
          {"statement", c.statement},  {"code", c.code},               {"diagnostics", diags},
          {"legal", legal},            {"fallback", to_json(c.fallback)}};
}

DecisionContext decision_context_from_json(const json& j) {
  DecisionContext c;
  c.kind = context_kind_from(j.at("kind").get<std::string>());
  c.phase = phase_from(j.at("phase").get<std::string>());
  c.target = j.value("target", "");
  c.statement = j.value("statement", "");
  c.code = j.value("code", "");
  for (auto& d : j.value("diagnostics", json::array())) c.diagnostics.push_back(diagnostic_from_json(d));
  c.fallback = verdict_from_json(j.at("fallback"));
  return c;
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::StepStarted: return "StepStarted";
    case EventKind::AgentCalled: return "AgentCalled";
    case EventKind::CompileChecked: return "CompileChecked";
    case EventKind::DecisionRequested: return "DecisionRequested";
    case EventKind::DecisionApplied: return "DecisionApplied";
    case EventKind::VerdictReached: return "VerdictReached";
  }
  return "?";
}

static EventKind event_kind_from(std::string_view s) {
  for (auto k : {EventKind::StepStarted, EventKind::AgentCalled, EventKind::CompileChecked,
                 EventKind::DecisionRequested, EventKind::DecisionApplied, EventKind::VerdictReached})
    if (to_string(k) == s) return k;
  throw Error(ErrorCode::InvalidArgument, "unknown event kind " + std::string(s));
}

json to_json(const CompileRecord& r) {
  json j = {{"id", r.id}, {"target", r.target}, {"purpose", r.purpose}, {"code", r.code}, {"result", to_json(r.result)}};
  j["proof"] = r.proof ? json(*r.proof) : json(nullptr);
  j["strategy"] = r.strategy ? json(*r.strategy) : json(nullptr);
  j["error"] = r.error ? json(to_string(*r.error)) : json(nullptr);
  return j;
}

CompileRecord compile_record_from_json(const json& j) {
  CompileRecord r;
  r.id = j.value("id", "");
  r.target = j.value("target", "");
  r.purpose = j.value("purpose", "");
  r.code = j.value("code", "");
  if (j.contains("proof") && j["proof"].is_string()) r.proof = j["proof"].get<std::string>();
  if (j.contains("strategy") && j["strategy"].is_string()) r.strategy = j["strategy"].get<std::string>();
  if (j.contains("result")) r.result = compile_result_from_json(j["result"]);
  if (j.contains("error") && j["error"].is_string()) {
    std::string e = j["error"].get<std::string>();
    r.error = e == to_string(ErrorCode::BackendUnavailable) ? ErrorCode::BackendUnavailable : ErrorCode::InvalidArgument;
  }
  return r;
}

json to_json(const SessionEvent& e) {
  json j = {{"seq", e.seq}, {"timestamp", e.timestamp}, {"pass", e.pass}, {"kind", to_string(e.kind)},
            {"phase", to_string(e.phase)}, {"target", e.target}};
  switch (e.kind) {
    case EventKind::StepStarted: break;
    case EventKind::AgentCalled:
      j["purpose"] = e.purpose;
      j["transcript"] = to_json(*e.transcript);
      break;
    case EventKind::CompileChecked: j["compile"] = to_json(*e.compile); break;
    case EventKind::DecisionRequested: j["context"] = to_json(*e.context); break;
    case EventKind::DecisionApplied: j["decision"] = to_json(*e.decision); break;
    case EventKind::VerdictReached:
      j["verdict"] = to_json(*e.verdict);
      j["final"] = e.final;
      break;
  }
  return j;
}

SessionEvent event_from_json(const json& j) {
  SessionEvent e;
  e.seq = j.at("seq").get<int64_t>();
  e.timestamp = j.value("timestamp", 0.0);
  e.pass = j.value("pass", 0);
  e.kind = event_kind_from(j.at("kind").get<std::string>());
  e.phase = phase_from(j.value("phase", "AwaitingSolve"));
  e.target = j.value("target", "");
  e.purpose = j.value("purpose", "");
  if (j.contains("transcript")) e.transcript = transcript_from_json(j["transcript"]);
  if (j.contains("compile")) e.compile = compile_record_from_json(j["compile"]);
  if (j.contains("context")) e.context = decision_context_from_json(j["context"]);
  if (j.contains("decision")) e.decision = decision_from_json(j["decision"]);
  if (j.contains("verdict")) e.verdict = verdict_from_json(j["verdict"]);
  e.final = j.value("final", false);
  return e;
}

std::string WorkItem::target() const {
  switch (kind) {
    case Kind::Fact: return "fact:" + std::to_string(number);
    case Kind::Lemma: return "lemma:" + std::to_string(number);
    case Kind::Goal: return "goal";
  }
  return "";
}

json to_json(const WorkItem& w) {
  json hyps = json::array();
  for (auto& h : w.hypotheses) hyps.push_back(h.text);
  return {{"target", w.target()},
          {"statement", w.statement.text},
          {"sid", w.statement.sid},
          {"hypotheses", hyps},
          {"formalization", to_json(w.form)},
          {"proof_attempts", w.proof_attempts},
          {"dropped", w.dropped},
          {"user_code", w.user_code},
          {"trusted", w.trusted},
          {"bridge", w.bridge},
          {"translation_issues", w.translation_issues}};
}

json to_json(const SessionSpec& s) {
  return {{"id", s.id}, {"problem", to_json(s.problem)}, {"mode", to_string(s.mode)}, {"config", to_json(s.config)}};
}

SessionSpec session_spec_from_json(const json& j) {
  SessionSpec s;
  s.id = j.at("id").get<std::string>();
  s.problem = problem_from_json(j.at("problem"));
  s.mode = mode_from(j.at("mode").get<std::string>());
  s.config = config_from_json(j.value("config", json::object()));
  return s;
}

double wall_clock() {
  return std::chrono::duration<double>(std::chrono::system_clock::now().time_since_epoch()).count();
}

Phase SessionState::current_phase() const {
  if (verdict) return Phase::Finished;
  if (awaiting) return Phase::AwaitingDecision;
  if (passes.empty()) return Phase::AwaitingSolve;
  return passes[current].phase;
}

// --- reducer -----------------------------------------------------------------

namespace {

struct Loc {
  Phase phase;
  std::string target;
};

bool needs_formalizing(const WorkItem& w) {
  return w.form.code.empty() || w.form.status == FormalStatus::Unchecked || w.form.status == FormalStatus::CompileError;
}

std::vector<WorkItem*> statement_items(PassState& p) {
  std::vector<WorkItem*> out;
  for (auto& l : p.lemmas)
    if (!l.dropped) out.push_back(&l);
  out.push_back(&p.goal);
  return out;
}

Loc next_location(PassState& p) {
  for (auto& f : p.facts) {
    if (f.dropped || f.form.established()) continue;
    if (needs_formalizing(f)) return {Phase::FormalizingFacts, f.target()};
    return {Phase::ProvingFacts, f.target()};
  }
  for (WorkItem* w : statement_items(p))
    if (needs_formalizing(*w)) return {Phase::FormalizingLemmas, w->target()};
  for (WorkItem* w : statement_items(p))
    if (!w->translation_checked) return {Phase::CheckingTranslation, w->target()};
  if (!p.trivial_done) return {Phase::CheckingTranslation, "trivial"};
  for (auto& l : p.lemmas)
    if (!l.dropped && !l.form.established()) return {Phase::ProvingLemmas, l.target()};
  return {Phase::Linking, ""};
}

void go(PassState& p, Phase phase, const std::string& target) {
  if (p.phase != phase || p.target != target) p.need_announce = true;
  p.phase = phase;
  p.target = target;
}

void schedule(PassState& p) {
  if (p.verdict) return;
  Loc l = next_location(p);
  go(p, l.phase, l.target);
}

WorkItem* find_item(PassState& p, const std::string& target) {
  if (target == "goal") return &p.goal;
  for (auto& f : p.facts)
    if (f.target() == target) return &f;
  for (auto& l : p.lemmas)
    if (l.target() == target) return &l;
  return nullptr;
}

StepRecord* current_step(PassState& p) { return p.steps.empty() ? nullptr : &p.steps.back(); }

void note(PassState& p, const std::string& outcome, const std::vector<Diagnostic>& diags = {}) {
  if (StepRecord* s = current_step(p)) {
    s->outcome = outcome;
    s->diagnostics.insert(s->diagnostics.end(), diags.begin(), diags.end());
  }
}

Verdict make_verdict(VerdictKind kind, Phase phase, const std::string& target, const std::string& reason) {
  Verdict v;
  v.kind = kind;
  if (kind == VerdictKind::Refuted || kind == VerdictKind::Inconclusive) v.failing_step = std::string(to_string(phase));
  v.target = target;
  v.reason = reason;
  return v;
}

// Failure on an item: a verdict in automatic mode, a pending decision in
// interactive mode.
void fail(const SessionSpec& spec, PassState& p, ContextKind kind, const WorkItem* item, Verdict fallback,
          const std::vector<Diagnostic>& diags, const std::string& code) {
  note(p, fallback.reason, diags);
  if (spec.mode == Mode::Automatic) {
    p.verdict = std::move(fallback);
    return;
  }
  DecisionContext c;
  c.kind = kind;
  c.phase = p.phase;
  c.target = item ? item->target() : p.target;
  c.statement = item ? item->statement.text : "";
  c.code = code;
  c.diagnostics = diags;
  c.fallback = std::move(fallback);
  p.request = std::move(c);
}

void analyze(const SessionSpec& spec, PassState& p) {
  auto inconclusive = [&](const std::string& why) {
    p.verdict = make_verdict(VerdictKind::Inconclusive, Phase::AnalyzingStructure, "", why);
    note(p, why);
  };
  StructuredSolution sol;
  try {
    sol = parse_structured_solution(p.raw_solution, spec.problem.id);
    NormalizeOptions nopts;
    nopts.rewrites = spec.config.rewrites;
    sol = normalize(sol, nopts);
    sol = classify_premises(sol, spec.problem);
  } catch (const ParseError& e) {
    return inconclusive(std::string("parse error (") + std::string(to_string(e.code())) + ") at line " +
                        std::to_string(e.line()) + ": " + e.what());
  } catch (const Error& e) {
    return inconclusive(std::string(to_string(e.code())) + ": " + e.what());
  }
  p.solution = sol;
  p.violations = validate_structure(sol, p.intro_vars);
  if (!p.violations.empty()) {
    std::string why = "solution is not of the required form:";
    for (auto& v : p.violations) why += " " + describe(v) + ";";
    why.pop_back();
    return inconclusive(why);
  }

  // Facts, numbered by first appearance.
  std::map<std::string, size_t> fact_pos;
  for (auto& l : sol.lemmas) {
    for (auto& pr : l.premises) {
      if (pr.provenance.kind != ProvenanceKind::Fact || fact_pos.count(pr.statement.sid)) continue;
      WorkItem f;
      f.kind = WorkItem::Kind::Fact;
      f.number = static_cast<int>(p.facts.size()) + 1;
      f.statement = pr.statement;
      for (auto& prior : sol.lemmas) {
        if (prior.index >= l.index) break;
        f.context.push_back(prior.conclusion);
      }
      f.form.source_sid = pr.statement.sid;
      f.form.name = "fact_" + std::to_string(f.number);
      fact_pos[pr.statement.sid] = p.facts.size();
      p.facts.push_back(std::move(f));
    }
  }
  for (auto& l : sol.lemmas) {
    WorkItem w;
    w.kind = WorkItem::Kind::Lemma;
    w.number = l.index;
    w.statement = l.conclusion;
    for (auto& pr : l.premises) w.hypotheses.push_back(pr.statement);
    w.form.source_sid = l.conclusion.sid;
    w.form.name = "lemma_" + std::to_string(l.index);
    p.lemmas.push_back(std::move(w));
  }
  WorkItem& g = p.goal;
  g.kind = WorkItem::Kind::Goal;
  g.statement = sol.goal;
  g.hypotheses = extract_givens(spec.problem);
  g.form.source_sid = sol.goal.sid;
  g.form.name = "main_goal";
  if (spec.problem.trusted_goal) {
    auto header = formal::statement_header(*spec.problem.trusted_goal, "main_goal");
    if (!header) return inconclusive("trusted goal contains no theorem declaration");
    g.form.code = *header;
    g.trusted = true;
    g.translation_checked = true;
  }
  note(p, std::to_string(sol.lemmas.size()) + " lemma(s), " + std::to_string(p.facts.size()) + " fact(s)");
  schedule(p);
}

const char* type_spellings(VarType t) {
  switch (t) {
    case VarType::Integer: return "ℤ|Int";
    case VarType::Rational: return "ℚ|Rat";
    case VarType::Real: return "ℝ|Real";
    case VarType::Natural: return "ℕ|Nat";
    case VarType::Boolean: return "Bool|Prop";
  }
  return "";
}

std::vector<std::string> translation_issues(const SessionSpec& spec, const PassState& p, const WorkItem& w) {
  std::vector<std::string> issues;
  const std::string& code = w.form.code;

  std::string text = w.statement.text;
  for (auto& h : w.hypotheses) text += "\n" + h.text;
  auto have = formal::numeric_literals(code);
  for (auto& lit : formal::numeric_literals_in_text(text))
    if (std::find(have.begin(), have.end(), lit) == have.end()) issues.push_back("numeric literal " + lit + " is missing");

  if (p.solution) {
    auto used = variable_like_tokens(text);
    for (auto& v : p.solution->variables) {
      if (std::find(used.begin(), used.end(), v.name) == used.end()) continue;
      if (!formal::mentions_identifier(code, v.name)) {
        issues.push_back("variable " + v.name + " does not appear");
        continue;
      }
      auto types = formal::binder_types(code, v.name);
      if (types.empty()) continue;
      std::string accepted = type_spellings(v.vartype);
      bool ok = false;
      for (auto& t : types) {
        size_t start = 0;
        while (start <= accepted.size()) {
          size_t bar = accepted.find('|', start);
          std::string alt = accepted.substr(start, bar == std::string::npos ? std::string::npos : bar - start);
          if (trim(t) == alt) ok = true;
          if (bar == std::string::npos) break;
          start = bar + 1;
        }
      }
      if (!ok)
        issues.push_back("variable " + v.name + " should have type " + std::string(to_string(v.vartype)) + ", found " +
                         types.front());
    }
  }

  if (formal::declarations(w.raw_code.empty() ? code : w.raw_code).size() != 1) issues.push_back("expected exactly one declaration");
  if (formal::contains_incomplete_marker(code, spec.config.backend.incomplete_markers))
    issues.push_back("statement contains an incomplete-proof marker");
  return issues;
}

void check_translation(const SessionSpec& spec, PassState& p, WorkItem& w) {
  auto issues = translation_issues(spec, p, w);
  w.translation_issues = issues;
  if (issues.empty()) {
    w.translation_checked = true;
    note(p, "translation check passed");
    schedule(p);
    return;
  }
  std::string why = "translation check failed for " + w.target() + ":";
  for (auto& i : issues) why += " " + i + ";";
  why.pop_back();
  std::vector<Diagnostic> diags;
  for (auto& i : issues) diags.push_back({Severity::Error, 0, 0, i});
  fail(spec, p, ContextKind::TranslationCheckFailure, &w,
       make_verdict(VerdictKind::Inconclusive, Phase::CheckingTranslation, w.target(), why), diags, w.form.code);
}

StructuredSolution linking_solution(const PassState& p) {
  StructuredSolution sol = *p.solution;
  for (auto& l : p.lemmas) {
    if (!l.bridge) continue;
    Lemma b;
    b.index = l.number;
    b.conclusion = l.statement;
    for (auto& h : l.hypotheses) {
      // Bridge premises are conclusions of earlier lemmas.
      for (auto& prior : sol.lemmas)
        if (prior.conclusion.sid == h.sid) {
          b.premises.push_back({h, Provenance::prior_lemma(prior.index)});
          break;
        }
    }
    sol.lemmas.push_back(b);
  }
  return sol;
}

void link(const SessionSpec& spec, PassState& p) {
  (void)spec;
  SolutionHypergraph g = build_hypergraph(linking_solution(p));
  std::set<int> dropped;
  for (auto& l : p.lemmas)
    if (l.dropped || !l.form.established()) dropped.insert(l.number);
  g = without_edges(g, dropped);
  std::set<std::string> facts;
  for (auto& f : p.facts)
    if (!f.dropped && f.form.established()) facts.insert(f.statement.sid);
  LinkResult r = check_reachability(g, facts);
  p.graph = g;
  p.link = r;
  p.compose_attempts.clear();
  if (r.status == LinkStatus::Reachable) {
    note(p, "goal reachable");
    return;
  }
  if (!p.bridge_tried) {
    if (auto bridge = final_gap_repair(g, r)) {
      p.bridge_tried = true;
      WorkItem w;
      w.kind = WorkItem::Kind::Lemma;
      w.number = bridge->index;
      w.statement = bridge->conclusion;
      w.bridge = true;
      for (auto& pr : bridge->premises) w.hypotheses.push_back(pr.statement);
      w.form.source_sid = bridge->conclusion.sid;
      w.form.name = "lemma_" + std::to_string(bridge->index);
      p.lemmas.push_back(std::move(w));
      note(p, "goal one step short; adding bridge lemma " + std::to_string(bridge->index));
      schedule(p);
      return;
    }
  }
  std::string why = "goal is not reachable from established statements; missing:";
  for (auto& sid : r.missing) {
    auto it = g.nodes.find(sid);
    why += " '" + (it != g.nodes.end() ? it->second.statement.text : sid) + "'";
  }
  note(p, why);
  p.verdict = make_verdict(VerdictKind::Refuted, Phase::Linking, "", why);
}

void on_step_started(const SessionSpec& spec, PassState& p, const SessionEvent& e) {
  p.need_announce = false;
  StepRecord s;
  s.phase = e.phase;
  s.target = e.target;
  s.started_seq = e.seq;
  s.started_at = s.finished_at = e.timestamp;
  p.steps.push_back(std::move(s));
  switch (e.phase) {
    case Phase::AnalyzingStructure: analyze(spec, p); break;
    case Phase::CheckingTranslation:
      if (e.target == "trivial") {
        if (spec.config.trivial_budget <= 0 || spec.config.backend.trivial_tactics.empty()) {
          p.trivial = false;
          p.trivial_done = true;
          note(p, "trivial check disabled");
          schedule(p);
        }
      } else if (WorkItem* w = find_item(p, e.target)) {
        check_translation(spec, p, *w);
      }
      break;
    case Phase::Linking: link(spec, p); break;
    default: break;
  }
}

void on_agent_called(const SessionSpec& spec, SessionState& st, PassState& p, const SessionEvent& e) {
  ++st.transcript_count;
  const AgentTranscript& t = *e.transcript;
  if (StepRecord* s = current_step(p)) s->transcripts.push_back(t.id);
  if (t.error) {
    std::string why = std::string(to_string(t.role)) + " call failed: " + std::string(to_string(*t.error));
    note(p, why);
    p.verdict = make_verdict(VerdictKind::Inconclusive, p.phase, e.target, why);
    return;
  }
  if (e.purpose == "solve") {
    p.raw_solution = t.response;
    note(p, "solution received");
    go(p, Phase::AnalyzingStructure, "");
    return;
  }
  WorkItem* w = find_item(p, e.target);
  if (!w) return;
  if (e.purpose == "formalize") {
    auto code = extract_code_block(t.response);
    std::optional<std::string> header;
    if (code) header = formal::statement_header(*code, w->form.name);
    if (!header) {
      fail(spec, p, ContextKind::CompileFailure, w,
           make_verdict(VerdictKind::Inconclusive, p.phase, w->target(), "Translator returned no formal statement"),
           {{Severity::Error, 0, 0, "no code block in Translator response"}}, "");
      return;
    }
    w->form.code = *header;
    w->raw_code = *code;
    w->form.status = FormalStatus::Unchecked;
    w->form.diagnostics.clear();
    note(p, "formalized");
    return;
  }
  if (e.purpose == "prove") {
    auto code = extract_code_block(t.response);
    if (code) {
      w->pending_proof = formal::proof_body(*code);
      return;
    }
    // A reply without code counts as a failed attempt.
    w->pending_proof.reset();
    ++w->proof_attempts;
    std::vector<Diagnostic> diags = {{Severity::Error, 0, 0, "no code block in Prover response"}};
    w->form.diagnostics = diags;
    if (spec.mode == Mode::Automatic && w->proof_attempts <= spec.config.prover_retries) {
      note(p, "attempt " + std::to_string(w->proof_attempts) + " failed; retrying", diags);
      return;
    }
    w->form.status = FormalStatus::ProofFailed;
    fail(spec, p, ContextKind::ProofFailure, w,
         make_verdict(VerdictKind::Refuted, p.phase, w->target(), "could not prove " + w->target()), diags,
         w->form.code);
  }
}

bool marker_outside_assumed(const SessionSpec& spec, const PassState& p) {
  auto bad = [&](const WorkItem& w) {
    if (w.dropped || w.form.status == FormalStatus::AcceptedWithoutProof || !w.form.established()) return false;
    return formal::contains_incomplete_marker(established_code(w.form), spec.config.backend.incomplete_markers);
  };
  for (auto& f : p.facts)
    if (bad(f)) return true;
  for (auto& l : p.lemmas)
    if (bad(l)) return true;
  return formal::contains_incomplete_marker(p.goal.form.code, spec.config.backend.incomplete_markers);
}

void on_compile_checked(const SessionSpec& spec, SessionState& st, PassState& p, const SessionEvent& e) {
  ++st.compile_count;
  const CompileRecord& r = *e.compile;
  if (StepRecord* s = current_step(p)) s->compiles.push_back(r.id);
  if (r.error) {
    std::string why = "proof backend unavailable";
    note(p, why, r.result.diagnostics);
    p.verdict = make_verdict(VerdictKind::Inconclusive, p.phase, e.target, why);
    return;
  }
  const auto& markers = spec.config.backend.incomplete_markers;

  if (r.purpose == "trivial") {
    p.trivial = r.result.ok() && !formal::contains_incomplete_marker(r.code, markers);
    p.trivial_done = true;
    note(p, *p.trivial ? "goal closes by automation alone" : "goal needs the structured proof");
    schedule(p);
    return;
  }

  if (r.purpose == "compose") {
    p.compose_attempts.push_back(r);
    if (r.result.ok()) {
      if (marker_outside_assumed(spec, p)) {
        std::string why = "composed proof contains an incomplete-proof marker outside assumed facts";
        note(p, why);
        p.verdict = make_verdict(VerdictKind::Inconclusive, Phase::Linking, "", why);
        return;
      }
      p.final_proof = r.code;
      Verdict v = make_verdict(p.trivial.value_or(false) ? VerdictKind::VerifiedTrivial : VerdictKind::Verified,
                               Phase::Linking, "", "");
      v.reason = p.trivial.value_or(false) ? "verified, but the goal is provable by automation alone"
                                           : "composed proof compiles";
      v.assumed_facts = p.assumed;
      if (!v.assumed_facts.empty()) v.reason += " (with facts assumed without proof)";
      note(p, "composed proof compiles (" + r.strategy.value_or("") + ")");
      p.verdict = std::move(v);
      return;
    }
    note(p, "composed proof failed (" + r.strategy.value_or("") + ")", r.result.diagnostics);
    if (p.compose_attempts.size() >= 2) {
      std::string why = "CompositionCompileError: the proven lemmas do not link into a compiling proof";
      note(p, why, {});
      p.verdict = make_verdict(VerdictKind::Inconclusive, Phase::Linking, "", why);
    }
    return;
  }

  WorkItem* w = find_item(p, e.target);
  if (!w) return;
  if (r.purpose == "statement") {
    w->form.diagnostics = r.result.diagnostics;
    if (r.result.ok()) {
      w->form.status = FormalStatus::CompileOk;
      note(p, "statement compiles");
      schedule(p);
      return;
    }
    w->form.status = FormalStatus::CompileError;
    // A broken trusted goal is an infrastructure problem, not evidence
    // against the solution.
    VerdictKind k = w->trusted ? VerdictKind::Inconclusive : VerdictKind::Refuted;
    fail(spec, p, ContextKind::CompileFailure, w,
         make_verdict(k, p.phase, w->target(), "formal statement of " + w->target() + " does not compile"),
         r.result.diagnostics, w->form.code);
    return;
  }
  if (r.purpose == "proof") {
    std::string proof = r.proof.value_or("");
    bool marker = formal::contains_incomplete_marker(w->form.code + " := " + proof, markers);
    w->pending_proof.reset();
    w->form.diagnostics = r.result.diagnostics;
    if (r.result.ok() && !marker) {
      w->form.status = FormalStatus::ProvedOk;
      w->form.proof_code = proof;
      note(p, "proved");
      schedule(p);
      return;
    }
    if (marker) w->form.diagnostics.push_back({Severity::Error, 0, 0, "proof contains an incomplete-proof marker"});
    ++w->proof_attempts;
    if (spec.mode == Mode::Automatic && w->proof_attempts <= spec.config.prover_retries) {
      note(p, "attempt " + std::to_string(w->proof_attempts) + " failed; retrying", w->form.diagnostics);
      return;
    }
    w->form.status = FormalStatus::ProofFailed;
    fail(spec, p, ContextKind::ProofFailure, w,
         make_verdict(VerdictKind::Refuted, p.phase, w->target(), "could not prove " + w->target()),
         w->form.diagnostics, w->form.code + " := " + proof);
  }
}

void on_decision(const SessionSpec& spec, SessionState& st, PassState& p, const SessionEvent& e) {
  (void)spec;
  DecisionContext ctx = *st.awaiting;
  st.awaiting.reset();
  const Decision& d = *e.decision;
  WorkItem* w = find_item(p, ctx.target);
  StepRecord s;
  s.phase = ctx.phase;
  s.target = ctx.target;
  s.started_seq = e.seq;
  s.started_at = s.finished_at = e.timestamp;
  s.outcome = "decision: " + std::string(to_string(d.kind));
  p.steps.push_back(std::move(s));

  switch (d.kind) {
    case DecisionKind::ContinueWithoutFact:
      if (w) w->dropped = true;
      break;
    case DecisionKind::AcceptWithoutProof:
      if (w) {
        w->form.status = FormalStatus::AcceptedWithoutProof;
        w->form.proof_code.reset();
        p.assumed.push_back(w->statement.sid);
      }
      break;
    case DecisionKind::MarkFalseAndStop:
      p.verdict = make_verdict(VerdictKind::Refuted, ctx.phase, ctx.target, ctx.target + " marked false by the user");
      return;
    case DecisionKind::RetryProver:
      if (w) {
        w->form.status = FormalStatus::CompileOk;
        w->pending_proof.reset();
      }
      break;
    case DecisionKind::ProvideTranslation:
    case DecisionKind::ProvideFormalization:
      if (w) {
        w->form.code = formal::statement_header(d.code, w->form.name).value_or("");
        w->form.proof_code.reset();
        w->form.status = FormalStatus::Unchecked;
        w->form.diagnostics.clear();
        w->user_code = true;
        w->translation_checked = true;
        w->translation_issues.clear();
        w->pending_proof.reset();
        w->proof_attempts = 0;
      }
      break;
    case DecisionKind::StopNegative: p.verdict = ctx.fallback; return;
  }
  // Re-enter the item's phase even when the location is unchanged.
  Loc l = next_location(p);
  p.phase = l.phase;
  p.target = l.target;
  p.need_announce = true;
}

}  // namespace

SessionState initial_state(const SessionSpec& spec) {
  SessionState st;
  auto add = [&](bool on) {
    PassState p;
    p.intro_vars = on;
    st.passes.push_back(std::move(p));
  };
  switch (spec.config.intro_vars) {
    case IntroVars::On: add(true); break;
    case IntroVars::Off: add(false); break;
    case IntroVars::Both:
      add(true);
      add(false);
      break;
  }
  return st;
}

void reduce(const SessionSpec& spec, SessionState& st, const SessionEvent& e) {
  if (e.seq != st.last_seq + 1)
    throw Error(ErrorCode::InvalidArgument,
                "event seq " + std::to_string(e.seq) + " does not follow " + std::to_string(st.last_seq));
  st.last_seq = e.seq;
  PassState& p = st.passes.at(st.current);
  if (StepRecord* s = current_step(p)) s->finished_at = e.timestamp;

  switch (e.kind) {
    case EventKind::StepStarted: on_step_started(spec, p, e); break;
    case EventKind::AgentCalled: on_agent_called(spec, st, p, e); break;
    case EventKind::CompileChecked: on_compile_checked(spec, st, p, e); break;
    case EventKind::DecisionRequested:
      st.awaiting = *e.context;
      p.request.reset();
      break;
    case EventKind::DecisionApplied: on_decision(spec, st, p, e); break;
    case EventKind::VerdictReached:
      if (e.final) {
        st.verdict = *e.verdict;
        st.chosen_pass = static_cast<size_t>(e.pass);
        p.verdict_emitted = true;
      } else {
        p.verdict_emitted = true;
        if (st.current + 1 < st.passes.size()) ++st.current;
      }
      break;
  }
}

SessionState replay(const SessionSpec& spec, const std::vector<SessionEvent>& events) {
  SessionState st = initial_state(spec);
  for (auto& e : events) reduce(spec, st, e);
  return st;
}

// --- session -----------------------------------------------------------------

Session::Session(SessionSpec spec, std::shared_ptr<Services> services, Clock clock, Sink sink)
    : spec_(std::move(spec)),
      services_(std::move(services)),
      clock_(clock ? std::move(clock) : Clock(wall_clock)),
      sink_(std::move(sink)),
      state_(initial_state(spec_)) {}

std::unique_ptr<Session> Session::restore(SessionSpec spec, std::shared_ptr<Services> services,
                                          std::vector<SessionEvent> events, Clock clock, Sink sink) {
  auto s = std::make_unique<Session>(std::move(spec), std::move(services), std::move(clock), std::move(sink));
  s->state_ = replay(s->spec_, events);
  s->events_ = std::move(events);
  return s;
}

SessionState Session::state() const {
  std::lock_guard lk(mu_);
  return state_;
}

std::vector<SessionEvent> Session::events() const {
  std::lock_guard lk(mu_);
  return events_;
}

std::vector<SessionEvent> Session::events_since(int64_t since) const {
  std::lock_guard lk(mu_);
  std::vector<SessionEvent> out;
  for (auto& e : events_)
    if (e.seq > since) out.push_back(e);
  return out;
}

bool Session::finished() const {
  std::lock_guard lk(mu_);
  return state_.finished();
}

bool Session::awaiting_decision() const {
  std::lock_guard lk(mu_);
  return state_.awaiting.has_value();
}

int64_t Session::last_seq() const {
  std::lock_guard lk(mu_);
  return state_.last_seq;
}

SessionEvent Session::emit(SessionEvent e, std::optional<int> pass) {
  e.seq = state_.last_seq + 1;
  e.timestamp = clock_();
  e.pass = pass.value_or(static_cast<int>(state_.current));
  if (sink_) sink_(e);  // persist before applying
  std::lock_guard lk(mu_);
  reduce(spec_, state_, e);
  events_.push_back(e);
  return e;
}

namespace {

std::vector<Formalization> proof_hypotheses(const PassState& p, const WorkItem& w) {
  std::vector<Formalization> hyps;
  if (w.kind != WorkItem::Kind::Lemma) return hyps;
  std::vector<const WorkItem*> lemmas;
  for (auto& l : p.lemmas)
    if (!l.dropped && l.form.established() && l.number < w.number) lemmas.push_back(&l);
  std::sort(lemmas.begin(), lemmas.end(), [](const WorkItem* a, const WorkItem* b) { return a->number < b->number; });
  for (auto* l : lemmas) hyps.push_back(l->form);
  for (auto& f : p.facts) {
    if (f.dropped || !f.form.established()) continue;
    bool cited = std::any_of(w.hypotheses.begin(), w.hypotheses.end(),
                             [&](const Statement& h) { return h.sid == f.statement.sid; });
    if (cited) hyps.push_back(f.form);
  }
  return hyps;
}

std::string statement_unit(const BackendConfig& cfg, const std::string& header) {
  std::string unit = cfg.prelude;
  if (!unit.empty() && unit.back() != '\n') unit.push_back('\n');
  return unit + "\n" + header + " := by\n  sorry\n";
}

}  // namespace

SessionEvent Session::plan_and_execute() {
  PassState& p = state_.passes.at(state_.current);

  if (p.verdict && !p.verdict_emitted) {
    SessionEvent e;
    e.kind = EventKind::VerdictReached;
    e.phase = Phase::Finished;
    e.verdict = *p.verdict;
    e.final = state_.passes.size() == 1;
    return emit(std::move(e));
  }
  if (p.verdict_emitted) {
    // Every pass has reported; pick the most favorable, ties to the earlier.
    size_t best = 0;
    for (size_t i = 1; i < state_.passes.size(); ++i)
      if (favorability(state_.passes[i].verdict->kind) > favorability(state_.passes[best].verdict->kind)) best = i;
    SessionEvent e;
    e.kind = EventKind::VerdictReached;
    e.phase = Phase::Finished;
    e.verdict = *state_.passes[best].verdict;
    e.final = true;
    return emit(std::move(e), static_cast<int>(best));
  }
  if (p.request) {
    SessionEvent e;
    e.kind = EventKind::DecisionRequested;
    e.phase = Phase::AwaitingDecision;
    e.target = p.request->target;
    e.context = *p.request;
    return emit(std::move(e));
  }
  if (p.need_announce) {
    SessionEvent e;
    e.kind = EventKind::StepStarted;
    e.phase = p.phase;
    e.target = p.target;
    return emit(std::move(e));
  }

  const Services& svc = *services_;
  const BackendConfig& bcfg = svc.backend_cfg;
  PromptOptions opts;
  opts.introduce_variables = p.intro_vars;
  std::vector<VariableDecl> vars = p.solution ? p.solution->variables : std::vector<VariableDecl>{};

  auto agent_event = [&](const std::string& purpose, const std::string& target, AgentRole role, auto&& fn) {
    SessionEvent e;
    e.kind = EventKind::AgentCalled;
    e.phase = p.phase;
    e.target = target;
    e.purpose = purpose;
    AgentTranscript t;
    try {
      t = fn();
    } catch (const AgentError& err) {
      t = err.transcript();
    } catch (const Error& err) {
      t.role = role;
      t.response = err.what();
      t.error = err.code();
    }
    t.id = "t" + std::to_string(state_.transcript_count + 1);
    e.transcript = std::move(t);
    return emit(std::move(e));
  };
  auto compile_event = [&](CompileRecord r, std::optional<double> timeout) {
    r.id = "c" + std::to_string(state_.compile_count + 1);
    try {
      r.result = svc.backend->check_compile(r.code, timeout);
    } catch (const Error& err) {
      r.error = ErrorCode::BackendUnavailable;
      r.result.status = CompileStatus::Error;
      r.result.diagnostics.push_back({Severity::Error, 0, 0, err.what()});
    }
    SessionEvent e;
    e.kind = EventKind::CompileChecked;
    e.phase = p.phase;
    e.target = r.target;
    e.compile = std::move(r);
    return emit(std::move(e));
  };

  switch (p.phase) {
    case Phase::AwaitingSolve:
      return agent_event("solve", "", AgentRole::Solver,
                         [&] { return solve(svc.agents, spec_.problem, opts); });

    case Phase::FormalizingFacts:
    case Phase::FormalizingLemmas: {
      WorkItem* w = find_item(p, p.target);
      if (!w) break;
      if (w->form.code.empty() || w->form.status == FormalStatus::CompileError) {
        PromptOptions o = opts;
        o.extra_context = w->context;
        return agent_event("formalize", w->target(), AgentRole::Translator, [&] {
          AgentOutput out = formalize(svc.agents, w->statement, w->hypotheses, vars, o);
          return out.transcript;
        });
      }
      CompileRecord r;
      r.target = w->target();
      r.purpose = "statement";
      r.code = statement_unit(bcfg, w->form.code);
      return compile_event(std::move(r), std::nullopt);
    }

    case Phase::ProvingFacts:
    case Phase::ProvingLemmas: {
      WorkItem* w = find_item(p, p.target);
      if (!w) break;
      auto hyps = proof_hypotheses(p, *w);
      if (!w->pending_proof) {
        std::vector<ContextItem> ctx;
        for (auto& h : hyps) ctx.push_back({h.name, established_code(h)});
        return agent_event("prove", w->target(), AgentRole::Prover, [&] {
          return prove(svc.agents, w->form.code, ctx, vars, opts).transcript;
        });
      }
      CompileRecord r;
      r.target = w->target();
      r.purpose = "proof";
      r.proof = *w->pending_proof;
      r.code = assemble_unit(bcfg.prelude, hyps, w->form, *w->pending_proof);
      return compile_event(std::move(r), std::nullopt);
    }

    case Phase::CheckingTranslation: {
      if (p.target != "trivial") break;
      CompileRecord r;
      r.target = "goal";
      r.purpose = "trivial";
      r.code = trivial_check_unit(bcfg, p.goal.form);
      return compile_event(std::move(r), spec_.config.trivial_budget);
    }

    case Phase::Linking: {
      if (!p.link || p.link->status != LinkStatus::Reachable) break;
      LinkInputs in;
      for (auto& f : p.facts)
        if (!f.dropped && f.form.established()) in.facts.push_back(f.form);
      for (auto& l : p.lemmas)
        if (!l.dropped && l.form.established()) in.lemmas[l.number] = l.form;
      in.goal = p.goal.form;
      auto strategy =
          p.compose_attempts.empty() ? CompositionStrategy::Elimination : CompositionStrategy::Sequential;
      CompileRecord r;
      r.target = "goal";
      r.purpose = "compose";
      r.strategy = std::string(to_string(strategy));
      r.code = compose_final_proof(bcfg.prelude, *p.link, in, strategy);
      return compile_event(std::move(r), std::nullopt);
    }

    default: break;
  }
  throw Error(ErrorCode::InvalidArgument,
              "session " + spec_.id + " has no action in phase " + std::string(to_string(p.phase)) + " " + p.target);
}

SessionEvent Session::advance() {
  std::lock_guard wl(write_mu_);
  if (state_.finished()) throw Error(ErrorCode::SessionFinished, "session " + spec_.id + " is finished");
  if (state_.awaiting) throw Error(ErrorCode::InvalidArgument, "session " + spec_.id + " is awaiting a decision");
  return plan_and_execute();
}

void Session::run_until_blocked() {
  std::lock_guard wl(write_mu_);
  while (!state_.finished() && !state_.awaiting) plan_and_execute();
}

SessionEvent Session::apply_decision(const Decision& d, std::optional<int64_t> expected_seq) {
  std::lock_guard wl(write_mu_);
  if (state_.finished()) throw Error(ErrorCode::SessionFinished, "session " + spec_.id + " is finished");
  if (expected_seq && *expected_seq != state_.last_seq)
    throw Error(ErrorCode::StaleSequence, "expected_seq " + std::to_string(*expected_seq) + " but the session is at " +
                                              std::to_string(state_.last_seq));
  if (!state_.awaiting) throw Error(ErrorCode::NotAwaitingDecision, "session " + spec_.id + " is not awaiting a decision");
  const auto& legal = legal_decisions(state_.awaiting->kind);
  if (std::find(legal.begin(), legal.end(), d.kind) == legal.end())
    throw Error(ErrorCode::IllegalDecision, std::string(to_string(d.kind)) + " is not allowed after a " +
                                                std::string(to_string(state_.awaiting->kind)));
  if (d.kind == DecisionKind::ProvideTranslation || d.kind == DecisionKind::ProvideFormalization) {
    if (trim(d.code).empty()) throw Error(ErrorCode::IllegalDecision, "decision needs nonempty code");
    if (!formal::first_declaration(d.code))
      throw Error(ErrorCode::IllegalDecision, "provided code contains no theorem declaration");
  }
  SessionEvent e;
  e.kind = EventKind::DecisionApplied;
  e.phase = state_.awaiting->phase;
  e.target = state_.awaiting->target;
  e.decision = d;
  return emit(std::move(e));
}

json run_automatic(const ProblemStatement& prob, const PipelineConfig& cfg, const ServiceFactory& factory, Clock clock) {
  SessionSpec spec;
  spec.id = "run-" + prob.id;
  spec.problem = prob;
  spec.mode = Mode::Automatic;
  spec.config = cfg;
  Session s(spec, factory.make(), std::move(clock));
  s.run_until_blocked();
  return build_report(s.spec(), s.state(), s.events());
}

}  // namespace verify
