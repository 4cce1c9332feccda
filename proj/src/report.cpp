#include "verify/pipeline.hpp"

#include <sstream>

namespace verify {

namespace {

json step_json(const StepRecord& s) {
  json diags = json::array();
  for (auto& d : s.diagnostics) diags.push_back(to_json(d));
  return {{"phase", to_string(s.phase)},
          {"target", s.target},
          {"started_seq", s.started_seq},
          {"wall_clock", s.finished_at - s.started_at},
          {"transcripts", s.transcripts},
          {"compiles", s.compiles},
          {"outcome", s.outcome},
          {"diagnostics", diags}};
}

json pass_json(const PassState& p) {
  json j;
  j["intro_vars"] = p.intro_vars;
  j["raw_solution"] = p.raw_solution;
  j["solution"] = p.solution ? to_json(*p.solution) : json(nullptr);
  json violations = json::array();
  for (auto& v : p.violations) violations.push_back(to_json(v));
  j["violations"] = violations;
  json facts = json::array();
  for (auto& f : p.facts) facts.push_back(to_json(f));
  j["facts"] = facts;
  json lemmas = json::array();
  for (auto& l : p.lemmas) lemmas.push_back(to_json(l));
  j["lemmas"] = lemmas;
  j["goal"] = p.goal.form.name.empty() ? json(nullptr) : to_json(p.goal);
  j["trivial"] = p.trivial ? json(*p.trivial) : json(nullptr);
  j["hypergraph"] = p.graph ? to_json(*p.graph) : json(nullptr);
  j["link"] = p.link ? to_json(*p.link) : json(nullptr);
  if (p.final_proof) {
    const CompileRecord& r = p.compose_attempts.back();
    j["final_proof"] = {{"unit", *p.final_proof},
                        {"compile_id", r.id},
                        {"strategy", r.strategy.value_or("")},
                        {"status", "CompileOk"}};
  } else {
    j["final_proof"] = nullptr;
  }
  j["assumed_facts"] = p.assumed;
  j["verdict"] = p.verdict ? to_json(*p.verdict) : json(nullptr);
  json steps = json::array();
  for (auto& s : p.steps) steps.push_back(step_json(s));
  j["steps"] = steps;
  return j;
}

const PassState* chosen(const SessionState& st) {
  if (st.passes.empty()) return nullptr;
  return &st.passes[st.chosen_pass.value_or(st.current)];
}

}  // namespace

json build_report(const SessionSpec& spec, const SessionState& st, const std::vector<SessionEvent>& events) {
  json r;
  r["schema_version"] = kReportSchemaVersion;
  r["session_id"] = spec.id;
  r["problem"] = to_json(spec.problem);
  r["mode"] = to_string(spec.mode);
  r["options"] = {{"intro_vars", to_string(spec.config.intro_vars)},
                  {"prover_retries", spec.config.prover_retries},
                  {"trivial_budget", spec.config.trivial_budget},
                  {"backend", spec.config.backend.kind}};
  r["state"] = to_string(st.current_phase());

  json passes = json::array();
  for (auto& p : st.passes) passes.push_back(pass_json(p));
  r["passes"] = passes;
  r["chosen_pass"] = st.chosen_pass ? json(*st.chosen_pass) : json(nullptr);

  const PassState* best = chosen(st);
  r["final_proof"] = nullptr;
  if (st.verdict && best && best->final_proof && st.verdict->positive()) r["final_proof"] = pass_json(*best)["final_proof"];
  r["verdict"] = st.verdict ? to_json(*st.verdict) : json(nullptr);

  // Texts of the statements accepted without proof, for the warning banner.
  json assumed = json::array();
  if (st.verdict && best) {
    for (auto& sid : st.verdict->assumed_facts) {
      std::string text = sid;
      for (auto& f : best->facts)
        if (f.statement.sid == sid) text = f.statement.text;
      for (auto& l : best->lemmas)
        if (l.statement.sid == sid) text = l.statement.text;
      assumed.push_back({{"sid", sid}, {"text", text}});
    }
  }
  r["assumed"] = assumed;

  json transcripts = json::array();
  json compiles = json::array();
  for (auto& e : events) {
    if (e.kind == EventKind::AgentCalled) {
      json t = to_json(*e.transcript);
      t["pass"] = e.pass;
      t["purpose"] = e.purpose;
      t["target"] = e.target;
      transcripts.push_back(t);
    } else if (e.kind == EventKind::CompileChecked) {
      json c = to_json(*e.compile);
      c["pass"] = e.pass;
      compiles.push_back(c);
    }
  }
  r["transcripts"] = transcripts;
  r["compiles"] = compiles;
  r["event_count"] = events.size();
  if (!events.empty()) {
    r["started_at"] = events.front().timestamp;
    r["finished_at"] = events.back().timestamp;
  }
  return r;
}

json strip_timing(const json& j) {
  static const std::set<std::string> kTiming = {"timestamp",  "latency",    "wall_clock",
                                                "started_at", "finished_at", "created_at", "updated_at"};
  if (j.is_object()) {
    json out = json::object();
    for (auto& [k, v] : j.items())
      if (!kTiming.count(k)) out[k] = strip_timing(v);
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (auto& v : j) out.push_back(strip_timing(v));
    return out;
  }
  return j;
}

static std::string indent(const std::string& text, const std::string& pad) {
  std::string out;
  for (auto& line : split_lines(text)) out += pad + line + "\n";
  return out;
}

std::string render_report(const json& r) {
  std::ostringstream os;
  os << "Verification report: problem " << r["problem"].value("id", "") << " (" << r.value("mode", "") << " mode, "
     << "variables " << r["options"].value("intro_vars", "") << ")\n\n";
  os << "Problem:\n" << indent(r["problem"].value("text", ""), "  ") << "\n";

  const json& v = r["verdict"];
  if (v.is_null()) {
    os << "VERDICT: (not finished; state " << r.value("state", "") << ")\n";
  } else {
    os << "VERDICT: " << v.value("kind", "");
    if (v["failing_step"].is_string()) os << " at " << v["failing_step"].get<std::string>();
    if (!v.value("target", "").empty()) os << " [" << v.value("target", "") << "]";
    os << "\n  " << v.value("reason", "") << "\n";
  }
  if (!r["assumed"].empty()) {
    os << "\nWARNING: the result relies on statements accepted without proof:\n";
    for (auto& a : r["assumed"]) os << "  - " << a.value("text", "") << "\n";
  }

  int n = 0;
  for (auto& p : r["passes"]) {
    os << "\n== Pass " << ++n << " (introduce variables: " << (p.value("intro_vars", false) ? "on" : "off") << ")\n";
    if (p["solution"].is_object()) {
      const json& s = p["solution"];
      os << "Structured solution:\n";
      for (auto& var : s["variables"])
        os << "  var " << var.value("name", "") << " : " << var.value("type", "") << "\n";
      for (auto& l : s["lemmas"]) {
        os << "  Lemma " << l.value("index", 0) << ": ";
        std::vector<std::string> prem;
        for (auto& pr : l["premises"]) prem.push_back(pr.value("text", ""));
        for (size_t i = 0; i < prem.size(); ++i) os << (i ? ", " : "") << prem[i];
        os << (prem.empty() ? "" : " ") << "=> " << l["conclusion"].value("text", "") << "\n";
      }
      os << "  Goal: " << s["goal"].value("text", "") << "\n";
    }
    os << "Steps:\n";
    for (auto& st : p["steps"]) {
      os << "  - " << st.value("phase", "");
      if (!st.value("target", "").empty()) os << " " << st.value("target", "");
      if (!st.value("outcome", "").empty()) os << ": " << st.value("outcome", "");
      os << "\n";
      for (auto& d : st["diagnostics"])
        os << "      " << d.value("severity", "") << " " << d.value("line", 0) << ":" << d.value("column", 0) << " "
           << d.value("message", "") << "\n";
    }
    if (p["verdict"].is_object()) os << "Pass verdict: " << p["verdict"].value("kind", "") << "\n";
  }

  if (r["final_proof"].is_object()) {
    os << "\nComposed proof (" << r["final_proof"].value("strategy", "") << ", "
       << r["final_proof"].value("status", "") << "):\n"
       << indent(r["final_proof"].value("unit", ""), "    ");
  }
  return os.str();
}

}  // namespace verify
