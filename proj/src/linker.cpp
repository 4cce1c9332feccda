#include "verify/linker.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace verify {

std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Given: return "Given";
    case NodeKind::Fact: return "Fact";
    case NodeKind::LemmaConclusion: return "LemmaConclusion";
    case NodeKind::Goal: return "Goal";
  }
  return "?";
}

std::string_view to_string(LinkStatus s) { return s == LinkStatus::Reachable ? "Reachable" : "Blocked"; }

std::string_view to_string(CompositionStrategy s) {
  return s == CompositionStrategy::Elimination ? "Elimination" : "Sequential";
}

bool SolutionHypergraph::is_source(const std::string& sid) const {
  auto it = nodes.find(sid);
  return it != nodes.end() && (it->second.kind == NodeKind::Given || it->second.kind == NodeKind::Fact);
}

std::vector<std::string> SolutionHypergraph::sources() const {
  std::vector<std::string> out;
  for (auto& [sid, n] : nodes)
    if (n.kind == NodeKind::Given || n.kind == NodeKind::Fact) out.push_back(sid);
  return out;
}

const HyperEdge* SolutionHypergraph::edge(int lemma_index) const {
  for (auto& e : edges)
    if (e.lemma_index == lemma_index) return &e;
  return nullptr;
}

// Lower rank wins when one statement plays several roles.
static int rank(NodeKind k) {
  switch (k) {
    case NodeKind::Goal: return 0;
    case NodeKind::Given: return 1;
    case NodeKind::Fact: return 2;
    case NodeKind::LemmaConclusion: return 3;
  }
  return 4;
}

static void add_node(SolutionHypergraph& g, const Statement& st, NodeKind kind, int lemma_index = 0) {
  auto [it, inserted] = g.nodes.try_emplace(st.sid, HyperNode{st, kind, lemma_index});
  if (!inserted && rank(kind) < rank(it->second.kind)) it->second = HyperNode{st, kind, lemma_index};
}

SolutionHypergraph build_hypergraph(const StructuredSolution& sol) {
  SolutionHypergraph g;
  g.goal_sid = sol.goal.sid;
  add_node(g, sol.goal, NodeKind::Goal);

  std::map<int, const Lemma*> by_index;
  for (auto& l : sol.lemmas) by_index[l.index] = &l;

  std::set<std::string> concluded;
  for (auto& l : sol.lemmas) {
    HyperEdge e;
    e.lemma_index = l.index;
    e.conclusion = l.conclusion.sid;
    for (auto& p : l.premises) {
      Statement st = p.statement;
      NodeKind kind = NodeKind::Fact;
      if (p.provenance.kind == ProvenanceKind::Given) {
        kind = NodeKind::Given;
      } else if (p.provenance.kind == ProvenanceKind::PriorLemma) {
        // An explicit citation names the cited conclusion, whatever the
        // premise text says.
        auto it = by_index.find(p.provenance.index);
        if (it != by_index.end()) st = it->second->conclusion;
        kind = NodeKind::LemmaConclusion;
      }
      if (kind == NodeKind::LemmaConclusion)
        add_node(g, st, kind, p.provenance.index);
      else
        add_node(g, st, kind);
      if (std::find(e.premises.begin(), e.premises.end(), st.sid) == e.premises.end()) e.premises.push_back(st.sid);
    }
    add_node(g, l.conclusion, NodeKind::LemmaConclusion, l.index);
    if (!concluded.insert(l.conclusion.sid).second)
      g.warnings.push_back("DuplicateConclusion: lemma " + std::to_string(l.index) + " re-derives '" +
                           l.conclusion.text + "'");
    g.edges.push_back(std::move(e));
  }
  return g;
}

SolutionHypergraph without_edges(const SolutionHypergraph& g, const std::set<int>& lemma_indices) {
  SolutionHypergraph out = g;
  std::erase_if(out.edges, [&](const HyperEdge& e) { return lemma_indices.count(e.lemma_index) > 0; });
  return out;
}

json to_json(const SolutionHypergraph& g) {
  json nodes = json::array();
  for (auto& [sid, n] : g.nodes) {
    json j = {{"sid", sid}, {"text", n.statement.text}, {"kind", to_string(n.kind)}};
    if (n.kind == NodeKind::LemmaConclusion) j["lemma"] = n.lemma_index;
    nodes.push_back(j);
  }
  json edges = json::array();
  for (auto& e : g.edges) edges.push_back({{"lemma", e.lemma_index}, {"premises", e.premises}, {"conclusion", e.conclusion}});
  return {{"nodes", nodes}, {"edges", edges}, {"goal", g.goal_sid}};
}

static std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

std::string to_dot(const SolutionHypergraph& g) {
  std::ostringstream os;
  os << "digraph solution {\n  rankdir=LR;\n";
  for (auto& [sid, n] : g.nodes) {
    const char* shape = n.kind == NodeKind::Goal ? "doubleoctagon"
                        : n.kind == NodeKind::Given ? "box"
                        : n.kind == NodeKind::Fact  ? "note"
                                                    : "ellipse";
    os << "  \"" << sid << "\" [shape=" << shape << ", label=\"" << dot_escape(n.statement.text) << "\"];\n";
  }
  // Each hyperedge gets a junction point so multi-premise lemmas read as one step.
  for (auto& e : g.edges) {
    std::string j = "L" + std::to_string(e.lemma_index);
    os << "  " << j << " [shape=point, xlabel=\"" << j << "\"];\n";
    for (auto& p : e.premises) os << "  \"" << p << "\" -> " << j << " [arrowhead=none];\n";
    os << "  " << j << " -> \"" << e.conclusion << "\";\n";
  }
  os << "}\n";
  return os.str();
}

json to_json(const LinkResult& r) {
  return {{"status", to_string(r.status)},
          {"established", r.established},
          {"missing", r.missing},
          {"derivation_order", r.derivation_order}};
}

LinkResult check_reachability(const SolutionHypergraph& g, const std::optional<std::set<std::string>>& established_facts) {
  LinkResult r;
  for (auto& [sid, n] : g.nodes) {
    if (n.kind == NodeKind::Given) r.established.insert(sid);
    if (n.kind == NodeKind::Fact && (!established_facts || established_facts->count(sid))) r.established.insert(sid);
  }

  std::vector<const HyperEdge*> order;
  for (auto& e : g.edges) order.push_back(&e);
  std::stable_sort(order.begin(), order.end(),
                   [](const HyperEdge* a, const HyperEdge* b) { return a->lemma_index < b->lemma_index; });

  std::vector<bool> fired(order.size(), false);
  for (bool changed = true; changed;) {
    changed = false;
    for (size_t i = 0; i < order.size(); ++i) {
      if (fired[i]) continue;
      const HyperEdge& e = *order[i];
      bool ready = std::all_of(e.premises.begin(), e.premises.end(),
                               [&](const std::string& p) { return r.established.count(p) > 0; });
      if (!ready) continue;
      fired[i] = true;
      changed = true;
      r.derivation_order.push_back(e.lemma_index);
      r.established.insert(e.conclusion);
    }
  }

  if (r.established.count(g.goal_sid)) {
    r.status = LinkStatus::Reachable;
    return r;
  }

  // Backward slice from the goal over unestablished statements; the leaves
  // nobody derives are what is missing.
  std::map<std::string, std::vector<const HyperEdge*>> incoming;
  for (auto& e : g.edges) incoming[e.conclusion].push_back(&e);
  std::set<std::string> seen{g.goal_sid};
  std::deque<std::string> queue{g.goal_sid};
  while (!queue.empty()) {
    std::string sid = queue.front();
    queue.pop_front();
    auto it = incoming.find(sid);
    if (it == incoming.end()) {
      r.missing.insert(sid);
      continue;
    }
    for (const HyperEdge* e : it->second)
      for (auto& p : e->premises)
        if (!r.established.count(p) && seen.insert(p).second) queue.push_back(p);
  }
  r.status = LinkStatus::Blocked;
  return r;
}

std::optional<Lemma> final_gap_repair(const SolutionHypergraph& g, const LinkResult& r) {
  if (r.status != LinkStatus::Blocked) return std::nullopt;
  if (r.missing != std::set<std::string>{g.goal_sid}) return std::nullopt;
  if (g.edges.empty()) return std::nullopt;

  const HyperEdge* last = &g.edges.front();
  for (auto& e : g.edges)
    if (e.lemma_index > last->lemma_index) last = &e;
  if (!r.established.count(last->conclusion)) return std::nullopt;

  // Terminal conclusions: established and not consumed by any other lemma.
  std::set<std::string> consumed;
  for (auto& e : g.edges)
    for (auto& p : e.premises) consumed.insert(p);

  Lemma bridge;
  bridge.index = last->lemma_index + 1;
  bridge.conclusion = g.nodes.at(g.goal_sid).statement;
  std::set<std::string> used;
  std::vector<const HyperEdge*> by_index;
  for (auto& e : g.edges) by_index.push_back(&e);
  std::sort(by_index.begin(), by_index.end(),
            [](const HyperEdge* a, const HyperEdge* b) { return a->lemma_index < b->lemma_index; });
  for (const HyperEdge* e : by_index) {
    if (!r.established.count(e->conclusion) || consumed.count(e->conclusion)) continue;
    if (!used.insert(e->conclusion).second) continue;
    bridge.premises.push_back({g.nodes.at(e->conclusion).statement, Provenance::prior_lemma(e->lemma_index)});
  }
  return bridge;
}

std::string compose_final_proof(const std::string& prelude, const LinkResult& r, const LinkInputs& in,
                                CompositionStrategy strategy) {
  std::string unit = prelude;
  if (!unit.empty() && unit.back() != '\n') unit.push_back('\n');

  std::vector<std::string> names;
  for (auto& f : in.facts) {
    unit += "\n" + established_code(f) + "\n";
    names.push_back(f.name);
  }
  for (int idx : r.derivation_order) {
    auto it = in.lemmas.find(idx);
    if (it == in.lemmas.end())
      throw Error(ErrorCode::InvalidArgument, "no formalization for lemma " + std::to_string(idx));
    unit += "\n" + established_code(it->second) + "\n";
    names.push_back(it->second.name);
  }

  std::string proof;
  if (strategy == CompositionStrategy::Elimination) {
    int depth = std::max<int>(6, static_cast<int>(r.derivation_order.size()) + 1);
    std::string list;
    for (size_t i = 0; i < names.size(); ++i) list += (i ? ", " : "") + names[i];
    proof = "by\n  intros\n  solve_by_elim (config := { maxDepth := " + std::to_string(depth) + " }) [" + list + "]";
  } else {
    // Later lemmas first so the goal is attacked by the step that derives it.
    std::string alts = "assumption";
    for (auto it = names.rbegin(); it != names.rend(); ++it) alts += " | apply " + *it;
    proof = "by\n  intros\n  repeat' (first | " + alts + ")";
  }
  unit += "\n" + in.goal.code + " := " + proof + "\n";
  return unit;
}

std::vector<CompositionAttempt> compose_and_check(ProofBackend& backend, const BackendConfig& cfg,
                                                  const LinkResult& r, const LinkInputs& in) {
  std::vector<CompositionAttempt> attempts;
  for (auto s : {CompositionStrategy::Elimination, CompositionStrategy::Sequential}) {
    CompositionAttempt a;
    a.strategy = s;
    a.unit = compose_final_proof(cfg.prelude, r, in, s);
    a.compile = backend.check_compile(a.unit);
    bool ok = a.compile.ok();
    attempts.push_back(std::move(a));
    if (ok) return attempts;
  }
  throw CompositionCompileError("composed proof does not compile", std::move(attempts));
}

}  // namespace verify
