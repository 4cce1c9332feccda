#include "verify/bench.hpp"

#include "verify/formal_code.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace verify {

std::vector<DatasetRecord> parse_dataset(std::string_view text) {
  std::vector<DatasetRecord> out;
  std::set<std::string> ids;
  int line_no = 0;
  for (auto& line : split_lines(text)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto malformed = [&](const std::string& why) {
      return Error(ErrorCode::MalformedRecord, "line " + std::to_string(line_no) + ": " + why);
    };
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw malformed(std::string("not JSON: ") + e.what());
    }
    if (!j.is_object()) throw malformed("record is not an object");
    if (!j.contains("label") || !j["label"].is_boolean()) throw malformed("missing boolean 'label'");
    DatasetRecord r;
    try {
      r.problem = problem_from_json(j);
    } catch (const Error& e) {
      throw malformed(e.what());
    } catch (const json::exception& e) {
      throw malformed(e.what());
    }
    r.label = j["label"].get<bool>();
    r.problem.label = r.label;
    if (!ids.insert(r.problem.id).second)
      throw Error(ErrorCode::DuplicateId, "line " + std::to_string(line_no) + ": duplicate id " + r.problem.id);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<DatasetRecord> load_dataset(const std::string& path) { return parse_dataset(read_file(path)); }

json to_json(const DatasetRecord& r) {
  json j = to_json(r.problem);
  j["label"] = r.label;
  return j;
}

json to_json(const BatchResult& b) {
  json arr = json::array();
  for (auto& p : b) {
    json v = json::array();
    for (auto k : p.verdicts) v.push_back(to_string(k));
    arr.push_back({{"id", p.id}, {"label", p.label ? json(*p.label) : json(nullptr)}, {"verdicts", v}});
  }
  return arr;
}

BatchResult batch_result_from_json(const json& j) {
  const json& arr = j.is_object() && j.contains("runs") ? j["runs"] : j;
  if (!arr.is_array()) throw Error(ErrorCode::MalformedRecord, "run file has no 'runs' array");
  BatchResult out;
  for (auto& p : arr) {
    ProblemRuns r;
    r.id = p.at("id").get<std::string>();
    if (p.contains("label") && p["label"].is_boolean()) r.label = p["label"].get<bool>();
    for (auto& v : p.at("verdicts")) r.verdicts.push_back(verdict_kind_from(v.get<std::string>()));
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

template <class Fn>
BatchResult run_all(const std::vector<DatasetRecord>& records, int n_runs, int workers, Progress progress, Fn fn) {
  if (n_runs < 1) throw Error(ErrorCode::InvalidArgument, "n_runs must be >= 1");
  BatchResult out(records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    out[i].id = records[i].problem.id;
    out[i].label = records[i].label;
    out[i].verdicts.assign(n_runs, VerdictKind::Inconclusive);
  }
  const size_t total = records.size() * static_cast<size_t>(n_runs);
  std::atomic<size_t> next{0}, done{0};
  std::mutex progress_mu;
  auto worker = [&] {
    for (size_t task; (task = next++) < total;) {
      size_t i = task / n_runs;
      int run = static_cast<int>(task % n_runs);
      VerdictKind k = VerdictKind::Inconclusive;
      try {
        k = fn(records[i], run);
      } catch (const std::exception&) {
        k = VerdictKind::Inconclusive;
      }
      out[i].verdicts[run] = k;
      size_t d = ++done;
      if (progress) {
        std::lock_guard lk(progress_mu);
        progress(d, total);
      }
    }
  };
  int n = std::max(1, std::min<int>(workers, static_cast<int>(std::max<size_t>(total, 1))));
  std::vector<std::thread> pool;
  for (int t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return out;
}

}  // namespace

BatchResult run_batch(const std::vector<DatasetRecord>& records, const ServiceFactory& factory, int n_runs, int workers,
                      Progress progress) {
  return run_all(records, n_runs, workers, std::move(progress), [&](const DatasetRecord& r, int run) {
    SessionSpec spec;
    spec.id = r.problem.id + "#" + std::to_string(run + 1);
    spec.problem = r.problem;
    spec.mode = Mode::Automatic;
    spec.config = factory.config();
    Session s(spec, factory.make());
    s.run_until_blocked();
    return s.state().verdict->kind;
  });
}

VerdictKind run_answer_baseline(const DatasetRecord& record, const Services& svc, const PipelineConfig& cfg) {
  const ProblemStatement& prob = record.problem;
  PromptOptions opts;
  opts.introduce_variables = cfg.intro_vars == IntroVars::On;
  try {
    AgentTranscript solution = solve(svc.agents, prob, opts);

    Formalization goal;
    goal.name = "main_goal";
    std::optional<std::string> header;
    if (prob.trusted_goal) {
      header = formal::statement_header(*prob.trusted_goal, goal.name);
    } else {
      std::string text = prob.text;
      if (prob.answer) text += "\nThe answer is " + *prob.answer + ".";
      Statement stmt = Statement::make(text);
      goal.source_sid = stmt.sid;
      AgentOutput out = formalize(svc.agents, stmt, {}, {}, opts);
      if (out.code) header = formal::statement_header(*out.code, goal.name);
    }
    if (!header) return VerdictKind::Refuted;
    goal.code = *header;

    std::string unit = svc.backend_cfg.prelude + "\n" + goal.code + " := by\n  sorry\n";
    if (!svc.backend->check_compile(unit).ok()) return VerdictKind::Refuted;
    goal.status = FormalStatus::CompileOk;

    // The informal solution rides along as a comment-only hint.
    std::string hint = solution.response;
    for (size_t p; (p = hint.find("-/")) != std::string::npos;) hint.replace(p, 2, "- /");
    std::vector<ContextItem> ctx = {{"informal_solution", "/- Informal solution:\n" + hint + "\n-/"}};
    AgentOutput proof = prove(svc.agents, goal.code, ctx, {}, opts);
    if (!proof.code) return VerdictKind::Refuted;
    ProofAttempt a = attempt_proof(*svc.backend, svc.backend_cfg, goal, {}, *proof.code);
    return a.result.status == FormalStatus::ProvedOk ? VerdictKind::Verified : VerdictKind::Refuted;
  } catch (const AgentError&) {
    return VerdictKind::Inconclusive;
  } catch (const Error& e) {
    if (e.code() == ErrorCode::BackendUnavailable) return VerdictKind::Inconclusive;
    throw;
  }
}

BatchResult run_answer_baseline(const std::vector<DatasetRecord>& records, const ServiceFactory& factory, int n_runs,
                                int workers, Progress progress) {
  return run_all(records, n_runs, workers, std::move(progress), [&](const DatasetRecord& r, int) {
    auto svc = factory.make();
    return run_answer_baseline(r, *svc, factory.config());
  });
}

bool is_positive(VerdictKind k, bool include_trivial) {
  return k == VerdictKind::Verified || (include_trivial && k == VerdictKind::VerifiedTrivial);
}

json to_json(const RunMetrics& m) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"tp", m.tp},
          {"fp", m.fp},
          {"fn", m.fn},
          {"tn", m.tn},
          {"accuracy", m.accuracy},
          {"precision", opt(m.precision)},
          {"recall", opt(m.recall)},
          {"uncertainty", {{"method", "sample standard deviation across runs"},
                           {"accuracy", opt(m.accuracy_sd)},
                           {"precision", opt(m.precision_sd)},
                           {"recall", opt(m.recall_sd)}}},
          {"n_runs", m.n_runs},
          {"n_problems", m.n_problems}};
}

namespace {

std::optional<double> sample_sd(const std::vector<double>& xs) {
  if (xs.size() < 2) return std::nullopt;
  double mean = 0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

}  // namespace

RunMetrics compute_metrics(const std::vector<std::vector<bool>>& predictions, const std::vector<bool>& labels) {
  if (labels.empty() || predictions.empty()) throw Error(ErrorCode::EmptyInput, "no labeled predictions");
  RunMetrics m;
  m.n_runs = static_cast<int>(predictions.size());
  m.n_problems = labels.size();
  std::vector<double> acc, prec, rec;
  for (auto& run : predictions) {
    if (run.size() != labels.size())
      throw Error(ErrorCode::InvalidArgument, "a run's predictions do not match the label count");
    long tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (run[i] && labels[i]) ++tp;
      else if (run[i]) ++fp;
      else if (labels[i]) ++fn;
      else ++tn;
    }
    m.tp += tp;
    m.fp += fp;
    m.fn += fn;
    m.tn += tn;
    acc.push_back(static_cast<double>(tp + tn) / static_cast<double>(labels.size()));
    if (tp + fp > 0) prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    if (tp + fn > 0) rec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fn));
  }
  long total = m.tp + m.fp + m.fn + m.tn;
  m.accuracy = static_cast<double>(m.tp + m.tn) / static_cast<double>(total);
  if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  m.accuracy_sd = sample_sd(acc);
  m.precision_sd = sample_sd(prec);
  m.recall_sd = sample_sd(rec);
  return m;
}

RunMetrics compute_metrics(const BatchResult& runs, bool include_trivial) {
  std::vector<bool> labels;
  std::vector<const ProblemRuns*> labeled;
  size_t n_runs = 0;
  for (auto& p : runs) {
    if (!p.label) continue;
    if (labeled.empty()) n_runs = p.verdicts.size();
    if (p.verdicts.size() != n_runs) throw Error(ErrorCode::InvalidArgument, "problems have differing run counts");
    labeled.push_back(&p);
    labels.push_back(*p.label);
  }
  if (labeled.empty() || n_runs == 0) throw Error(ErrorCode::EmptyInput, "no labeled verdicts");
  std::vector<std::vector<bool>> predictions(n_runs, std::vector<bool>(labeled.size()));
  for (size_t r = 0; r < n_runs; ++r)
    for (size_t i = 0; i < labeled.size(); ++i) predictions[r][i] = is_positive(labeled[i]->verdicts[r], include_trivial);
  return compute_metrics(predictions, labels);
}

json to_json(const ABComparison& c) {
  json entries = json::array();
  for (auto& e : c.entries) {
    json a = json::array(), b = json::array();
    for (auto k : e.a) a.push_back(to_string(k));
    for (auto k : e.b) b.push_back(to_string(k));
    entries.push_back({{"id", e.id},
                       {"a", a},
                       {"b", b},
                       {"a_verified", e.a_verified},
                       {"b_verified", e.b_verified},
                       {"changed", e.a_verified != e.b_verified}});
  }
  json j = {{"entries", entries},
            {"counts", {{"both", c.both}, {"a_only", c.a_only}, {"b_only", c.b_only}, {"neither", c.neither}}},
            {"regressions", c.regressions},
            {"improvements", c.improvements},
            {"delta_verified", c.b_only - c.a_only}};
  j["metrics_a"] = c.metrics_a ? to_json(*c.metrics_a) : json(nullptr);
  j["metrics_b"] = c.metrics_b ? to_json(*c.metrics_b) : json(nullptr);
  if (c.metrics_a && c.metrics_b) j["delta_accuracy"] = c.metrics_b->accuracy - c.metrics_a->accuracy;
  return j;
}

ABComparison ab_compare(const BatchResult& a, const BatchResult& b, bool include_trivial) {
  std::map<std::string, const ProblemRuns*> bmap;
  for (auto& p : b) bmap[p.id] = &p;
  std::set<std::string> aids;
  for (auto& p : a) aids.insert(p.id);
  if (aids.size() != a.size() || bmap.size() != b.size() || aids.size() != bmap.size())
    throw Error(ErrorCode::IdSetMismatch, "runs cover different problem sets");
  for (auto& id : aids)
    if (!bmap.count(id)) throw Error(ErrorCode::IdSetMismatch, "problem " + id + " is missing from run B");

  auto majority = [&](const std::vector<VerdictKind>& vs) {
    size_t pos = 0;
    for (auto k : vs) pos += is_positive(k, include_trivial);
    return 2 * pos > vs.size();
  };
  ABComparison c;
  for (auto& pa : a) {
    const ProblemRuns& pb = *bmap.at(pa.id);
    ABEntry e{pa.id, pa.verdicts, pb.verdicts, majority(pa.verdicts), majority(pb.verdicts)};
    if (e.a_verified && e.b_verified) ++c.both;
    else if (e.a_verified) {
      ++c.a_only;
      c.regressions.push_back(e.id);
    } else if (e.b_verified) {
      ++c.b_only;
      c.improvements.push_back(e.id);
    } else {
      ++c.neither;
    }
    c.entries.push_back(std::move(e));
  }
  try {
    c.metrics_a = compute_metrics(a, include_trivial);
    c.metrics_b = compute_metrics(b, include_trivial);
  } catch (const Error&) {
    c.metrics_a.reset();
    c.metrics_b.reset();
  }
  return c;
}

}  // namespace verify
