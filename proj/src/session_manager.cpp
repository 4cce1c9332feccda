#include "verify/session_manager.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <fcntl.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace verify {

struct SessionManager::Entry {
  std::string id;
  std::string dir;
  json options;
  double created_at = 0.0;
  std::atomic<double> updated_at{0.0};
  std::unique_ptr<Session> session;
  bool scheduled = false;  // guarded by the manager's mu_
};

struct SessionManager::Batch {
  std::string id;
  std::atomic<size_t> done{0};
  std::atomic<size_t> total{0};
  std::mutex mu;
  std::string status = "running";  // running | done | failed
  json result;
  std::string error;
  std::thread thread;
};

namespace {

bool safe_id(const std::string& id) {
  if (id.empty() || id.size() > 128 || id[0] == '.') return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

// Appends one line and forces it to disk: a kill at any point leaves at most
// a partial final line, which recovery drops.
void append_line(const std::string& path, const std::string& line) {
  int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::string buf = line + "\n";
  const char* p = buf.data();
  size_t left = buf.size();
  while (left > 0) {
    ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      throw Error(ErrorCode::IoError, "write failed on " + path);
    }
    p += n;
    left -= static_cast<size_t>(n);
  }
  ::fsync(fd);
  ::close(fd);
}

void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  write_file(tmp, content);
  fs::rename(tmp, path);
}

// Parses an event log. A malformed final line is the tail of an interrupted
// append and is cut off the file; a malformed earlier line is corruption.
std::vector<SessionEvent> load_events(const std::string& path) {
  std::vector<SessionEvent> out;
  if (!fs::exists(path)) return out;
  std::string text = read_file(path);
  size_t pos = 0, good_end = 0;
  while (pos < text.size()) {
    size_t nl = text.find('\n', pos);
    bool complete = nl != std::string::npos;
    std::string line = text.substr(pos, complete ? nl - pos : std::string::npos);
    size_t next = complete ? nl + 1 : text.size();
    if (!trim(line).empty()) {
      try {
        if (!complete) throw std::runtime_error("unterminated line");
        out.push_back(event_from_json(json::parse(line)));
      } catch (const std::exception& e) {
        if (next < text.size())
          throw Error(ErrorCode::MalformedRecord, path + ": corrupt event at byte " + std::to_string(pos));
        break;
      }
    }
    good_end = next;
    pos = next;
  }
  if (good_end < text.size()) fs::resize_file(path, good_end);
  return out;
}

long numeric_suffix(const std::string& name, const std::string& prefix) {
  if (name.rfind(prefix, 0) != 0) return 0;
  try {
    return std::stol(name.substr(prefix.size()));
  } catch (...) {
    return 0;
  }
}

std::string padded(long n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06ld", n);
  return buf;
}

}  // namespace

SessionManager::SessionManager(std::string data_dir, PipelineConfig cfg, Options opts)
    : dir_(std::move(data_dir)), cfg_(std::move(cfg)), opts_(std::move(opts)) {
  if (!opts_.clock) opts_.clock = wall_clock;
  for (auto sub : {"problems", "sessions", "reports", "batches"}) fs::create_directories(fs::path(dir_) / sub);
  factory_ = std::make_shared<ServiceFactory>(cfg_, opts_.sleeper);
  int n = std::max(1, opts_.workers);
  for (int i = 0; i < n; ++i) workers_.emplace_back([this] { worker_loop(); });
}

SessionManager::~SessionManager() {
  {
    std::lock_guard lk(mu_);
    stop_ = true;
  }
  work_cv_.notify_all();
  notify_all();
  for (auto& t : workers_) t.join();
  std::vector<std::shared_ptr<Batch>> batches;
  {
    std::lock_guard lk(mu_);
    for (auto& [id, b] : batches_) batches.push_back(b);
  }
  for (auto& b : batches)
    if (b->thread.joinable()) b->thread.join();
}

void SessionManager::notify_all() const {
  {
    std::lock_guard lk(notify_mu_);
    ++generation_;
  }
  notify_cv_.notify_all();
}

std::shared_ptr<ServiceFactory> SessionManager::factory_for(const json& options) {
  // Agents and backend are the only parts that change which services a
  // session talks to; everything else is read from the SessionSpec.
  if (options.contains("config") && options["config"].is_object() &&
      (options["config"].contains("agents") || options["config"].contains("backend")))
    return std::make_shared<ServiceFactory>(merge_config(cfg_, options["config"]), opts_.sleeper);
  return factory_;
}

std::shared_ptr<SessionManager::Entry> SessionManager::open_entry(SessionSpec spec, json options, double created_at,
                                                                  std::vector<SessionEvent> events) {
  auto e = std::make_shared<Entry>();
  e->id = spec.id;
  e->dir = (fs::path(dir_) / "sessions" / spec.id).string();
  e->options = std::move(options);
  e->created_at = created_at;
  e->updated_at = events.empty() ? created_at : events.back().timestamp;
  std::string log = e->dir + "/events.jsonl";
  Entry* raw = e.get();
  Session::Sink sink = [log, raw](const SessionEvent& ev) {
    append_line(log, to_json(ev).dump());  // one line per event
    raw->updated_at = ev.timestamp;
  };
  auto services = factory_for(e->options)->make();
  e->session = Session::restore(std::move(spec), std::move(services), std::move(events), opts_.clock, std::move(sink));
  return e;
}

size_t SessionManager::recover() {
  size_t restored = 0;
  for (auto& f : fs::directory_iterator(fs::path(dir_) / "problems")) {
    if (f.path().extension() != ".json") continue;
    try {
      ProblemStatement p = problem_from_json(json::parse(read_file(f.path().string())));
      std::lock_guard lk(mu_);
      problems_[p.id] = p;
    } catch (const std::exception& ex) {
      std::cerr << "skipping problem " << f.path() << ": " << ex.what() << "\n";
    }
  }
  std::vector<std::string> resume;
  for (auto& d : fs::directory_iterator(fs::path(dir_) / "sessions")) {
    if (!d.is_directory()) continue;
    std::string id = d.path().filename().string();
    {
      std::lock_guard lk(mu_);
      session_counter_ = std::max(session_counter_, numeric_suffix(id, "s-"));
      if (sessions_.count(id)) continue;
    }
    try {
      json meta = json::parse(read_file((d.path() / "meta.json").string()));
      SessionSpec spec = session_spec_from_json(meta.at("spec"));
      auto events = load_events((d.path() / "events.jsonl").string());
      auto e = open_entry(std::move(spec), meta.value("options", json::object()), meta.value("created_at", 0.0),
                          std::move(events));
      if (e->session->finished()) {
        if (!fs::exists(fs::path(dir_) / "reports" / (id + ".json"))) finish_session(*e);
      } else if (!e->session->awaiting_decision()) {
        resume.push_back(id);
      }
      std::lock_guard lk(mu_);
      sessions_[id] = e;
      ++restored;
    } catch (const std::exception& ex) {
      std::cerr << "skipping session " << id << ": " << ex.what() << "\n";
    }
  }
  for (auto& d : fs::directory_iterator(fs::path(dir_) / "batches")) {
    std::lock_guard lk(mu_);
    batch_counter_ = std::max(batch_counter_, numeric_suffix(d.path().stem().string(), "b-"));
  }
  for (auto& id : resume) schedule(id);
  return restored;
}

std::string SessionManager::add_problem(ProblemStatement p) {
  if (trim(p.text).empty()) throw Error(ErrorCode::InvalidArgument, "problem text is empty");
  if (p.id.empty()) p.id = "p-" + sha256_hex(canonical_dump(to_json(p))).substr(0, 12);
  if (!safe_id(p.id)) throw Error(ErrorCode::InvalidArgument, "problem id may only use letters, digits, '-', '_', '.'");
  write_atomic((fs::path(dir_) / "problems" / (p.id + ".json")).string(), canonical_dump(to_json(p)));
  std::lock_guard lk(mu_);
  problems_[p.id] = p;
  return p.id;
}

std::optional<ProblemStatement> SessionManager::problem(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = problems_.find(id);
  if (it == problems_.end()) return std::nullopt;
  return it->second;
}

json SessionManager::start_session(const std::string& problem_id, Mode mode, const json& options_in) {
  auto prob = problem(problem_id);
  if (!prob) throw Error(ErrorCode::UnknownProblem, "unknown problem " + problem_id);
  json options = options_in.is_object() ? options_in : json::object();

  SessionSpec spec;
  spec.problem = *prob;
  spec.mode = mode;
  try {
    spec.config = options.contains("config") ? merge_config(cfg_, options["config"]) : cfg_;
    if (options.contains("intro_vars")) spec.config.intro_vars = intro_vars_from(options["intro_vars"].get<std::string>());
    if (options.contains("prover_retries")) spec.config.prover_retries = options["prover_retries"].get<int>();
    if (options.contains("trivial_budget")) spec.config.trivial_budget = options["trivial_budget"].get<double>();
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::ConfigError, std::string("bad session options: ") + ex.what());
  }
  if (spec.config.prover_retries < 0) throw Error(ErrorCode::ConfigError, "prover_retries must be >= 0");

  {
    std::lock_guard lk(mu_);
    spec.id = "s-" + padded(++session_counter_);
  }
  fs::path sdir = fs::path(dir_) / "sessions" / spec.id;
  fs::create_directories(sdir);
  double now = opts_.clock();
  json meta = {{"spec", to_json(spec)}, {"options", options}, {"created_at", now}};
  write_atomic((sdir / "meta.json").string(), canonical_dump(meta));

  auto e = open_entry(spec, options, now, {});
  {
    std::lock_guard lk(mu_);
    sessions_[spec.id] = e;
  }
  schedule(spec.id);
  return summary(spec.id);
}

std::shared_ptr<SessionManager::Entry> SessionManager::entry(const std::string& id) const {
  std::lock_guard lk(mu_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "unknown session " + id);
  return it->second;
}

json SessionManager::summary(const std::string& id) const {
  auto e = entry(id);
  SessionState st = e->session->state();
  return {{"id", e->id},
          {"problem_id", e->session->spec().problem.id},
          {"mode", to_string(e->session->spec().mode)},
          {"state", to_string(st.current_phase())},
          {"created_at", e->created_at},
          {"updated_at", e->updated_at.load()},
          {"last_seq", st.last_seq},
          {"verdict", st.verdict ? to_json(*st.verdict) : json(nullptr)},
          {"awaiting", st.awaiting ? to_json(*st.awaiting) : json(nullptr)}};
}

std::vector<json> SessionManager::list() const {
  std::vector<std::string> ids;
  {
    std::lock_guard lk(mu_);
    for (auto& [id, e] : sessions_) ids.push_back(id);
  }
  std::vector<json> out;
  for (auto& id : ids) out.push_back(summary(id));
  return out;
}

std::vector<SessionEvent> SessionManager::events_since(const std::string& id, int64_t since) const {
  return entry(id)->session->events_since(since);
}

bool SessionManager::finished(const std::string& id) const { return entry(id)->session->finished(); }

bool SessionManager::wait_events(const std::string& id, int64_t since, double timeout_seconds) const {
  auto e = entry(id);
  auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);
  std::unique_lock lk(notify_mu_);
  for (;;) {
    if (e->session->last_seq() > since) return true;
    if (e->session->finished()) return false;
    {
      std::lock_guard g(mu_);
      if (stop_) return false;
    }
    uint64_t gen = generation_;
    if (!notify_cv_.wait_until(lk, deadline, [&] { return generation_ != gen; }))
      return e->session->last_seq() > since;
  }
}

SessionEvent SessionManager::decide(const std::string& id, const Decision& d, std::optional<int64_t> expected_seq) {
  auto e = entry(id);
  SessionEvent ev = e->session->apply_decision(d, expected_seq);
  notify_all();
  schedule(id);
  return ev;
}

json SessionManager::report(const std::string& id) const {
  fs::path stored = fs::path(dir_) / "reports" / (id + ".json");
  if (safe_id(id) && fs::exists(stored)) return json::parse(read_file(stored.string()));
  auto e = entry(id);
  return build_report(e->session->spec(), e->session->state(), e->session->events());
}

void SessionManager::finish_session(const Entry& e) {
  json r = build_report(e.session->spec(), e.session->state(), e.session->events());
  write_atomic((fs::path(dir_) / "reports" / (e.id + ".json")).string(), canonical_dump(r));
}

void SessionManager::schedule(const std::string& id) {
  {
    std::lock_guard lk(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end() || it->second->scheduled || stop_) return;
    it->second->scheduled = true;
    queue_.push_back(id);
  }
  work_cv_.notify_one();
}

void SessionManager::worker_loop() {
  for (;;) {
    std::shared_ptr<Entry> e;
    {
      std::unique_lock lk(mu_);
      work_cv_.wait(lk, [&] { return stop_ || !queue_.empty(); });
      if (stop_) return;
      e = sessions_.at(queue_.front());
      queue_.pop_front();
      ++running_;
    }
    run_session(e);
    {
      std::lock_guard lk(mu_);
      --running_;
    }
    idle_cv_.notify_all();
  }
}

void SessionManager::run_session(const std::shared_ptr<Entry>& e) {
  Session& s = *e->session;
  for (;;) {
    while (!s.finished() && !s.awaiting_decision()) {
      {
        std::lock_guard lk(mu_);
        if (stop_) {
          e->scheduled = false;
          return;
        }
      }
      try {
        s.advance();
      } catch (const Error& ex) {
        // A decision raced in or the log could not be written; the next
        // schedule() picks the session up again.
        std::cerr << "session " << e->id << ": " << ex.what() << "\n";
        break;
      }
      notify_all();
    }
    if (s.finished()) {
      try {
        finish_session(*e);
      } catch (const std::exception& ex) {
        std::cerr << "session " << e->id << ": report not stored: " << ex.what() << "\n";
      }
    }
    std::lock_guard lk(mu_);
    // Re-check under the lock so a decision applied just now is not lost.
    if (s.finished() || s.awaiting_decision() || stop_) {
      e->scheduled = false;
      break;
    }
  }
  notify_all();
}

void SessionManager::wait_idle() const {
  std::unique_lock lk(mu_);
  idle_cv_.wait(lk, [&] { return queue_.empty() && running_ == 0; });
}

std::string SessionManager::start_batch(const json& body) {
  if (!body.is_object()) throw Error(ErrorCode::InvalidArgument, "batch body must be an object");
  std::vector<DatasetRecord> records;
  if (body.contains("records")) {
    if (!body["records"].is_array()) throw Error(ErrorCode::InvalidArgument, "'records' must be an array");
    std::string lines;
    for (auto& r : body["records"]) lines += r.dump() + "\n";
    records = parse_dataset(lines);
  } else if (body.contains("dataset_path")) {
    records = load_dataset(body["dataset_path"].get<std::string>());
  } else {
    throw Error(ErrorCode::InvalidArgument, "batch needs 'records' or 'dataset_path'");
  }
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "batch has no records");
  int runs = body.value("runs", 1);
  if (runs < 1) throw Error(ErrorCode::InvalidArgument, "runs must be >= 1");
  bool baseline = body.value("baseline", false);
  bool include_trivial = body.value("include_trivial", false);
  PipelineConfig cfg = body.contains("config") ? merge_config(cfg_, body["config"]) : cfg_;

  auto b = std::make_shared<Batch>();
  {
    std::lock_guard lk(mu_);
    b->id = "b-" + padded(++batch_counter_);
    batches_[b->id] = b;
  }
  b->total = records.size() * static_cast<size_t>(runs);
  std::string path = (fs::path(dir_) / "batches" / (b->id + ".json")).string();
  AgentClient::Sleeper sleeper = opts_.sleeper;
  Batch* raw = b.get();
  b->thread = std::thread([raw, records = std::move(records), cfg, runs, baseline, include_trivial, path, sleeper] {
    json result;
    std::string status = "done", error;
    try {
      ServiceFactory factory(cfg, sleeper);
      auto progress = [raw](size_t done, size_t) { raw->done = done; };
      BatchResult runs_out = baseline ? run_answer_baseline(records, factory, runs, cfg.batch_workers, progress)
                                      : run_batch(records, factory, runs, cfg.batch_workers, progress);
      result = {{"pipeline", baseline ? "answer_baseline" : "structured"},
                {"include_trivial", include_trivial},
                {"runs", to_json(runs_out)}};
      try {
        result["metrics"] = to_json(compute_metrics(runs_out, include_trivial));
      } catch (const Error&) {
        result["metrics"] = nullptr;
      }
    } catch (const std::exception& ex) {
      status = "failed";
      error = ex.what();
    }
    json stored = {{"id", raw->id}, {"status", status}, {"total", raw->total.load()}, {"done", raw->done.load()}};
    if (status == "done") stored["result"] = result;
    else stored["error"] = error;
    try {
      write_atomic(path, canonical_dump(stored));
    } catch (const std::exception& ex) {
      std::cerr << "batch " << raw->id << ": result not stored: " << ex.what() << "\n";
    }
    std::lock_guard lk(raw->mu);
    raw->status = status;
    raw->result = std::move(result);
    raw->error = error;
  });
  return b->id;
}

json SessionManager::batch_status(const std::string& id) const {
  std::shared_ptr<Batch> b;
  {
    std::lock_guard lk(mu_);
    auto it = batches_.find(id);
    if (it != batches_.end()) b = it->second;
  }
  if (!b) {
    fs::path stored = fs::path(dir_) / "batches" / (id + ".json");
    if (safe_id(id) && fs::exists(stored)) return json::parse(read_file(stored.string()));
    throw Error(ErrorCode::UnknownSession, "unknown batch " + id);
  }
  std::lock_guard lk(b->mu);
  json j = {{"id", b->id}, {"status", b->status}, {"total", b->total.load()}, {"done", b->done.load()}};
  if (b->status == "done") j["result"] = b->result;
  if (b->status == "failed") j["error"] = b->error;
  return j;
}

}  // namespace verify
