#pragma once

// Owns every live session of a server process: persistence under a data
// directory, a worker pool that drives sessions until they block, crash
// recovery by replay, and background batch jobs.
//
// Layout:
//   problems/<id>.json
//   sessions/<id>/meta.json     {spec, options, created_at}
//   sessions/<id>/events.jsonl  one SessionEvent per line, append-only
//   reports/<id>.json           written once a session finishes
//   batches/<id>.json           written once a batch finishes

#include "verify/bench.hpp"
#include "verify/pipeline.hpp"

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

namespace verify {

class SessionManager {
 public:
  struct Options {
    int workers = 2;
    Clock clock = wall_clock;
    AgentClient::Sleeper sleeper;  // retry backoff; tests pass a no-op
  };

  SessionManager(std::string data_dir, PipelineConfig cfg, Options opts);
  SessionManager(std::string data_dir, PipelineConfig cfg) : SessionManager(std::move(data_dir), std::move(cfg), Options{}) {}
  ~SessionManager();

  SessionManager(const SessionManager&) = delete;
  SessionManager& operator=(const SessionManager&) = delete;

  // Loads persisted problems and sessions. A truncated final log line (a
  // crash mid-write) is dropped; sessions that were running resume.
  // Returns the number of sessions restored.
  size_t recover();

  // Returns the id: the problem's own, or one derived from its content.
  std::string add_problem(ProblemStatement p);
  std::optional<ProblemStatement> problem(const std::string& id) const;

  // options: {intro_vars?, prover_retries?, trivial_budget?, config?} where
  // config has the config-file shape. Returns the summary.
  json start_session(const std::string& problem_id, Mode mode, const json& options = json::object());

  json summary(const std::string& id) const;
  std::vector<json> list() const;
  std::vector<SessionEvent> events_since(const std::string& id, int64_t since) const;
  // Blocks until an event after `since` exists, the session has finished,
  // the timeout elapses or the manager shuts down. True when new events exist.
  bool wait_events(const std::string& id, int64_t since, double timeout_seconds) const;
  bool finished(const std::string& id) const;

  SessionEvent decide(const std::string& id, const Decision& d, std::optional<int64_t> expected_seq);

  json report(const std::string& id) const;

  // body: {dataset_path | records, runs?, baseline?, include_trivial?, config?}
  std::string start_batch(const json& body);
  json batch_status(const std::string& id) const;

  // Blocks until no session is queued or running (tests, CLI).
  void wait_idle() const;
  const std::string& data_dir() const { return dir_; }

 private:
  struct Entry;
  struct Batch;

  std::shared_ptr<Entry> entry(const std::string& id) const;
  std::shared_ptr<Entry> open_entry(SessionSpec spec, json options, double created_at,
                                    std::vector<SessionEvent> events);
  std::shared_ptr<ServiceFactory> factory_for(const json& options);
  void schedule(const std::string& id);
  void worker_loop();
  void run_session(const std::shared_ptr<Entry>& e);
  void finish_session(const Entry& e);
  void notify_all() const;

  std::string dir_;
  PipelineConfig cfg_;
  Options opts_;
  std::shared_ptr<ServiceFactory> factory_;

  mutable std::mutex mu_;
  std::map<std::string, ProblemStatement> problems_;
  std::map<std::string, std::shared_ptr<Entry>> sessions_;
  std::map<std::string, std::shared_ptr<Batch>> batches_;
  long session_counter_ = 0;
  long batch_counter_ = 0;

  std::deque<std::string> queue_;
  int running_ = 0;
  bool stop_ = false;
  mutable std::condition_variable work_cv_;
  mutable std::condition_variable idle_cv_;
  std::vector<std::thread> workers_;

  mutable std::mutex notify_mu_;
  mutable std::condition_variable notify_cv_;
  mutable uint64_t generation_ = 0;
};

}  // namespace verify
