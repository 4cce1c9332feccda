#pragma once

// HTTP front of a SessionManager. No authentication: binds to localhost
// unless told otherwise.
//
//   POST /api/problems                 ProblemStatement -> 201 {id}
//   GET  /api/problems/{id}
//   POST /api/sessions                 {problem_id, mode, options} -> 201 summary
//   GET  /api/sessions                 [summary]
//   GET  /api/sessions/{id}            summary
//   GET  /api/sessions/{id}/events     ?since=N; event stream, or a JSON array
//                                      with ?format=json
//   POST /api/sessions/{id}/decision   {kind, code?, expected_seq?} -> 200 event
//   GET  /api/reports/{id}[/rendered]
//   POST /api/batch                    -> 202 {id}
//   GET  /api/batch/{id}
//
// Errors are {code, message}.

#include "verify/session_manager.hpp"

#include <memory>
#include <string>

namespace verify {

int http_status(ErrorCode code);

struct ServerOptions {
  std::string bind = "127.0.0.1";
  int port = 8080;  // 0: pick a free port
  double keepalive_seconds = 15.0;  // comment line on idle event streams
  std::string ui_dir;  // served under /ui when set
};

class ApiServer {
 public:
  ApiServer(SessionManager& manager, ServerOptions opts);
  ~ApiServer();

  // Binds; returns the port actually bound. Throws Error(IoError).
  int bind();
  // Serves until stop(). bind() must have succeeded.
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace verify
