#include "verify/prover_backend.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <regex>
#include <thread>

namespace verify {

namespace fs = std::filesystem;

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Error: return "error";
    case Severity::Warning: return "warning";
    case Severity::Info: return "info";
  }
  return "error";
}

namespace {

Severity severity_from(std::string_view s) {
  if (s == "warning") return Severity::Warning;
  if (s == "info" || s == "information") return Severity::Info;
  return Severity::Error;
}

constexpr std::string_view kTimeoutMessage = "Timeout: compilation exceeded the time limit";

}  // namespace

bool CompileResult::timed_out() const {
  for (const auto& d : diagnostics) {
    if (d.message.rfind("Timeout", 0) == 0) return true;
  }
  return false;
}

json to_json(const Diagnostic& d) {
  return {{"severity", std::string(to_string(d.severity))},
          {"line", d.line},
          {"column", d.column},
          {"message", d.message}};
}

Diagnostic diagnostic_from_json(const json& j) {
  Diagnostic d;
  d.severity = severity_from(j.value("severity", "error"));
  d.line = j.value("line", 0);
  d.column = j.value("column", 0);
  d.message = j.value("message", "");
  return d;
}

json to_json(const CompileResult& r) {
  json diags = json::array();
  for (const auto& d : r.diagnostics) diags.push_back(to_json(d));
  json j = {{"status", r.ok() ? "Ok" : "Error"}, {"diagnostics", diags}, {"elapsed", r.elapsed}};
  if (!r.raw_tail.empty()) j["raw_tail"] = r.raw_tail;
  return j;
}

CompileResult compile_result_from_json(const json& j) {
  CompileResult r;
  r.status = j.value("status", "Ok") == "Ok" ? CompileStatus::Ok : CompileStatus::Error;
  for (const auto& d : j.value("diagnostics", json::array())) r.diagnostics.push_back(diagnostic_from_json(d));
  r.elapsed = j.value("elapsed", 0.0);
  r.raw_tail = j.value("raw_tail", "");
  return r;
}

CompileResult parse_compiler_output(std::string_view output, int exit_code) {
  static const std::regex kLine(R"(^(.*?):(\d+):(\d+):\s*(error|warning|info|information)(?:\([^)]*\))?:\s*(.*)$)");
  CompileResult r;
  for (const auto& line : split_lines(output)) {
    std::smatch m;
    if (std::regex_match(line, m, kLine)) {
      r.diagnostics.push_back(
          {severity_from(m[4].str()), std::stoi(m[2].str()), std::stoi(m[3].str()), m[5].str()});
    } else if (!trim(line).empty()) {
      r.raw_tail += line + "\n";
    }
  }
  bool has_error = std::any_of(r.diagnostics.begin(), r.diagnostics.end(),
                               [](const Diagnostic& d) { return d.severity == Severity::Error; });
  if (exit_code != 0 && !has_error) {
    r.diagnostics.push_back({Severity::Error, 0, 0, "compiler exited with status " + std::to_string(exit_code)});
    has_error = true;
  }
  r.status = has_error ? CompileStatus::Error : CompileStatus::Ok;
  return r;
}

std::string_view to_string(FormalStatus s) {
  switch (s) {
    case FormalStatus::Unchecked: return "Unchecked";
    case FormalStatus::CompileOk: return "CompileOk";
    case FormalStatus::CompileError: return "CompileError";
    case FormalStatus::ProvedOk: return "ProvedOk";
    case FormalStatus::ProofFailed: return "ProofFailed";
    case FormalStatus::AcceptedWithoutProof: return "AcceptedWithoutProof";
  }
  return "Unchecked";
}

FormalStatus formal_status_from(std::string_view s) {
  for (auto st : {FormalStatus::Unchecked, FormalStatus::CompileOk, FormalStatus::CompileError,
                  FormalStatus::ProvedOk, FormalStatus::ProofFailed, FormalStatus::AcceptedWithoutProof}) {
    if (to_string(st) == s) return st;
  }
  return FormalStatus::Unchecked;
}

json to_json(const Formalization& f) {
  json diags = json::array();
  for (const auto& d : f.diagnostics) diags.push_back(to_json(d));
  json j = {{"source_sid", f.source_sid},
            {"name", f.name},
            {"code", f.code},
            {"status", std::string(to_string(f.status))},
            {"diagnostics", diags}};
  j["proof_code"] = f.proof_code ? json(*f.proof_code) : json(nullptr);
  return j;
}

Formalization formalization_from_json(const json& j) {
  Formalization f;
  f.source_sid = j.value("source_sid", "");
  f.name = j.value("name", "");
  f.code = j.value("code", "");
  f.status = formal_status_from(j.value("status", "Unchecked"));
  for (const auto& d : j.value("diagnostics", json::array())) f.diagnostics.push_back(diagnostic_from_json(d));
  if (j.contains("proof_code") && j["proof_code"].is_string()) f.proof_code = j["proof_code"].get<std::string>();
  return f;
}

std::string established_code(const Formalization& f) {
  if (f.status == FormalStatus::AcceptedWithoutProof) return f.code + " := by\n  sorry";
  if (f.status == FormalStatus::ProvedOk && f.proof_code) return f.code + " := " + *f.proof_code;
  throw Error(ErrorCode::InvalidArgument, "formalization '" + f.name + "' is not established");
}

BackendConfig backend_config_from_json(const json& j) {
  BackendConfig c;
  if (j.is_null()) return c;
  c.kind = j.value("kind", c.kind);
  c.toolchain_root = j.value("toolchain_root", c.toolchain_root);
  c.project_dir = j.value("project_dir", c.project_dir);
  if (j.contains("command")) c.command = j["command"].get<std::vector<std::string>>();
  c.prelude = j.value("prelude", c.prelude);
  c.timeout_seconds = j.value("timeout_seconds", c.timeout_seconds);
  c.max_concurrent_compiles = j.value("max_concurrent_compiles", c.max_concurrent_compiles);
  c.stub_script = j.value("stub_script", c.stub_script);
  if (j.contains("stub_inline")) c.stub_inline = j["stub_inline"];
  if (j.contains("trivial_tactics")) c.trivial_tactics = j["trivial_tactics"].get<std::vector<std::string>>();
  if (j.contains("incomplete_markers"))
    c.incomplete_markers = j["incomplete_markers"].get<std::vector<std::string>>();
  if (c.kind != "stub" && c.kind != "lean") throw Error(ErrorCode::ConfigError, "unknown backend kind " + c.kind);
  if (c.timeout_seconds <= 0) throw Error(ErrorCode::ConfigError, "backend timeout must be positive");
  if (c.max_concurrent_compiles < 1) throw Error(ErrorCode::ConfigError, "max_concurrent_compiles must be >= 1");
  return c;
}

json to_json(const BackendConfig& c) {
  json j = {{"kind", c.kind},
            {"toolchain_root", c.toolchain_root},
            {"project_dir", c.project_dir},
            {"command", c.command},
            {"prelude", c.prelude},
            {"timeout_seconds", c.timeout_seconds},
            {"max_concurrent_compiles", c.max_concurrent_compiles},
            {"stub_script", c.stub_script},
            {"trivial_tactics", c.trivial_tactics},
            {"incomplete_markers", c.incomplete_markers}};
  if (!c.stub_inline.is_null()) j["stub_inline"] = c.stub_inline;
  return j;
}

// ---------------------------------------------------------------------------

ProofBackend::ProofBackend(int max_concurrent) : slots_(std::max(1, max_concurrent)) {}

CompileResult ProofBackend::check_compile(std::string_view code, std::optional<double> timeout) {
  {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return slots_ > 0; });
    --slots_;
  }
  struct Release {
    ProofBackend* self;
    ~Release() {
      {
        std::lock_guard lock(self->mu_);
        ++self->slots_;
      }
      self->cv_.notify_one();
    }
  } release{this};
  return do_compile(code, timeout.value_or(default_timeout()));
}

// ---------------------------------------------------------------------------

StubBackend::Rule StubBackend::parse_rule(const json& j) {
  Rule r;
  if (j.contains("code_sha256")) r.sha = j["code_sha256"].get<std::string>();
  if (j.contains("contains")) r.contains = j["contains"].get<std::string>();
  r.result = compile_result_from_json(j);
  r.sleep = j.value("sleep", 0.0);
  return r;
}

StubBackend::StubBackend(const json& script, double timeout_seconds, int max_concurrent)
    : ProofBackend(max_concurrent), timeout_(timeout_seconds) {
  const json* rules = &script;
  if (script.is_object()) {
    if (script.contains("default")) fallback_ = parse_rule(script["default"]);
    static const json kEmpty = json::array();
    rules = script.contains("rules") ? &script["rules"] : &kEmpty;
  }
  if (!rules->is_null()) {
    for (const auto& r : *rules) rules_.push_back(parse_rule(r));
  }
}

CompileResult StubBackend::do_compile(std::string_view code, double timeout) {
  ++count_;
  const Rule* hit = &fallback_;
  std::string sha;
  for (const auto& r : rules_) {
    if (r.sha) {
      if (sha.empty()) sha = sha256_hex(code);
      if (*r.sha != sha) continue;
    }
    if (r.contains && code.find(*r.contains) == std::string_view::npos) continue;
    if (!r.sha && !r.contains) continue;
    hit = &r;
    break;
  }
  if (hit->sleep > 0) {
    std::this_thread::sleep_for(std::chrono::duration<double>(std::min(hit->sleep, timeout)));
    if (hit->sleep > timeout) {
      CompileResult r;
      r.status = CompileStatus::Error;
      r.diagnostics.push_back({Severity::Error, 0, 0, std::string(kTimeoutMessage)});
      r.elapsed = timeout;
      return r;
    }
  }
  CompileResult r = hit->result;
  if (std::any_of(r.diagnostics.begin(), r.diagnostics.end(),
                  [](const Diagnostic& d) { return d.severity == Severity::Error; }))
    r.status = CompileStatus::Error;
  return r;
}

// ---------------------------------------------------------------------------

namespace {

bool executable_exists(const std::string& cmd) {
  if (cmd.find('/') != std::string::npos) return ::access(cmd.c_str(), X_OK) == 0;
  const char* path = std::getenv("PATH");
  if (path == nullptr) return false;
  std::string p(path);
  size_t start = 0;
  while (start <= p.size()) {
    size_t colon = p.find(':', start);
    std::string dir = p.substr(start, colon == std::string::npos ? std::string::npos : colon - start);
    if (!dir.empty() && ::access((dir + "/" + cmd).c_str(), X_OK) == 0) return true;
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  return false;
}

struct ProcessOutput {
  std::string output;
  int exit_code = 0;
  bool timed_out = false;
};

ProcessOutput run_process(const std::vector<std::string>& argv, const std::string& cwd, double timeout) {
  int pipefd[2];
  if (::pipe(pipefd) != 0) throw Error(ErrorCode::BackendUnavailable, "pipe() failed");
  pid_t pid = ::fork();
  if (pid < 0) {
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    throw Error(ErrorCode::BackendUnavailable, "fork() failed");
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(pipefd[1], STDOUT_FILENO);
    ::dup2(pipefd[1], STDERR_FILENO);
    ::close(pipefd[0]);
    ::close(pipefd[1]);
    if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) ::_exit(127);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    ::execvp(args[0], args.data());
    ::_exit(127);
  }
  ::close(pipefd[1]);
  ::fcntl(pipefd[0], F_SETFL, O_NONBLOCK);

  ProcessOutput out;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout);
  char buf[4096];
  bool open = true;
  while (open) {
    auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      out.timed_out = true;
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      break;
    }
    int ms = static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1;
    pollfd pfd{pipefd[0], POLLIN, 0};
    int rc = ::poll(&pfd, 1, std::min(ms, 200));
    if (rc > 0) {
      ssize_t n = ::read(pipefd[0], buf, sizeof buf);
      if (n > 0) {
        out.output.append(buf, static_cast<size_t>(n));
      } else if (n == 0) {
        open = false;
      }
    }
  }
  ::close(pipefd[0]);
  int status = 0;
  ::waitpid(pid, &status, 0);
  out.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
  return out;
}

}  // namespace

LeanBackend::LeanBackend(BackendConfig cfg) : ProofBackend(cfg.max_concurrent_compiles), cfg_(std::move(cfg)) {
  if (!cfg_.command.empty()) {
    command_ = cfg_.command;
  } else {
    const std::string bin = cfg_.toolchain_root.empty() ? "" : cfg_.toolchain_root + "/bin/";
    if (!cfg_.project_dir.empty()) {
      command_ = {bin + "lake", "env", "lean"};
    } else {
      command_ = {bin + "lean"};
    }
  }
}

CompileResult LeanBackend::do_compile(std::string_view code, double timeout) {
  if (!executable_exists(command_.front()))
    throw Error(ErrorCode::BackendUnavailable, "proof assistant not found: " + command_.front());

  std::string tmpl = (fs::temp_directory_path() / "verify-XXXXXX").string();
  if (::mkdtemp(tmpl.data()) == nullptr) throw Error(ErrorCode::BackendUnavailable, "mkdtemp failed");
  const fs::path dir(tmpl);
  struct Cleanup {
    fs::path dir;
    ~Cleanup() {
      std::error_code ec;
      fs::remove_all(dir, ec);
    }
  } cleanup{dir};

  const fs::path file = dir / "Main.lean";
  write_file(file.string(), code);

  std::vector<std::string> argv = command_;
  argv.push_back(file.string());
  const auto start = std::chrono::steady_clock::now();
  ProcessOutput proc = run_process(argv, cfg_.project_dir.empty() ? dir.string() : cfg_.project_dir, timeout);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (proc.exit_code == 127 && proc.output.empty())
    throw Error(ErrorCode::BackendUnavailable, "failed to launch " + command_.front());

  CompileResult r;
  if (proc.timed_out) {
    r.status = CompileStatus::Error;
    r.diagnostics.push_back({Severity::Error, 0, 0, std::string(kTimeoutMessage)});
    r.raw_tail = proc.output;
  } else {
    r = parse_compiler_output(proc.output, proc.exit_code);
  }
  r.elapsed = elapsed;
  return r;
}

std::shared_ptr<ProofBackend> make_backend(const BackendConfig& cfg) {
  if (cfg.kind == "lean") return std::make_shared<LeanBackend>(cfg);
  json script = cfg.stub_inline;
  if (!cfg.stub_script.empty()) script = json::parse(read_file(cfg.stub_script));
  return std::make_shared<StubBackend>(script, cfg.timeout_seconds, cfg.max_concurrent_compiles);
}

// ---------------------------------------------------------------------------

bool contains_incomplete_marker(std::string_view code) { return formal::contains_incomplete_marker(code); }

std::string assemble_unit(const std::string& prelude, const std::vector<Formalization>& hypotheses,
                          const Formalization& goal, const std::string& proof) {
  std::string unit = prelude;
  if (!unit.empty() && unit.back() != '\n') unit.push_back('\n');
  for (const auto& h : hypotheses) unit += "\n" + established_code(h) + "\n";
  unit += "\n" + goal.code + " := " + proof + "\n";
  return unit;
}

ProofAttempt attempt_proof(ProofBackend& backend, const BackendConfig& cfg, const Formalization& goal,
                           const std::vector<Formalization>& hypotheses, std::string_view prover_output) {
  if (goal.status != FormalStatus::CompileOk && goal.status != FormalStatus::ProofFailed)
    throw Error(ErrorCode::InvalidArgument, "attempt_proof requires a compiled goal");
  ProofAttempt a;
  a.result = goal;
  const std::string proof = formal::proof_body(prover_output);
  a.unit = assemble_unit(cfg.prelude, hypotheses, goal, proof);
  a.compile = backend.check_compile(a.unit);

  const std::string own_part = goal.code + " := " + proof;
  const bool marker = formal::contains_incomplete_marker(own_part, cfg.incomplete_markers);
  a.result.diagnostics = a.compile.diagnostics;
  if (a.compile.ok() && !marker) {
    a.result.status = FormalStatus::ProvedOk;
    a.result.proof_code = proof;
  } else {
    a.result.status = FormalStatus::ProofFailed;
    a.result.proof_code.reset();
    if (marker) a.result.diagnostics.push_back({Severity::Error, 0, 0, "proof contains an incomplete-proof marker"});
  }
  return a;
}

std::string trivial_check_unit(const BackendConfig& cfg, const Formalization& goal) {
  Formalization g = goal;
  if (auto h = formal::statement_header(goal.code, "trivial_check_goal")) g.code = *h;
  std::string proof = "by\n  first";
  for (const auto& t : cfg.trivial_tactics) proof += "\n    | " + t;
  return assemble_unit(cfg.prelude, {}, g, proof);
}

TrivialCheck trivial_check(ProofBackend& backend, const BackendConfig& cfg, const Formalization& goal,
                           double automation_budget) {
  TrivialCheck t;
  if (goal.status != FormalStatus::CompileOk && goal.status != FormalStatus::ProvedOk)
    throw Error(ErrorCode::InvalidArgument, "trivial_check requires a compiled goal");
  t.unit = trivial_check_unit(cfg, goal);
  if (automation_budget <= 0 || cfg.trivial_tactics.empty()) return t;
  t.compile = backend.check_compile(t.unit, automation_budget);
  t.trivial = t.compile->ok() && !formal::contains_incomplete_marker(t.unit, cfg.incomplete_markers);
  return t;
}

}  // namespace verify
