#pragma once

// Proof-assistant interface. A backend only knows how to compile one unit of
// source text; everything else here (proof attempts, the trivial-goal guard)
// is assembled on top of check_compile.

#include "verify/common.hpp"
#include "verify/formal_code.hpp"

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace verify {

enum class Severity { Error, Warning, Info };
std::string_view to_string(Severity s);

struct Diagnostic {
  Severity severity = Severity::Error;
  int line = 0;
  int column = 0;
  std::string message;

  bool operator==(const Diagnostic&) const = default;
};

enum class CompileStatus { Ok, Error };

struct CompileResult {
  CompileStatus status = CompileStatus::Ok;
  std::vector<Diagnostic> diagnostics;
  double elapsed = 0.0;
  // Compiler output lines that did not parse as diagnostics.
  std::string raw_tail;

  bool ok() const { return status == CompileStatus::Ok; }
  bool timed_out() const;
};

json to_json(const Diagnostic& d);
Diagnostic diagnostic_from_json(const json& j);
json to_json(const CompileResult& r);
CompileResult compile_result_from_json(const json& j);

// Parses `file:line:col: severity: message` lines; the rest goes to raw_tail.
CompileResult parse_compiler_output(std::string_view output, int exit_code);

enum class FormalStatus { Unchecked, CompileOk, CompileError, ProvedOk, ProofFailed, AcceptedWithoutProof };
std::string_view to_string(FormalStatus s);
FormalStatus formal_status_from(std::string_view s);

struct Formalization {
  std::string source_sid;
  std::string name;  // canonical declaration name inside assembled units
  std::string code;  // statement header, no proof
  FormalStatus status = FormalStatus::Unchecked;
  std::vector<Diagnostic> diagnostics;
  std::optional<std::string> proof_code;

  bool established() const {
    return status == FormalStatus::ProvedOk || status == FormalStatus::AcceptedWithoutProof;
  }
};

json to_json(const Formalization& f);
Formalization formalization_from_json(const json& j);

// Declaration text for an established formalization: header := proof, or
// header := by sorry for accepted-without-proof items.
std::string established_code(const Formalization& f);

struct BackendConfig {
  std::string kind = "stub";  // "stub" | "lean"
  std::string toolchain_root;
  std::string project_dir;
  std::vector<std::string> command;  // overrides the toolchain-derived command
  std::string prelude =
      "import Mathlib\nimport Aesop\nset_option maxHeartbeats 400000\nopen BigOperators Real Nat Topology Rat\n";
  double timeout_seconds = 60.0;
  int max_concurrent_compiles = 2;
  std::string stub_script;  // path; stub only
  json stub_inline;         // inline script; stub only
  std::vector<std::string> trivial_tactics = {"norm_num", "decide", "omega", "simp", "aesop"};
  std::vector<std::string> incomplete_markers = formal::default_incomplete_markers();
};

BackendConfig backend_config_from_json(const json& j);
json to_json(const BackendConfig& c);

class ProofBackend {
 public:
  explicit ProofBackend(int max_concurrent);
  virtual ~ProofBackend() = default;

  // Throws Error(BackendUnavailable). `timeout` overrides the configured one.
  CompileResult check_compile(std::string_view code, std::optional<double> timeout = std::nullopt);

  virtual std::string name() const = 0;
  virtual double default_timeout() const = 0;

 protected:
  virtual CompileResult do_compile(std::string_view code, double timeout) = 0;

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int slots_;
};

// Hermetic backend driven by a script of scripted compile results.
//
// Script: a JSON list of rules, or {"rules": [...], "default": {...}}. A rule
// matches on `code_sha256` (exact) and/or `contains` (substring); the first
// matching rule supplies {status, diagnostics, elapsed}. A `sleep` field makes
// the stub block for that long, timing out past the configured limit.
class StubBackend : public ProofBackend {
 public:
  StubBackend(const json& script, double timeout_seconds, int max_concurrent = 4);

  std::string name() const override { return "stub"; }
  double default_timeout() const override { return timeout_; }
  size_t compile_count() const { return count_; }

 protected:
  CompileResult do_compile(std::string_view code, double timeout) override;

 private:
  struct Rule {
    std::optional<std::string> sha;
    std::optional<std::string> contains;
    CompileResult result;
    double sleep = 0.0;
  };
  static Rule parse_rule(const json& j);

  std::vector<Rule> rules_;
  Rule fallback_;
  double timeout_;
  std::atomic<size_t> count_{0};
};

// Runs the proof assistant as a subprocess on a private temporary file.
class LeanBackend : public ProofBackend {
 public:
  explicit LeanBackend(BackendConfig cfg);

  std::string name() const override { return "lean"; }
  double default_timeout() const override { return cfg_.timeout_seconds; }
  const std::vector<std::string>& command() const { return command_; }

 protected:
  CompileResult do_compile(std::string_view code, double timeout) override;

 private:
  BackendConfig cfg_;
  std::vector<std::string> command_;
};

std::shared_ptr<ProofBackend> make_backend(const BackendConfig& cfg);

bool contains_incomplete_marker(std::string_view code);

// prelude, established hypotheses, then goal header := proof.
std::string assemble_unit(const std::string& prelude, const std::vector<Formalization>& hypotheses,
                          const Formalization& goal, const std::string& proof);

struct ProofAttempt {
  Formalization result;
  std::string unit;
  CompileResult compile;
};

// Requires goal.status == CompileOk.
ProofAttempt attempt_proof(ProofBackend& backend, const BackendConfig& cfg, const Formalization& goal,
                           const std::vector<Formalization>& hypotheses, std::string_view prover_output);

struct TrivialCheck {
  bool trivial = false;
  std::string unit;
  std::optional<CompileResult> compile;  // absent when the budget is zero
};

std::string trivial_check_unit(const BackendConfig& cfg, const Formalization& goal);
TrivialCheck trivial_check(ProofBackend& backend, const BackendConfig& cfg, const Formalization& goal,
                           double automation_budget);

}  // namespace verify
