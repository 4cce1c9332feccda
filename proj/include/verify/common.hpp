#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace verify {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

enum class ErrorCode {
  // solution_model
  NoLemmasFound,
  MalformedLemmaBlock,
  MissingGoal,
  UnknownVariableType,
  NormalizationCycle,
  // agents
  MissingTemplate,
  Timeout,
  TransportError,
  EmptyResponse,
  NoCodeBlock,
  // prover backend
  BackendUnavailable,
  // linker
  CompositionCompileError,
  // pipeline / sessions
  ConfigError,
  IllegalDecision,
  SessionFinished,
  NotAwaitingDecision,
  StaleSequence,
  UnknownSession,
  UnknownProblem,
  // bench
  MalformedRecord,
  DuplicateId,
  EmptyInput,
  IdSetMismatch,
  // generic
  InvalidArgument,
  IoError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Hex-encoded SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

// Stable, sorted-key JSON text. Used for every on-disk and wire artifact.
std::string canonical_dump(const json& j);

}  // namespace verify
