#pragma once

// Client layer for the three LLM roles: prompt templating, the chat transport
// (HTTP or scripted mock), retry with backoff, and code extraction.

#include "verify/common.hpp"
#include "verify/solution.hpp"

#include <algorithm>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace verify {

enum class AgentRole { Solver, Translator, Prover };
std::string_view to_string(AgentRole r);
AgentRole agent_role_from(std::string_view s);

struct AgentEndpoint {
  AgentRole role = AgentRole::Solver;
  std::string base_url;
  std::string model_name;
  int max_retries = 2;
  double timeout = 120.0;
  std::map<std::string, double> sampling;
  int max_tokens = 4096;
};

AgentEndpoint endpoint_from_json(AgentRole role, const json& j);
json to_json(const AgentEndpoint& e);

struct PromptOptions {
  bool introduce_variables = false;
  std::vector<Statement> extra_context;
};

struct AgentTranscript {
  std::string id;
  AgentRole role = AgentRole::Solver;
  std::string prompt;
  std::string response;
  int attempt = 0;
  double latency = 0.0;
  std::optional<ErrorCode> error;
};

json to_json(const AgentTranscript& t);
AgentTranscript transcript_from_json(const json& j);

// Prompt templates keyed "<role>_vars_on" / "<role>_vars_off" with
// {{placeholder}} fields.
class TemplateSet {
 public:
  static TemplateSet defaults();
  // Loads <dir>/<key>.txt for every key present; keys absent from the
  // directory fall back to the built-in defaults.
  static TemplateSet from_directory(const std::string& dir);

  void set(const std::string& key, std::string body) { templates_[key] = std::move(body); }
  void erase(const std::string& key) { templates_.erase(key); }
  const std::string* find(const std::string& key) const;

 private:
  std::map<std::string, std::string> templates_;
};

std::string template_key(AgentRole role, bool introduce_variables);

using PromptPayload = std::map<std::string, std::string>;

// Byte-deterministic. Throws Error(MissingTemplate) when no template exists
// for (role, opts.introduce_variables) and Error(InvalidArgument) when a
// placeholder has no value. opts.extra_context fills {{context}} when the
// payload does not.
std::string render_prompt(const TemplateSet& templates, AgentRole role, const PromptPayload& payload,
                          const PromptOptions& opts);

// Transport: returns the completion text or throws Error(Timeout |
// TransportError).
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(const AgentEndpoint& endpoint, const std::string& prompt) = 0;
};

// OpenAI-compatible chat-completions over HTTP.
class HttpChatBackend : public ChatBackend {
 public:
  std::string complete(const AgentEndpoint& endpoint, const std::string& prompt) override;

  static json request_body(const AgentEndpoint& endpoint, const std::string& prompt);
  static std::string response_content(const json& body);
};

// Scripted responses. Script keys, tried in this order:
//   "<sha256 of prompt>"          exact prompt match
//   "contains:<text>"             prompt substring (file order)
//   "*"                           anything
// Each may carry a role prefix, e.g. "Translator:contains:x = 3". A key maps
// to a list of responses consumed in order, the last repeating. A response is
// a string or {"text": ...} or {"error": "timeout" | "transport" | "empty"}.
class MockChatBackend : public ChatBackend {
 public:
  explicit MockChatBackend(ordered_json script);
  static std::shared_ptr<MockChatBackend> from_file(const std::string& path);

  std::string complete(const AgentEndpoint& endpoint, const std::string& prompt) override;

  size_t calls() const;

 private:
  struct Entry {
    std::optional<AgentRole> role;
    enum class Kind { Hash, Contains, Any } kind;
    std::string needle;
    std::vector<json> responses;
    size_t cursor = 0;
  };

  std::vector<Entry> entries_;
  mutable std::mutex mu_;
  size_t calls_ = 0;
};

class AgentError : public Error {
 public:
  AgentError(ErrorCode code, const std::string& message, AgentTranscript transcript)
      : Error(code, message), transcript_(std::move(transcript)) {}
  const AgentTranscript& transcript() const { return transcript_; }

 private:
  AgentTranscript transcript_;
};

struct RetryPolicy {
  double backoff_base = 1.0;
  double backoff_factor = 2.0;
  double jitter = 0.2;
};

// Delay before retry number `retry` (1-based).
double backoff_delay(int retry, const RetryPolicy& policy, std::mt19937_64& rng);

// Counting semaphore bounding outstanding LLM requests; share one instance
// between clients to get a process-wide cap.
class CallLimiter {
 public:
  explicit CallLimiter(int slots) : slots_(std::max(1, slots)) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int slots_;
};

class AgentClient {
 public:
  using Sleeper = std::function<void(double seconds)>;

  AgentClient(std::shared_ptr<ChatBackend> backend, std::shared_ptr<CallLimiter> limiter, RetryPolicy policy = {},
              Sleeper sleeper = {}, uint64_t seed = 0x5eed);
  AgentClient(std::shared_ptr<ChatBackend> backend, int max_inflight, RetryPolicy policy = {},
              Sleeper sleeper = {}, uint64_t seed = 0x5eed)
      : AgentClient(std::move(backend), std::make_shared<CallLimiter>(max_inflight), policy, std::move(sleeper),
                    seed) {}

  // Retries transport failures up to endpoint.max_retries. Returns the
  // transcript on success; throws AgentError (carrying the transcript of the
  // last attempt) once retries are exhausted.
  AgentTranscript call(const AgentEndpoint& endpoint, const std::string& prompt);

  ChatBackend& backend() { return *backend_; }

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<CallLimiter> limiter_;
  RetryPolicy policy_;
  Sleeper sleeper_;
  std::mutex mu_;
  std::mt19937_64 rng_;
};

// First fenced code block; otherwise the whole response if it reads as code.
std::optional<std::string> extract_code_block(std::string_view response);

struct Agents {
  AgentEndpoint solver{AgentRole::Solver};
  AgentEndpoint translator{AgentRole::Translator};
  AgentEndpoint prover{AgentRole::Prover};
  TemplateSet templates = TemplateSet::defaults();
  std::shared_ptr<AgentClient> client;

  const AgentEndpoint& endpoint(AgentRole role) const;
};

struct AgentOutput {
  AgentTranscript transcript;
  std::optional<std::string> code;  // extracted code; absent => NoCodeBlock
};

// A named established result offered to the prover as context.
struct ContextItem {
  std::string name;
  std::string code;
};

std::string format_variables(const std::vector<VariableDecl>& vars);

AgentTranscript solve(const Agents& agents, const ProblemStatement& prob, const PromptOptions& opts);
AgentOutput formalize(const Agents& agents, const Statement& stmt, const std::vector<Statement>& hypotheses,
                      const std::vector<VariableDecl>& vars, const PromptOptions& opts);
AgentOutput prove(const Agents& agents, const std::string& goal_code, const std::vector<ContextItem>& context,
                  const std::vector<VariableDecl>& vars, const PromptOptions& opts);

}  // namespace verify
