#pragma once

// Pipeline configuration file and the factory that turns it into live agent
// clients and a proof backend.

#include "verify/agents.hpp"
#include "verify/prover_backend.hpp"
#include "verify/solution.hpp"

#include <memory>
#include <string>
#include <vector>

namespace verify {

enum class IntroVars { On, Off, Both };
std::string_view to_string(IntroVars v);
IntroVars intro_vars_from(std::string_view s);

struct PipelineConfig {
  // agents
  std::string transport = "mock";  // "mock" | "http"
  std::string mock_script;         // path
  json mock_inline;                // inline script, used when no path is set
  std::string templates_dir;       // empty: built-in templates
  int max_inflight_llm_calls = 4;
  double backoff_base = 1.0;
  AgentEndpoint solver = endpoint_from_json(AgentRole::Solver, nullptr);
  AgentEndpoint translator = endpoint_from_json(AgentRole::Translator, nullptr);
  AgentEndpoint prover = endpoint_from_json(AgentRole::Prover, nullptr);

  BackendConfig backend;

  // pipeline
  int prover_retries = 2;
  double trivial_budget = 30.0;  // seconds; <= 0 disables the trivial check
  IntroVars intro_vars = IntroVars::Off;
  std::vector<RewriteRule> rewrites;

  // batch
  int batch_workers = 2;
};

// Relative paths are resolved against `base_dir`.
PipelineConfig config_from_json(const json& j, const std::string& base_dir = ".");
PipelineConfig load_config(const std::string& path);
json to_json(const PipelineConfig& c);

// Applies a partial config object (same shape as the file) on top of `base`.
PipelineConfig merge_config(const PipelineConfig& base, const json& overrides);

struct Services {
  Agents agents;
  std::shared_ptr<ProofBackend> backend;
  BackendConfig backend_cfg;
};

// Shares the proof backend and the LLM in-flight cap; every make() gets its
// own transport so scripted mocks replay from their first response.
class ServiceFactory {
 public:
  explicit ServiceFactory(PipelineConfig cfg, AgentClient::Sleeper sleeper = {});

  std::shared_ptr<Services> make() const;
  const PipelineConfig& config() const { return cfg_; }
  std::shared_ptr<ProofBackend> backend() const { return backend_; }

 private:
  PipelineConfig cfg_;
  AgentClient::Sleeper sleeper_;
  TemplateSet templates_;
  ordered_json mock_script_;
  std::shared_ptr<ProofBackend> backend_;
  std::shared_ptr<CallLimiter> limiter_;
};

}  // namespace verify
