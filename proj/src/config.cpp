#include "verify/config.hpp"

#include <filesystem>

namespace verify {

namespace fs = std::filesystem;

std::string_view to_string(IntroVars v) {
  switch (v) {
    case IntroVars::On: return "on";
    case IntroVars::Off: return "off";
    case IntroVars::Both: return "both";
  }
  return "off";
}

IntroVars intro_vars_from(std::string_view s) {
  std::string l = to_lower(s);
  if (l == "on" || l == "true") return IntroVars::On;
  if (l == "off" || l == "false") return IntroVars::Off;
  if (l == "both") return IntroVars::Both;
  throw Error(ErrorCode::ConfigError, "intro_vars must be on, off or both, got " + std::string(s));
}

static std::string resolve(const std::string& path, const std::string& base_dir) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(base_dir) / path).lexically_normal().string();
}

static void apply(PipelineConfig& c, const json& j, const std::string& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config must be a JSON object");
  try {
    if (j.contains("agents")) {
      const json& a = j["agents"];
      c.transport = a.value("transport", c.transport);
      if (a.contains("mock_script")) c.mock_script = resolve(a["mock_script"].get<std::string>(), base_dir);
      if (a.contains("mock_inline")) c.mock_inline = a["mock_inline"];
      if (a.contains("templates_dir")) c.templates_dir = resolve(a["templates_dir"].get<std::string>(), base_dir);
      c.max_inflight_llm_calls = a.value("max_inflight_llm_calls", c.max_inflight_llm_calls);
      c.backoff_base = a.value("backoff_base", c.backoff_base);
      auto endpoint = [&](const char* key, AgentEndpoint& e) {
        if (!a.contains(key)) return;
        json merged = to_json(e);
        merged.update(a[key]);
        e = endpoint_from_json(e.role, merged);
      };
      endpoint("solver", c.solver);
      endpoint("translator", c.translator);
      endpoint("prover", c.prover);
    }
    if (j.contains("backend")) {
      json merged = to_json(c.backend);
      merged.update(j["backend"]);
      c.backend = backend_config_from_json(merged);
      if (j["backend"].contains("stub_script")) c.backend.stub_script = resolve(c.backend.stub_script, base_dir);
      if (j["backend"].contains("project_dir")) c.backend.project_dir = resolve(c.backend.project_dir, base_dir);
    }
    if (j.contains("pipeline")) {
      const json& p = j["pipeline"];
      c.prover_retries = p.value("prover_retries", c.prover_retries);
      c.trivial_budget = p.value("trivial_budget", c.trivial_budget);
      if (p.contains("intro_vars")) c.intro_vars = intro_vars_from(p["intro_vars"].get<std::string>());
      if (p.contains("rewrites")) c.rewrites = rewrite_rules_from_json(p["rewrites"]);
    }
    if (j.contains("batch")) c.batch_workers = j["batch"].value("workers", c.batch_workers);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad config: ") + e.what());
  }
  if (c.transport != "mock" && c.transport != "http")
    throw Error(ErrorCode::ConfigError, "agents.transport must be mock or http");
  if (c.prover_retries < 0) throw Error(ErrorCode::ConfigError, "prover_retries must be >= 0");
  if (c.max_inflight_llm_calls < 1) throw Error(ErrorCode::ConfigError, "max_inflight_llm_calls must be >= 1");
  if (c.batch_workers < 1) throw Error(ErrorCode::ConfigError, "batch.workers must be >= 1");
  if (c.backoff_base < 0) throw Error(ErrorCode::ConfigError, "backoff_base must be >= 0");
}

PipelineConfig config_from_json(const json& j, const std::string& base_dir) {
  PipelineConfig c;
  if (!j.is_null()) apply(c, j, base_dir);
  return c;
}

PipelineConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "config " + path + ": " + e.what());
  }
  return config_from_json(j, fs::path(path).parent_path().string());
}

PipelineConfig merge_config(const PipelineConfig& base, const json& overrides) {
  PipelineConfig c = base;
  if (!overrides.is_null()) apply(c, overrides, ".");
  return c;
}

json to_json(const PipelineConfig& c) {
  json rewrites = json::array();
  for (auto& r : c.rewrites) rewrites.push_back({{"pattern", r.pattern}, {"replacement", r.replacement}});
  json agents = {{"transport", c.transport},
                 {"mock_script", c.mock_script},
                 {"templates_dir", c.templates_dir},
                 {"max_inflight_llm_calls", c.max_inflight_llm_calls},
                 {"backoff_base", c.backoff_base},
                 {"solver", to_json(c.solver)},
                 {"translator", to_json(c.translator)},
                 {"prover", to_json(c.prover)}};
  if (!c.mock_inline.is_null()) agents["mock_inline"] = c.mock_inline;
  return {{"agents", agents},
          {"backend", to_json(c.backend)},
          {"pipeline",
           {{"prover_retries", c.prover_retries},
            {"trivial_budget", c.trivial_budget},
            {"intro_vars", to_string(c.intro_vars)},
            {"rewrites", rewrites}}},
          {"batch", {{"workers", c.batch_workers}}}};
}

ServiceFactory::ServiceFactory(PipelineConfig cfg, AgentClient::Sleeper sleeper)
    : cfg_(std::move(cfg)),
      sleeper_(std::move(sleeper)),
      templates_(cfg_.templates_dir.empty() ? TemplateSet::defaults() : TemplateSet::from_directory(cfg_.templates_dir)),
      limiter_(std::make_shared<CallLimiter>(cfg_.max_inflight_llm_calls)) {
  if (cfg_.transport == "mock") {
    if (!cfg_.mock_script.empty()) {
      try {
        mock_script_ = ordered_json::parse(read_file(cfg_.mock_script));
      } catch (const ordered_json::parse_error& e) {
        throw Error(ErrorCode::ConfigError, "mock script " + cfg_.mock_script + ": " + e.what());
      }
    } else if (!cfg_.mock_inline.is_null()) {
      mock_script_ = ordered_json::parse(cfg_.mock_inline.dump());
    } else {
      mock_script_ = ordered_json::object();
    }
    MockChatBackend probe(mock_script_);  // validate once, up front
  }
  try {
    backend_ = make_backend(cfg_.backend);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("stub script: ") + e.what());
  }
}

std::shared_ptr<Services> ServiceFactory::make() const {
  auto s = std::make_shared<Services>();
  std::shared_ptr<ChatBackend> transport;
  if (cfg_.transport == "mock")
    transport = std::make_shared<MockChatBackend>(mock_script_);
  else
    transport = std::make_shared<HttpChatBackend>();
  RetryPolicy policy;
  policy.backoff_base = cfg_.backoff_base;
  s->agents.solver = cfg_.solver;
  s->agents.translator = cfg_.translator;
  s->agents.prover = cfg_.prover;
  s->agents.templates = templates_;
  s->agents.client = std::make_shared<AgentClient>(transport, limiter_, policy, sleeper_);
  s->backend = backend_;
  s->backend_cfg = cfg_.backend;
  return s;
}

}  // namespace verify
