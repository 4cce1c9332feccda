#include "verify/agents.hpp"

#include "default_templates.hpp"
#include "verify/formal_code.hpp"

#include <httplib.h>

#include <cctype>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <regex>
#include <sstream>
#include <thread>

namespace verify {

std::string_view to_string(AgentRole r) {
  switch (r) {
    case AgentRole::Solver: return "Solver";
    case AgentRole::Translator: return "Translator";
    case AgentRole::Prover: return "Prover";
  }
  return "?";
}

AgentRole agent_role_from(std::string_view s) {
  std::string l = to_lower(s);
  if (l == "solver") return AgentRole::Solver;
  if (l == "translator") return AgentRole::Translator;
  if (l == "prover") return AgentRole::Prover;
  throw Error(ErrorCode::InvalidArgument, "unknown agent role: " + std::string(s));
}

AgentEndpoint endpoint_from_json(AgentRole role, const json& j) {
  AgentEndpoint e;
  e.role = role;
  // Translator defaults to greedy decoding; the others inherit the server's.
  if (role == AgentRole::Translator) e.sampling["temperature"] = 0.0;
  if (!j.is_object()) {
    if (j.is_null()) return e;
    throw Error(ErrorCode::ConfigError, "agent endpoint must be an object");
  }
  e.base_url = j.value("base_url", "");
  e.model_name = j.value("model_name", j.value("model", ""));
  e.max_retries = j.value("max_retries", e.max_retries);
  e.timeout = j.value("timeout", e.timeout);
  e.max_tokens = j.value("max_tokens", e.max_tokens);
  if (j.contains("sampling")) {
    for (auto& [k, v] : j["sampling"].items()) {
      if (!v.is_number()) throw Error(ErrorCode::ConfigError, "sampling." + k + " must be a number");
      e.sampling[k] = v.get<double>();
    }
  }
  if (e.max_retries < 0) throw Error(ErrorCode::ConfigError, "max_retries must be >= 0");
  if (!(e.timeout > 0)) throw Error(ErrorCode::ConfigError, "timeout must be > 0");
  return e;
}

json to_json(const AgentEndpoint& e) {
  json s = json::object();
  for (auto& [k, v] : e.sampling) s[k] = v;
  return {{"role", to_string(e.role)},   {"base_url", e.base_url}, {"model_name", e.model_name},
          {"max_retries", e.max_retries}, {"timeout", e.timeout},   {"sampling", s},
          {"max_tokens", e.max_tokens}};
}

json to_json(const AgentTranscript& t) {
  json j = {{"id", t.id},
            {"role", to_string(t.role)},
            {"prompt", t.prompt},
            {"prompt_sha256", sha256_hex(t.prompt)},
            {"response", t.response},
            {"attempt", t.attempt},
            {"latency", t.latency}};
  j["error"] = t.error ? json(to_string(*t.error)) : json(nullptr);
  return j;
}

static ErrorCode error_code_from(std::string_view s) {
  for (auto c : {ErrorCode::Timeout, ErrorCode::TransportError, ErrorCode::EmptyResponse, ErrorCode::NoCodeBlock,
                 ErrorCode::MissingTemplate})
    if (to_string(c) == s) return c;
  return ErrorCode::TransportError;
}

AgentTranscript transcript_from_json(const json& j) {
  AgentTranscript t;
  t.id = j.value("id", "");
  t.role = agent_role_from(j.at("role").get<std::string>());
  t.prompt = j.value("prompt", "");
  t.response = j.value("response", "");
  t.attempt = j.value("attempt", 0);
  t.latency = j.value("latency", 0.0);
  if (j.contains("error") && j["error"].is_string()) t.error = error_code_from(j["error"].get<std::string>());
  return t;
}

// --- templates ---------------------------------------------------------------

TemplateSet TemplateSet::defaults() {
  TemplateSet t;
  t.templates_ = detail::default_templates();
  return t;
}

TemplateSet TemplateSet::from_directory(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error(ErrorCode::ConfigError, "templates directory not found: " + dir);
  TemplateSet t = defaults();
  for (auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    t.templates_[entry.path().stem().string()] = read_file(entry.path().string());
  }
  return t;
}

const std::string* TemplateSet::find(const std::string& key) const {
  auto it = templates_.find(key);
  return it == templates_.end() ? nullptr : &it->second;
}

std::string template_key(AgentRole role, bool introduce_variables) {
  return to_lower(to_string(role)) + (introduce_variables ? "_vars_on" : "_vars_off");
}

static std::string format_statements(const std::vector<Statement>& stmts) {
  if (stmts.empty()) return "(none)";
  std::string out;
  for (size_t i = 0; i < stmts.size(); ++i) {
    if (i) out += '\n';
    out += "h" + std::to_string(i + 1) + ": " + stmts[i].text;
  }
  return out;
}

std::string render_prompt(const TemplateSet& templates, AgentRole role, const PromptPayload& payload,
                          const PromptOptions& opts) {
  std::string key = template_key(role, opts.introduce_variables);
  const std::string* body = templates.find(key);
  if (!body) throw Error(ErrorCode::MissingTemplate, "no template " + key);

  std::string out;
  out.reserve(body->size() + 256);
  size_t i = 0;
  while (i < body->size()) {
    size_t open = body->find("{{", i);
    if (open == std::string::npos) {
      out.append(*body, i);
      break;
    }
    size_t close = body->find("}}", open + 2);
    if (close == std::string::npos) {
      out.append(*body, i);
      break;
    }
    out.append(*body, i, open - i);
    std::string name = trim(std::string_view(*body).substr(open + 2, close - open - 2));
    auto it = payload.find(name);
    if (it != payload.end()) {
      out += it->second;
    } else if (name == "context") {
      out += format_statements(opts.extra_context);
    } else {
      throw Error(ErrorCode::InvalidArgument, "template " + key + " needs field '" + name + "'");
    }
    i = close + 2;
  }
  return out;
}

// --- HTTP transport ----------------------------------------------------------

json HttpChatBackend::request_body(const AgentEndpoint& endpoint, const std::string& prompt) {
  json body = {{"model", endpoint.model_name},
               {"messages", json::array({{{"role", "user"}, {"content", prompt}}})},
               {"max_tokens", endpoint.max_tokens}};
  body["temperature"] = 0.0;
  for (auto& [k, v] : endpoint.sampling) body[k] = v;
  return body;
}

std::string HttpChatBackend::response_content(const json& body) {
  try {
    const json& content = body.at("choices").at(0).at("message").at("content");
    return content.is_string() ? content.get<std::string>() : std::string();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("unexpected response shape: ") + e.what());
  }
}

std::string HttpChatBackend::complete(const AgentEndpoint& endpoint, const std::string& prompt) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint.base_url, m, url_re))
    throw Error(ErrorCode::TransportError, "bad base_url: " + endpoint.base_url);
  std::string prefix = m[2].matched ? m[2].str() : "";
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

  httplib::Client cli(m[1].str());
  auto secs = std::chrono::duration<double>(endpoint.timeout);
  auto us = std::chrono::duration_cast<std::chrono::microseconds>(secs);
  cli.set_connection_timeout(us);
  cli.set_read_timeout(us);
  cli.set_write_timeout(us);

  auto res = cli.Post(prefix + "/chat/completions", request_body(endpoint, prompt).dump(), "application/json");
  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout)
      throw Error(ErrorCode::Timeout, "chat request timed out: " + httplib::to_string(err));
    throw Error(ErrorCode::TransportError, "chat request failed: " + httplib::to_string(err));
  }
  if (res->status != 200)
    throw Error(ErrorCode::TransportError, "chat endpoint returned HTTP " + std::to_string(res->status));
  json body;
  try {
    body = json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::TransportError, std::string("response is not JSON: ") + e.what());
  }
  return response_content(body);
}

// --- mock transport ----------------------------------------------------------

static bool is_hex64(std::string_view s) {
  if (s.size() != 64) return false;
  for (char c : s)
    if (!std::isxdigit(static_cast<unsigned char>(c))) return false;
  return true;
}

MockChatBackend::MockChatBackend(ordered_json script) {
  if (script.is_object() && script.contains("responses")) script = script["responses"];
  if (!script.is_object()) throw Error(ErrorCode::ConfigError, "mock script must be a JSON object");
  for (auto& [key, value] : script.items()) {
    Entry e;
    std::string_view k = key;
    for (auto role : {AgentRole::Solver, AgentRole::Translator, AgentRole::Prover}) {
      std::string p = std::string(to_string(role)) + ":";
      if (k.substr(0, p.size()) == p) {
        e.role = role;
        k.remove_prefix(p.size());
        break;
      }
    }
    if (k == "*") {
      e.kind = Entry::Kind::Any;
    } else if (k.substr(0, 9) == "contains:") {
      e.kind = Entry::Kind::Contains;
      e.needle = std::string(k.substr(9));
    } else {
      if (k.substr(0, 7) == "sha256:") k.remove_prefix(7);
      if (!is_hex64(k)) throw Error(ErrorCode::ConfigError, "mock key is not a prompt hash: " + key);
      e.kind = Entry::Kind::Hash;
      e.needle = to_lower(k);
    }
    json responses = json::parse(value.dump());
    if (!responses.is_array()) responses = json::array({responses});
    if (responses.empty()) throw Error(ErrorCode::ConfigError, "mock key has no responses: " + key);
    for (auto& r : responses) e.responses.push_back(r);
    entries_.push_back(std::move(e));
  }
}

std::shared_ptr<MockChatBackend> MockChatBackend::from_file(const std::string& path) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(path));
  } catch (const ordered_json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, "mock script " + path + ": " + e.what());
  }
  return std::make_shared<MockChatBackend>(std::move(j));
}

size_t MockChatBackend::calls() const {
  std::lock_guard lk(mu_);
  return calls_;
}

std::string MockChatBackend::complete(const AgentEndpoint& endpoint, const std::string& prompt) {
  std::lock_guard lk(mu_);
  ++calls_;
  std::string hash = sha256_hex(prompt);
  auto role_ok = [&](const Entry& e) { return !e.role || *e.role == endpoint.role; };

  Entry* hit = nullptr;
  for (auto& e : entries_)
    if (!hit && e.kind == Entry::Kind::Hash && e.needle == hash && role_ok(e)) hit = &e;
  for (auto& e : entries_)
    if (!hit && e.kind == Entry::Kind::Contains && role_ok(e) && prompt.find(e.needle) != std::string::npos)
      hit = &e;
  for (auto& e : entries_)
    if (!hit && e.kind == Entry::Kind::Any && e.role && *e.role == endpoint.role) hit = &e;
  for (auto& e : entries_)
    if (!hit && e.kind == Entry::Kind::Any && !e.role) hit = &e;
  if (!hit)
    throw Error(ErrorCode::TransportError,
                "no scripted response for " + std::string(to_string(endpoint.role)) + " prompt " + hash);

  const json& r = hit->responses[std::min(hit->cursor, hit->responses.size() - 1)];
  ++hit->cursor;
  if (r.is_string()) return r.get<std::string>();
  if (r.is_object() && r.contains("error")) {
    std::string kind = r["error"].get<std::string>();
    if (kind == "timeout") throw Error(ErrorCode::Timeout, "scripted timeout");
    if (kind == "empty") return "";
    throw Error(ErrorCode::TransportError, "scripted transport error");
  }
  if (r.is_object() && r.contains("text")) return r["text"].get<std::string>();
  throw Error(ErrorCode::ConfigError, "bad scripted response: " + r.dump());
}

// --- client ------------------------------------------------------------------

double backoff_delay(int retry, const RetryPolicy& policy, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(1.0 - policy.jitter, 1.0 + policy.jitter);
  return policy.backoff_base * std::pow(policy.backoff_factor, retry - 1) * jitter(rng);
}

void CallLimiter::acquire() {
  std::unique_lock lk(mu_);
  cv_.wait(lk, [&] { return slots_ > 0; });
  --slots_;
}

void CallLimiter::release() {
  {
    std::lock_guard lk(mu_);
    ++slots_;
  }
  cv_.notify_one();
}

AgentClient::AgentClient(std::shared_ptr<ChatBackend> backend, std::shared_ptr<CallLimiter> limiter,
                         RetryPolicy policy, Sleeper sleeper, uint64_t seed)
    : backend_(std::move(backend)),
      limiter_(limiter ? std::move(limiter) : std::make_shared<CallLimiter>(4)),
      policy_(policy),
      sleeper_(std::move(sleeper)),
      rng_(seed) {
  if (!sleeper_)
    sleeper_ = [](double s) {
      if (s > 0) std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };
}

AgentTranscript AgentClient::call(const AgentEndpoint& endpoint, const std::string& prompt) {
  AgentTranscript t;
  t.role = endpoint.role;
  t.prompt = prompt;
  const int max_attempts = endpoint.max_retries + 1;
  for (int attempt = 1;; ++attempt) {
    t.attempt = attempt;
    t.error.reset();
    t.response.clear();
    limiter_->acquire();
    auto t0 = std::chrono::steady_clock::now();
    try {
      t.response = backend_->complete(endpoint, prompt);
      if (trim(t.response).empty()) t.error = ErrorCode::EmptyResponse;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::ConfigError) {
        limiter_->release();
        throw;
      }
      t.error = e.code() == ErrorCode::Timeout ? ErrorCode::Timeout : ErrorCode::TransportError;
    }
    t.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    limiter_->release();

    if (!t.error) return t;
    if (attempt >= max_attempts)
      throw AgentError(*t.error,
                       std::string(to_string(endpoint.role)) + " call failed after " + std::to_string(attempt) +
                           " attempt(s): " + std::string(to_string(*t.error)),
                       t);
    double delay;
    {
      std::lock_guard lk(mu_);
      delay = backoff_delay(attempt, policy_, rng_);
    }
    sleeper_(delay);
  }
}

// --- extraction --------------------------------------------------------------

static std::string strip_think(std::string_view s) {
  std::string out;
  size_t i = 0;
  while (i < s.size()) {
    size_t open = s.find("<think>", i);
    if (open == std::string_view::npos) {
      out.append(s.substr(i));
      break;
    }
    out.append(s.substr(i, open - i));
    size_t close = s.find("</think>", open);
    if (close == std::string_view::npos) break;
    i = close + 8;
  }
  return out;
}

std::optional<std::string> extract_code_block(std::string_view response) {
  std::string text = strip_think(response);
  size_t fence = text.find("```");
  if (fence != std::string::npos) {
    size_t body = text.find('\n', fence);
    if (body == std::string::npos) return std::nullopt;
    ++body;
    size_t end = text.find("```", body);
    std::string code = text.substr(body, end == std::string::npos ? std::string::npos : end - body);
    code = trim(code);
    if (code.empty()) return std::nullopt;
    return code + "\n";
  }
  std::string code = trim(text);
  if (code.empty()) return std::nullopt;
  static const std::regex code_start(
      R"(^(theorem|lemma|example|def|import|open|by|namespace|section|variable|set_option|noncomputable)\b)");
  if (std::regex_search(code, code_start)) return code + "\n";
  return std::nullopt;
}

// --- role wrappers -----------------------------------------------------------

const AgentEndpoint& Agents::endpoint(AgentRole role) const {
  switch (role) {
    case AgentRole::Solver: return solver;
    case AgentRole::Translator: return translator;
    case AgentRole::Prover: return prover;
  }
  return solver;
}

std::string format_variables(const std::vector<VariableDecl>& vars) {
  if (vars.empty()) return "(none)";
  std::string out;
  for (size_t i = 0; i < vars.size(); ++i) {
    if (i) out += '\n';
    out += vars[i].name + " : " + std::string(to_string(vars[i].vartype)) + " (" +
           to_lower(to_string(vars[i].origin)) + ")";
  }
  return out;
}

static AgentTranscript call_role(const Agents& agents, AgentRole role, const std::string& prompt) {
  if (!agents.client) throw Error(ErrorCode::ConfigError, "agents have no client");
  return agents.client->call(agents.endpoint(role), prompt);
}

AgentTranscript solve(const Agents& agents, const ProblemStatement& prob, const PromptOptions& opts) {
  std::string prompt = render_prompt(agents.templates, AgentRole::Solver, {{"problem", prob.text}}, opts);
  return call_role(agents, AgentRole::Solver, prompt);
}

AgentOutput formalize(const Agents& agents, const Statement& stmt, const std::vector<Statement>& hypotheses,
                      const std::vector<VariableDecl>& vars, const PromptOptions& opts) {
  PromptPayload payload = {{"statement", stmt.text}, {"hypotheses", format_statements(hypotheses)}};
  if (opts.introduce_variables) payload["variables"] = format_variables(vars);
  std::string prompt = render_prompt(agents.templates, AgentRole::Translator, payload, opts);
  AgentOutput out;
  out.transcript = call_role(agents, AgentRole::Translator, prompt);
  out.code = extract_code_block(out.transcript.response);
  return out;
}

AgentOutput prove(const Agents& agents, const std::string& goal_code, const std::vector<ContextItem>& context,
                  const std::vector<VariableDecl>& vars, const PromptOptions& opts) {
  std::string ctx;
  for (auto& c : context) {
    if (!ctx.empty()) ctx += "\n\n";
    ctx += c.code;
    while (!ctx.empty() && ctx.back() == '\n') ctx.pop_back();
  }
  if (ctx.empty()) ctx = "(none)";
  std::string stmt = trim(goal_code);
  PromptPayload payload = {{"formal_statement", stmt}, {"context", ctx}};
  if (opts.introduce_variables) payload["variables"] = format_variables(vars);
  std::string prompt = render_prompt(agents.templates, AgentRole::Prover, payload, opts);
  AgentOutput out;
  out.transcript = call_role(agents, AgentRole::Prover, prompt);
  out.code = extract_code_block(out.transcript.response);
  return out;
}

}  // namespace verify
