// verify: command-line front end (run, batch, ab, serve, parse).

#include "verify/bench.hpp"
#include "verify/server.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace verify;

namespace {

PipelineConfig resolve_config(const std::string& path) {
  if (!path.empty()) return load_config(path);
  if (const char* env = std::getenv("VERIFY_CONFIG"); env && *env) return load_config(env);
  return PipelineConfig{};
}

ProblemStatement load_problem(const std::string& path) {
  std::string text = read_file(path);
  try {
    return problem_from_json(json::parse(text));
  } catch (const json::parse_error&) {
    // Plain text: the file is the problem statement.
    ProblemStatement p;
    p.id = fs::path(path).stem().string();
    p.text = trim(text);
    return p;
  }
}

void write_out(const std::string& path, const std::string& content) {
  if (path.empty() || path == "-") std::cout << content << "\n";
  else write_file(path, content + "\n");
}

// Terminal adjudication for `run --mode interactive`.
Decision ask(const DecisionContext& c) {
  std::cerr << "\n--- decision needed: " << to_string(c.kind) << " at " << to_string(c.phase) << " [" << c.target
            << "]\nStatement: " << c.statement << "\nFormal code:\n" << c.code << "\n";
  for (auto& d : c.diagnostics) std::cerr << "  " << d.line << ":" << d.column << " " << d.message << "\n";
  const auto& legal = legal_decisions(c.kind);
  for (;;) {
    for (size_t i = 0; i < legal.size(); ++i) std::cerr << "  [" << i + 1 << "] " << to_string(legal[i]) << "\n";
    std::cerr << "choice> " << std::flush;
    std::string line;
    if (!std::getline(std::cin, line)) return {DecisionKind::StopNegative, ""};
    size_t n = 0;
    try {
      n = std::stoul(line);
    } catch (...) {
    }
    if (n < 1 || n > legal.size()) continue;
    Decision d{legal[n - 1], ""};
    if (d.kind == DecisionKind::ProvideTranslation || d.kind == DecisionKind::ProvideFormalization) {
      std::cerr << "Enter the formal statement; finish with a line containing only '.'\n";
      while (std::getline(std::cin, line) && line != ".") d.code += line + "\n";
    }
    return d;
  }
}

int cmd_run(const std::string& problem_path, const std::string& mode_s, const std::string& intro,
            const std::string& config_path, const std::string& report_out, const std::string& rendered_out) {
  PipelineConfig cfg = resolve_config(config_path);
  if (!intro.empty()) cfg.intro_vars = intro_vars_from(intro);
  ProblemStatement prob = load_problem(problem_path);
  ServiceFactory factory(cfg);

  SessionSpec spec;
  spec.id = "run-" + prob.id;
  spec.problem = prob;
  spec.mode = mode_from(mode_s);
  spec.config = cfg;
  Session s(spec, factory.make());
  for (;;) {
    s.run_until_blocked();
    if (s.finished()) break;
    for (;;) {
      try {
        s.apply_decision(ask(*s.state().awaiting));
        break;
      } catch (const Error& e) {
        std::cerr << e.what() << "\n";
      }
    }
  }
  json report = build_report(s.spec(), s.state(), s.events());
  if (!report_out.empty()) write_file(report_out, canonical_dump(report) + "\n");
  std::string rendered = render_report(report);
  if (!rendered_out.empty()) write_file(rendered_out, rendered);
  std::cout << rendered;
  return s.state().verdict->positive() ? 0 : 2;
}

int cmd_batch(const std::string& dataset, int runs, const std::string& out, const std::string& config_path,
              bool baseline, bool include_trivial, int workers) {
  PipelineConfig cfg = resolve_config(config_path);
  if (workers > 0) cfg.batch_workers = workers;
  auto records = load_dataset(dataset);
  ServiceFactory factory(cfg);
  auto progress = [](size_t done, size_t total) {
    std::cerr << "\r" << done << "/" << total << std::flush;
    if (done == total) std::cerr << "\n";
  };
  BatchResult r = baseline ? run_answer_baseline(records, factory, runs, cfg.batch_workers, progress)
                           : run_batch(records, factory, runs, cfg.batch_workers, progress);
  json j = {{"pipeline", baseline ? "answer_baseline" : "structured"},
            {"include_trivial", include_trivial},
            {"metrics", to_json(compute_metrics(r, include_trivial))},
            {"runs", to_json(r)}};
  write_out(out, canonical_dump(j));
  return 0;
}

int cmd_ab(const std::string& a, const std::string& b, const std::string& out, bool include_trivial) {
  auto ra = batch_result_from_json(json::parse(read_file(a)));
  auto rb = batch_result_from_json(json::parse(read_file(b)));
  write_out(out, canonical_dump(to_json(ab_compare(ra, rb, include_trivial))));
  return 0;
}

ApiServer* g_server = nullptr;

int cmd_serve(const ServerOptions& opts, const std::string& data_dir, const std::string& config_path, int workers) {
  PipelineConfig cfg = resolve_config(config_path);
  SessionManager::Options mo;
  mo.workers = workers;
  SessionManager mgr(data_dir, cfg, mo);
  size_t n = mgr.recover();
  ApiServer server(mgr, opts);
  int port = server.bind();
  // The port line is machine-read by tests and scripts.
  std::cout << "listening on " << opts.bind << ":" << port << " (" << n << " sessions restored)" << std::endl;
  if (opts.bind != "127.0.0.1" && opts.bind != "localhost")
    std::cerr << "WARNING: no authentication; anyone who can reach " << opts.bind << " can drive sessions\n";
  g_server = &server;
  std::signal(SIGINT, [](int) { if (g_server) g_server->stop(); });
  std::signal(SIGTERM, [](int) { if (g_server) g_server->stop(); });
  server.serve();
  g_server = nullptr;
  return 0;
}

int cmd_parse(const std::string& path, const std::string& problem_path, bool intro) {
  StructuredSolution s = normalize(parse_structured_solution(read_file(path)));
  if (!problem_path.empty()) s = classify_premises(s, load_problem(problem_path));
  json j = {{"solution", to_json(s)}, {"violations", json::array()}};
  for (auto& v : validate_structure(s, intro)) j["violations"].push_back(to_json(v));
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured-solution verification pipeline"};
  app.require_subcommand(1);

  std::string problem, mode = "auto", intro, config, report_out, rendered_out;
  auto* run = app.add_subcommand("run", "Verify one problem's solution");
  run->add_option("--problem", problem, "Problem file (JSON or plain text)")->required()->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "auto | interactive")->check(CLI::IsMember({"auto", "interactive"}));
  run->add_option("--intro-vars", intro, "on | off | both")->check(CLI::IsMember({"on", "off", "both"}));
  run->add_option("--config", config, "Config file (default: $VERIFY_CONFIG)");
  run->add_option("--report-out", report_out, "Write the JSON report here");
  run->add_option("--rendered-out", rendered_out, "Write the text report here");

  std::string dataset, out;
  int runs = 1, workers = 0;
  bool baseline = false, include_trivial = false;
  auto* batch = app.add_subcommand("batch", "Run a labeled dataset and compute metrics");
  batch->add_option("--dataset", dataset, "JSON-lines dataset")->required()->check(CLI::ExistingFile);
  batch->add_option("--runs", runs, "Runs per problem")->check(CLI::PositiveNumber);
  batch->add_option("--out", out, "Output file (default stdout)");
  batch->add_option("--config", config, "Config file (default: $VERIFY_CONFIG)");
  batch->add_option("--workers", workers, "Worker threads (default from config)");
  batch->add_flag("--baseline", baseline, "Answer-only baseline instead of the structured pipeline");
  batch->add_flag("--include-trivial", include_trivial, "Count VerifiedTrivial as positive");

  std::string run_a, run_b;
  auto* ab = app.add_subcommand("ab", "Compare two batch outputs");
  ab->add_option("--run-a", run_a)->required()->check(CLI::ExistingFile);
  ab->add_option("--run-b", run_b)->required()->check(CLI::ExistingFile);
  ab->add_option("--out", out, "Output file (default stdout)");
  ab->add_flag("--include-trivial", include_trivial, "Count VerifiedTrivial as positive");

  ServerOptions sopts;
  std::string data_dir = "verify-data";
  int session_workers = 2;
  auto* serve = app.add_subcommand("serve", "HTTP API server");
  serve->add_option("--port", sopts.port, "Port (0 picks a free one)");
  serve->add_option("--bind", sopts.bind, "Bind address (no authentication; keep it local)");
  serve->add_option("--data-dir", data_dir, "Persistence directory");
  serve->add_option("--config", config, "Config file (default: $VERIFY_CONFIG)");
  serve->add_option("--workers", session_workers, "Session worker threads")->check(CLI::PositiveNumber);
  serve->add_option("--ui-dir", sopts.ui_dir, "Static UI bundle served under /ui");

  std::string solution;
  auto* parse = app.add_subcommand("parse", "Parse and normalize a structured solution");
  parse->add_option("--solution", solution)->required()->check(CLI::ExistingFile);
  parse->add_option("--problem", problem, "Problem file for premise classification");
  parse->add_flag("--intro-vars", include_trivial, "Validate as an introduce-variables solution");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(problem, mode, intro, config, report_out, rendered_out);
    if (*batch) return cmd_batch(dataset, runs, out, config, baseline, include_trivial, workers);
    if (*ab) return cmd_ab(run_a, run_b, out, include_trivial);
    if (*serve) return cmd_serve(sopts, data_dir, config, session_workers);
    if (*parse) return cmd_parse(solution, problem, include_trivial);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
