#pragma once

// Labeled datasets, batch runs, confusion-matrix metrics, the answer-only
// baseline and A/B comparison of two runs over the same problems.

#include "verify/config.hpp"
#include "verify/pipeline.hpp"
#include "verify/solution.hpp"

#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace verify {

struct DatasetRecord {
  ProblemStatement problem;
  bool label = false;  // a correct, well-explained solution should verify
};

// JSON lines: {id, text, answer?, label, trusted_goal?}. Blank lines are
// skipped. Throws Error(MalformedRecord) naming the line, Error(DuplicateId).
std::vector<DatasetRecord> parse_dataset(std::string_view text);
std::vector<DatasetRecord> load_dataset(const std::string& path);
json to_json(const DatasetRecord& r);

struct ProblemRuns {
  std::string id;
  std::optional<bool> label;
  std::vector<VerdictKind> verdicts;  // one per run
};

using BatchResult = std::vector<ProblemRuns>;

json to_json(const BatchResult& b);
BatchResult batch_result_from_json(const json& j);

using Progress = std::function<void(size_t done, size_t total)>;

// Runs every record n_runs times on `workers` threads. Order of the result
// follows the dataset regardless of completion order.
BatchResult run_batch(const std::vector<DatasetRecord>& records, const ServiceFactory& factory, int n_runs,
                      int workers, Progress progress = {});

// Solve, formalize the whole problem, one proof attempt; no lemma structure.
VerdictKind run_answer_baseline(const DatasetRecord& record, const Services& services, const PipelineConfig& cfg);
BatchResult run_answer_baseline(const std::vector<DatasetRecord>& records, const ServiceFactory& factory, int n_runs,
                                int workers, Progress progress = {});

bool is_positive(VerdictKind k, bool include_trivial);

struct RunMetrics {
  long tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy = 0.0;
  std::optional<double> precision;  // absent when tp + fp = 0
  std::optional<double> recall;     // absent when tp + fn = 0
  // Sample standard deviation of the per-run metric; absent below two runs.
  std::optional<double> accuracy_sd, precision_sd, recall_sd;
  int n_runs = 0;
  size_t n_problems = 0;
};

json to_json(const RunMetrics& m);

// predictions[r][i]: run r's positive/negative call on problem i.
RunMetrics compute_metrics(const std::vector<std::vector<bool>>& predictions, const std::vector<bool>& labels);
// Problems without a label are skipped; throws Error(EmptyInput) when none
// remain.
RunMetrics compute_metrics(const BatchResult& runs, bool include_trivial = false);

struct ABEntry {
  std::string id;
  std::vector<VerdictKind> a, b;
  bool a_verified = false, b_verified = false;
};

struct ABComparison {
  std::vector<ABEntry> entries;
  long both = 0, a_only = 0, b_only = 0, neither = 0;
  std::vector<std::string> regressions;   // verified in A, not in B
  std::vector<std::string> improvements;  // verified in B, not in A
  std::optional<RunMetrics> metrics_a, metrics_b;
};

json to_json(const ABComparison& c);

// A problem counts as verified when a strict majority of its runs are
// positive. Throws Error(IdSetMismatch) unless both cover the same ids.
ABComparison ab_compare(const BatchResult& a, const BatchResult& b, bool include_trivial = false);

}  // namespace verify
