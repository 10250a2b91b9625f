#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "cssl/learner.hpp"
#include "cssl/protocol.hpp"
#include "cssl/types.hpp"

namespace cssl {

// True targets keyed by (sequence_id, t). Built from the sealed side of a
// FoldSplit; the only code that reads hidden labels.
struct TruthChannel {
  std::unordered_map<std::string, std::unordered_map<int, double>> values;

  std::optional<double> lookup(const std::string& sequence_id, int t) const;
};

TruthChannel truth_from_split(const FoldSplit& split);
void append_truth(TruthChannel& truth, const FoldSplit& split);

// Evaluation-side export of the hidden V/T targets (columns t,fold,y).
void save_truth_csv(const FoldSplit& split, const std::string& path);
TruthChannel load_truth_csv(const std::string& path, const std::string& sequence_id);

enum class LossKind { zero_one, absolute };

// Eq.-style contemporary evaluation: each row is scored against the target
// of its own timestep. Returns the mean loss; with zero_one this is exactly
// 1 - accuracy. Rows missing from the truth channel raise
// std::invalid_argument.
double contemporary_loss(const PredictionLog& log, const TruthChannel& truth,
                         LossKind kind);
double contemporary_loss_sum(const PredictionLog& log, const TruthChannel& truth,
                             LossKind kind);

double accuracy(const PredictionLog& log, const TruthChannel& truth);

// rows = true class, columns = predicted class.
struct ConfusionCounts {
  Eigen::MatrixXi counts;

  int classes() const { return static_cast<int>(counts.rows()); }
  long total() const { return counts.cast<long>().sum(); }
};

ConfusionCounts confusion_from_log(const PredictionLog& log, const TruthChannel& truth,
                                   int C, std::optional<FoldTag> fold = std::nullopt);

struct ClassMetrics {
  Vector precision;         // per class, zero-denominator convention: 0
  Vector recall;
  Vector f1;
  Eigen::VectorXi support;  // W_i: samples whose true class is i
};

ClassMetrics prf_per_class(const ConfusionCounts& counts);

enum class Metric { precision, recall, f1 };
enum class AverageMode { macro, weighted };
enum class ClassFilter { all, present_only };  // present = support > 0

double aggregate(const ClassMetrics& cm, Metric metric, AverageMode mode,
                 ClassFilter filter = ClassFilter::all);

double mae(std::span<const double> predicted, std::span<const double> truth);

// Scores of one fold of one run.
struct FoldScores {
  FoldTag fold = FoldTag::V;
  int n = 0;
  double contemporary_loss = 0.0;      // mean 0/1 (classification) or absolute
  double contemporary_loss_sum = 0.0;  // raw sum before the 1/T normalizer
  // classification
  std::optional<double> accuracy;
  std::optional<double> precision_macro, precision_weighted;
  std::optional<double> recall_macro, recall_weighted;
  std::optional<double> f1_macro, f1_weighted;
  std::optional<ConfusionCounts> confusion;
  // regression
  std::optional<double> mae;
};

// Per-(sequence, mode) report: V and T fold breakdowns.
struct Report {
  std::string sequence_id;
  std::string mode;
  std::vector<FoldScores> folds;

  const FoldScores* fold(FoldTag tag) const;
};

Report score_log(const PredictionLog& log, const TruthChannel& truth, TaskKind kind,
                 int C, const std::string& sequence_id, const std::string& mode);

// Session-wise metric (accuracy or MAE) over the log's continual rows,
// ordered by session index.
struct TracePoint {
  int session = 0;
  int n = 0;
  double value = 0.0;
};
std::vector<TracePoint> session_trace(const PredictionLog& log,
                                      const TruthChannel& truth, TaskKind kind);

struct DeltaReport {
  std::string metric;
  FoldTag fold = FoldTag::T;
  double updated = 0.0;
  double baseline = 0.0;
  double delta = 0.0;  // updated - baseline
};

enum class ReportMetric { accuracy, f1_macro, f1_weighted, mae };
std::string to_string(ReportMetric metric);

// Signed difference on the same fold; fold mismatch raises.
DeltaReport incremental_delta(const FoldScores& updated, const FoldScores& baseline,
                              ReportMetric metric);

// Instance-level forgetting check: a past example is violated when the new
// state's loss on it exceeds the previous state's.
struct ForgettingReport {
  std::vector<bool> violated;
  double violation_rate = 0.0;
};

ForgettingReport forgetting_diagnostic(const LearnerState& current,
                                       const LearnerState& previous,
                                       std::span<const Example> past);

// Battery-level aggregate: confusion counts pooled across sequences before
// metrics are recomputed (micro), plus the plain mean of per-sequence
// metrics (macro over sequences). Both reported.
struct BatteryReport {
  std::string mode;
  std::vector<FoldScores> pooled;
  std::vector<FoldScores> mean_over_sequences;
  int sequences = 0;
};

BatteryReport battery_report(std::span<const Report> reports);

}  // namespace cssl
