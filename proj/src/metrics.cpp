#include "cssl/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>

#include "cssl/sequence_io.hpp"

namespace cssl {

std::optional<double> TruthChannel::lookup(const std::string& sequence_id, int t) const {
  const auto seq_it = values.find(sequence_id);
  if (seq_it == values.end()) return std::nullopt;
  const auto t_it = seq_it->second.find(t);
  if (t_it == seq_it->second.end()) return std::nullopt;
  return t_it->second;
}

void append_truth(TruthChannel& truth, const FoldSplit& split) {
  auto& per_seq = truth.values[split.sequence_id];
  for (const Example& ex : split.S)
    if (ex.y) per_seq[ex.t] = *ex.y;
  for (std::size_t i = 0; i < split.V.size(); ++i)
    if (split.sealed.v[i]) per_seq[split.V[i].t] = *split.sealed.v[i];
  for (std::size_t i = 0; i < split.T.size(); ++i)
    if (split.sealed.t[i]) per_seq[split.T[i].t] = *split.sealed.t[i];
}

TruthChannel truth_from_split(const FoldSplit& split) {
  TruthChannel truth;
  append_truth(truth, split);
  return truth;
}

void save_truth_csv(const FoldSplit& split, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write truth file: " + path);
  out << "t,fold,y\n";
  for (std::size_t i = 0; i < split.V.size(); ++i)
    if (split.sealed.v[i])
      out << split.V[i].t << ",V," << format_double(*split.sealed.v[i]) << "\n";
  for (std::size_t i = 0; i < split.T.size(); ++i)
    if (split.sealed.t[i])
      out << split.T[i].t << ",T," << format_double(*split.sealed.t[i]) << "\n";
  if (!out) throw std::runtime_error("failed writing truth file: " + path);
}

TruthChannel load_truth_csv(const std::string& path, const std::string& sequence_id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open truth file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty truth file: " + path);
  TruthChannel truth;
  auto& per_seq = truth.values[sequence_id];
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::size_t first = line.find(',');
    const std::size_t second = line.find(',', first + 1);
    if (first == std::string::npos || second == std::string::npos)
      throw std::runtime_error("truth file row " + std::to_string(row_no) +
                               ": expected 3 columns");
    per_seq[std::stoi(line.substr(0, first))] = std::stod(line.substr(second + 1));
  }
  return truth;
}

namespace {

double require_truth(const TruthChannel& truth, const PredictionRow& row) {
  const std::optional<double> y = truth.lookup(row.sequence_id, row.t);
  if (!y)
    throw std::invalid_argument("prediction log misaligned with truth: no target for " +
                                row.sequence_id + " t=" + std::to_string(row.t));
  return *y;
}

long correct_count(const PredictionLog& log, const TruthChannel& truth) {
  long correct = 0;
  for (const PredictionRow& row : log.rows)
    if (row.prediction == require_truth(truth, row)) ++correct;
  return correct;
}

}  // namespace

double accuracy(const PredictionLog& log, const TruthChannel& truth) {
  if (log.rows.empty())
    throw std::invalid_argument("accuracy of an empty prediction log is undefined");
  return static_cast<double>(correct_count(log, truth)) /
         static_cast<double>(log.rows.size());
}

double contemporary_loss(const PredictionLog& log, const TruthChannel& truth,
                         LossKind kind) {
  if (log.rows.empty())
    throw std::invalid_argument("contemporary loss of an empty prediction log");
  if (kind == LossKind::zero_one) return 1.0 - accuracy(log, truth);
  double sum = 0.0;
  for (const PredictionRow& row : log.rows)
    sum += std::abs(row.prediction - require_truth(truth, row));
  return sum / static_cast<double>(log.rows.size());
}

double contemporary_loss_sum(const PredictionLog& log, const TruthChannel& truth,
                             LossKind kind) {
  if (kind == LossKind::zero_one)
    return static_cast<double>(static_cast<long>(log.rows.size()) -
                               correct_count(log, truth));
  double sum = 0.0;
  for (const PredictionRow& row : log.rows)
    sum += std::abs(row.prediction - require_truth(truth, row));
  return sum;
}

ConfusionCounts confusion_from_log(const PredictionLog& log, const TruthChannel& truth,
                                   int C, std::optional<FoldTag> fold) {
  if (C < 2) throw std::invalid_argument("confusion matrix needs C >= 2");
  ConfusionCounts cm;
  cm.counts = Eigen::MatrixXi::Zero(C, C);
  for (const PredictionRow& row : log.rows) {
    if (fold && row.fold != *fold) continue;
    const double y = require_truth(truth, row);
    const int truth_class = static_cast<int>(y);
    const int pred_class = static_cast<int>(row.prediction);
    if (static_cast<double>(truth_class) != y || truth_class < 0 || truth_class >= C)
      throw std::invalid_argument("true label outside [0, C)");
    if (static_cast<double>(pred_class) != row.prediction || pred_class < 0 ||
        pred_class >= C)
      throw std::invalid_argument("predicted label outside [0, C)");
    cm.counts(truth_class, pred_class) += 1;
  }
  return cm;
}

ClassMetrics prf_per_class(const ConfusionCounts& counts) {
  const int C = counts.classes();
  if (counts.counts.cols() != C) throw std::invalid_argument("confusion matrix not square");
  if (counts.counts.minCoeff() < 0)
    throw std::invalid_argument("confusion counts must be nonnegative");

  ClassMetrics cm;
  cm.precision = Vector::Zero(C);
  cm.recall = Vector::Zero(C);
  cm.f1 = Vector::Zero(C);
  cm.support = Eigen::VectorXi(C);
  for (int i = 0; i < C; ++i) {
    const double tp = counts.counts(i, i);
    const double predicted = counts.counts.col(i).sum();
    const double actual = counts.counts.row(i).sum();
    cm.support[i] = static_cast<int>(actual);
    cm.precision[i] = predicted > 0 ? tp / predicted : 0.0;
    cm.recall[i] = actual > 0 ? tp / actual : 0.0;
    const double pr = cm.precision[i] + cm.recall[i];
    cm.f1[i] = pr > 0 ? 2.0 * cm.precision[i] * cm.recall[i] / pr : 0.0;
  }
  return cm;
}

double aggregate(const ClassMetrics& cm, Metric metric, AverageMode mode,
                 ClassFilter filter) {
  const Vector& values = metric == Metric::precision ? cm.precision
                         : metric == Metric::recall  ? cm.recall
                                                     : cm.f1;
  double value_sum = 0.0, weighted_sum = 0.0;
  long weight_sum = 0;
  int included = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (filter == ClassFilter::present_only && cm.support[i] == 0) continue;
    ++included;
    value_sum += values[i];
    weighted_sum += static_cast<double>(cm.support[i]) * values[i];
    weight_sum += cm.support[i];
  }
  if (included == 0)
    throw std::invalid_argument("aggregate over an empty class set");
  if (mode == AverageMode::macro) return value_sum / included;
  if (weight_sum == 0)
    throw std::invalid_argument("weighted aggregate with zero total support");
  return weighted_sum / static_cast<double>(weight_sum);
}

double mae(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("mae: length mismatch");
  if (predicted.empty()) throw std::invalid_argument("mae of empty vectors");
  double sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    sum += std::abs(predicted[i] - truth[i]);
  return sum / static_cast<double>(predicted.size());
}

const FoldScores* Report::fold(FoldTag tag) const {
  for (const FoldScores& f : folds)
    if (f.fold == tag) return &f;
  return nullptr;
}

Report score_log(const PredictionLog& log, const TruthChannel& truth, TaskKind kind,
                 int C, const std::string& sequence_id, const std::string& mode) {
  Report report;
  report.sequence_id = sequence_id;
  report.mode = mode;

  for (FoldTag tag : {FoldTag::V, FoldTag::T}) {
    PredictionLog fold_log;
    for (const PredictionRow& row : log.rows)
      if (row.fold == tag) fold_log.rows.push_back(row);
    if (fold_log.rows.empty()) continue;

    FoldScores scores;
    scores.fold = tag;
    scores.n = static_cast<int>(fold_log.rows.size());
    if (kind == TaskKind::classification) {
      scores.accuracy = accuracy(fold_log, truth);
      scores.contemporary_loss = 1.0 - *scores.accuracy;
      scores.contemporary_loss_sum =
          contemporary_loss_sum(fold_log, truth, LossKind::zero_one);
      scores.confusion = confusion_from_log(fold_log, truth, C);
      const ClassMetrics cm = prf_per_class(*scores.confusion);
      scores.precision_macro = aggregate(cm, Metric::precision, AverageMode::macro);
      scores.precision_weighted = aggregate(cm, Metric::precision, AverageMode::weighted);
      scores.recall_macro = aggregate(cm, Metric::recall, AverageMode::macro);
      scores.recall_weighted = aggregate(cm, Metric::recall, AverageMode::weighted);
      scores.f1_macro = aggregate(cm, Metric::f1, AverageMode::macro);
      scores.f1_weighted = aggregate(cm, Metric::f1, AverageMode::weighted);
    } else {
      scores.contemporary_loss = contemporary_loss(fold_log, truth, LossKind::absolute);
      scores.contemporary_loss_sum =
          contemporary_loss_sum(fold_log, truth, LossKind::absolute);
      scores.mae = scores.contemporary_loss;
    }
    report.folds.push_back(std::move(scores));
  }
  return report;
}

std::vector<TracePoint> session_trace(const PredictionLog& log,
                                      const TruthChannel& truth, TaskKind kind) {
  std::map<int, std::pair<long, double>> groups;  // session -> (n, correct or abs sum)
  for (const PredictionRow& row : log.rows) {
    const double y = require_truth(truth, row);
    auto& [n, stat] = groups[row.session];
    ++n;
    if (kind == TaskKind::classification)
      stat += row.prediction == y ? 1.0 : 0.0;
    else
      stat += std::abs(row.prediction - y);
  }
  std::vector<TracePoint> trace;
  trace.reserve(groups.size());
  for (const auto& [session, entry] : groups) {
    TracePoint point;
    point.session = session;
    point.n = static_cast<int>(entry.first);
    point.value = entry.second / static_cast<double>(entry.first);
    trace.push_back(point);
  }
  return trace;
}

std::string to_string(ReportMetric metric) {
  switch (metric) {
    case ReportMetric::accuracy: return "accuracy";
    case ReportMetric::f1_macro: return "f1_C";
    case ReportMetric::f1_weighted: return "f1_W";
    case ReportMetric::mae: return "mae";
  }
  return "accuracy";
}

namespace {

double metric_value(const FoldScores& scores, ReportMetric metric) {
  std::optional<double> value;
  switch (metric) {
    case ReportMetric::accuracy: value = scores.accuracy; break;
    case ReportMetric::f1_macro: value = scores.f1_macro; break;
    case ReportMetric::f1_weighted: value = scores.f1_weighted; break;
    case ReportMetric::mae: value = scores.mae; break;
  }
  if (!value)
    throw std::invalid_argument("metric " + to_string(metric) +
                                " not present in fold scores");
  return *value;
}

}  // namespace

DeltaReport incremental_delta(const FoldScores& updated, const FoldScores& baseline,
                              ReportMetric metric) {
  if (updated.fold != baseline.fold)
    throw std::invalid_argument("incremental delta requires reports on the same fold");
  DeltaReport delta;
  delta.metric = to_string(metric);
  delta.fold = updated.fold;
  delta.updated = metric_value(updated, metric);
  delta.baseline = metric_value(baseline, metric);
  delta.delta = delta.updated - delta.baseline;
  return delta;
}

ForgettingReport forgetting_diagnostic(const LearnerState& current,
                                       const LearnerState& previous,
                                       std::span<const Example> past) {
  if (current.kind != previous.kind || current.d != previous.d ||
      current.C != previous.C)
    throw std::invalid_argument("forgetting diagnostic: state shapes differ");

  ForgettingReport report;
  report.violated.reserve(past.size());
  long violations = 0;
  for (const Example& ex : past) {
    if (!ex.y)
      throw std::invalid_argument("forgetting diagnostic needs labelled past examples");
    const double now = example_loss(current, ex.x, *ex.y);
    const double before = example_loss(previous, ex.x, *ex.y);
    const bool violated = now > before;
    report.violated.push_back(violated);
    violations += violated ? 1 : 0;
  }
  report.violation_rate =
      past.empty() ? 0.0
                   : static_cast<double>(violations) / static_cast<double>(past.size());
  return report;
}

BatteryReport battery_report(std::span<const Report> reports) {
  if (reports.empty())
    throw std::invalid_argument("battery report needs at least one sequence");
  BatteryReport battery;
  battery.mode = reports.front().mode;
  battery.sequences = static_cast<int>(reports.size());
  for (const Report& report : reports)
    if (report.mode != battery.mode)
      throw std::invalid_argument("battery report mixes modes");

  for (FoldTag tag : {FoldTag::V, FoldTag::T}) {
    std::vector<const FoldScores*> per_seq;
    for (const Report& report : reports)
      if (const FoldScores* f = report.fold(tag)) per_seq.push_back(f);
    if (per_seq.empty()) continue;

    // Micro pooling: sum counts (or loss sums), recompute.
    FoldScores pooled;
    pooled.fold = tag;
    long total_n = 0;
    double loss_sum = 0.0;
    const bool classification = per_seq.front()->confusion.has_value();
    Eigen::MatrixXi counts;
    for (const FoldScores* f : per_seq) {
      total_n += f->n;
      loss_sum += f->contemporary_loss_sum;
      if (classification) {
        if (counts.size() == 0)
          counts = f->confusion->counts;
        else
          counts += f->confusion->counts;
      }
    }
    pooled.n = static_cast<int>(total_n);
    pooled.contemporary_loss_sum = loss_sum;
    if (classification) {
      ConfusionCounts cm;
      cm.counts = counts;
      const long correct = counts.cast<long>().diagonal().sum();
      pooled.accuracy = static_cast<double>(correct) / static_cast<double>(total_n);
      pooled.contemporary_loss = 1.0 - *pooled.accuracy;
      const ClassMetrics metrics = prf_per_class(cm);
      pooled.precision_macro = aggregate(metrics, Metric::precision, AverageMode::macro);
      pooled.precision_weighted =
          aggregate(metrics, Metric::precision, AverageMode::weighted);
      pooled.recall_macro = aggregate(metrics, Metric::recall, AverageMode::macro);
      pooled.recall_weighted = aggregate(metrics, Metric::recall, AverageMode::weighted);
      pooled.f1_macro = aggregate(metrics, Metric::f1, AverageMode::macro);
      pooled.f1_weighted = aggregate(metrics, Metric::f1, AverageMode::weighted);
      pooled.confusion = std::move(cm);
    } else {
      pooled.contemporary_loss = loss_sum / static_cast<double>(total_n);
      pooled.mae = pooled.contemporary_loss;
    }
    battery.pooled.push_back(std::move(pooled));

    // Plain mean of per-sequence metrics.
    FoldScores mean;
    mean.fold = tag;
    mean.n = static_cast<int>(total_n);
    auto average = [&per_seq](auto getter) -> std::optional<double> {
      double sum = 0.0;
      int count = 0;
      for (const FoldScores* f : per_seq) {
        const std::optional<double> v = getter(*f);
        if (v) {
          sum += *v;
          ++count;
        }
      }
      if (count == 0) return std::nullopt;
      return sum / count;
    };
    mean.accuracy = average([](const FoldScores& f) { return f.accuracy; });
    mean.precision_macro = average([](const FoldScores& f) { return f.precision_macro; });
    mean.precision_weighted =
        average([](const FoldScores& f) { return f.precision_weighted; });
    mean.recall_macro = average([](const FoldScores& f) { return f.recall_macro; });
    mean.recall_weighted =
        average([](const FoldScores& f) { return f.recall_weighted; });
    mean.f1_macro = average([](const FoldScores& f) { return f.f1_macro; });
    mean.f1_weighted = average([](const FoldScores& f) { return f.f1_weighted; });
    mean.mae = average([](const FoldScores& f) { return f.mae; });
    double loss_total = 0.0;
    for (const FoldScores* f : per_seq) loss_total += f->contemporary_loss;
    mean.contemporary_loss = loss_total / static_cast<double>(per_seq.size());
    mean.contemporary_loss_sum = loss_sum;
    battery.mean_over_sequences.push_back(std::move(mean));
  }
  return battery;
}

}  // namespace cssl
