#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cssl/metrics.hpp"
#include "cssl/rng.hpp"
#include "cssl/streamgen.hpp"

using namespace cssl;

namespace {

PredictionLog make_log(const std::vector<double>& predictions,
                       const std::string& seq = "s", FoldTag fold = FoldTag::T) {
  PredictionLog log;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    PredictionRow row;
    row.sequence_id = seq;
    row.t = static_cast<int>(i);
    row.fold = fold;
    row.session = 0;
    row.prediction = predictions[i];
    row.confidence = 1.0;
    log.rows.push_back(std::move(row));
  }
  return log;
}

TruthChannel make_truth(const std::vector<double>& targets, const std::string& seq = "s") {
  TruthChannel truth;
  for (std::size_t i = 0; i < targets.size(); ++i)
    truth.values[seq][static_cast<int>(i)] = targets[i];
  return truth;
}

ConfusionCounts random_counts(int C, Rng& rng, int max_count = 30) {
  ConfusionCounts cm;
  cm.counts = Eigen::MatrixXi(C, C);
  for (int r = 0; r < C; ++r)
    for (int c = 0; c < C; ++c)
      cm.counts(r, c) = static_cast<int>(rng.below(max_count + 1));
  return cm;
}

}  // namespace

TEST_CASE("contemporary zero-one loss complements accuracy") {
  CHECK(contemporary_loss(make_log({1, 2, 0}), make_truth({1, 2, 0}),
                          LossKind::zero_one) == 0.0);
  CHECK(contemporary_loss(make_log({1, 2, 0, 1}), make_truth({1, 2, 0, 2}),
                          LossKind::zero_one) == 0.25);

  Rng rng(1);
  for (int round = 0; round < 50; ++round) {
    const int n = 1 + static_cast<int>(rng.below(97));
    std::vector<double> predictions, targets;
    for (int i = 0; i < n; ++i) {
      predictions.push_back(static_cast<double>(rng.below(5)));
      targets.push_back(static_cast<double>(rng.below(5)));
    }
    const PredictionLog log = make_log(predictions);
    const TruthChannel truth = make_truth(targets);
    CHECK(contemporary_loss(log, truth, LossKind::zero_one) + accuracy(log, truth) ==
          1.0);
    // The raw Eq-style sum is the number of misses.
    CHECK(contemporary_loss_sum(log, truth, LossKind::zero_one) ==
          std::round(n * contemporary_loss(log, truth, LossKind::zero_one)));
  }
}

TEST_CASE("accuracy matches a brute-force count and rejects empty logs") {
  CHECK(accuracy(make_log({0, 1, 2}), make_truth({0, 1, 2})) == 1.0);
  CHECK(accuracy(make_log({1, 2, 0}), make_truth({0, 1, 2})) == 0.0);

  Rng rng(2);
  std::vector<double> predictions, targets;
  for (int i = 0; i < 63; ++i) {
    predictions.push_back(static_cast<double>(rng.below(4)));
    targets.push_back(static_cast<double>(rng.below(4)));
  }
  int correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i)
    if (predictions[i] == targets[i]) ++correct;
  CHECK(accuracy(make_log(predictions), make_truth(targets)) ==
        static_cast<double>(correct) / 63.0);

  CHECK_THROWS_AS(accuracy(PredictionLog{}, TruthChannel{}), std::invalid_argument);
  CHECK_THROWS_AS(accuracy(make_log({0, 1}), make_truth({0})), std::invalid_argument);
}

TEST_CASE("per-class precision/recall/f1 and the zero-denominator rule") {
  ConfusionCounts diagonal;
  diagonal.counts = Eigen::MatrixXi::Zero(3, 3);
  diagonal.counts.diagonal() << 5, 7, 2;
  const ClassMetrics perfect = prf_per_class(diagonal);
  for (int c = 0; c < 3; ++c) {
    CHECK(perfect.precision[c] == 1.0);
    CHECK(perfect.recall[c] == 1.0);
    CHECK(perfect.f1[c] == 1.0);
  }

  ConfusionCounts absent;
  absent.counts = Eigen::MatrixXi::Zero(3, 3);
  absent.counts(0, 0) = 4;
  absent.counts(1, 0) = 2;  // class 2 never true, never predicted
  const ClassMetrics cm = prf_per_class(absent);
  CHECK(cm.precision[2] == 0.0);
  CHECK(cm.recall[2] == 0.0);
  CHECK(cm.f1[2] == 0.0);
  CHECK(cm.support[2] == 0);

  Rng rng(3);
  for (int round = 0; round < 30; ++round) {
    const ConfusionCounts counts = random_counts(3, rng);
    const ClassMetrics metrics = prf_per_class(counts);
    for (int i = 0; i < 3; ++i) {
      const double tp = counts.counts(i, i);
      const double fp = counts.counts.col(i).sum() - tp;
      const double fn = counts.counts.row(i).sum() - tp;
      const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
      CHECK(std::abs(metrics.precision[i] - p) < 1e-12);
      CHECK(std::abs(metrics.recall[i] - r) < 1e-12);
      CHECK(std::abs(metrics.f1[i] - f) < 1e-12);
    }
  }
}

TEST_CASE("macro and weighted averages") {
  ClassMetrics cm;
  cm.precision = Vector::Zero(2);
  cm.recall = Vector::Zero(2);
  cm.f1 = Vector(2);
  cm.f1 << 0.8, 0.6;
  cm.support = Eigen::VectorXi(2);

  cm.support << 50, 50;
  CHECK(aggregate(cm, Metric::f1, AverageMode::macro) == doctest::Approx(0.7));
  CHECK(aggregate(cm, Metric::f1, AverageMode::weighted) == doctest::Approx(0.7));

  cm.support << 90, 10;
  CHECK(aggregate(cm, Metric::f1, AverageMode::weighted) ==
        doctest::Approx(0.78).epsilon(1e-12));

  // Weighted equals the support-replicated flat mean.
  Rng rng(4);
  for (int round = 0; round < 20; ++round) {
    ClassMetrics random_cm;
    const int C = 4;
    random_cm.precision = Vector::Zero(C);
    random_cm.recall = Vector::Zero(C);
    random_cm.f1 = Vector(C);
    random_cm.support = Eigen::VectorXi(C);
    for (int c = 0; c < C; ++c) {
      random_cm.f1[c] = rng.uniform();
      random_cm.support[c] = 1 + static_cast<int>(rng.below(20));
    }
    double flat_sum = 0.0;
    long flat_n = 0;
    for (int c = 0; c < C; ++c)
      for (int k = 0; k < random_cm.support[c]; ++k) {
        flat_sum += random_cm.f1[c];
        ++flat_n;
      }
    CHECK(std::abs(aggregate(random_cm, Metric::f1, AverageMode::weighted) -
                   flat_sum / flat_n) < 1e-12);
  }

  // present_only drops zero-support classes from the class average.
  ClassMetrics sparse;
  sparse.precision = Vector::Zero(3);
  sparse.recall = Vector::Zero(3);
  sparse.f1 = Vector(3);
  sparse.f1 << 0.9, 0.0, 0.5;
  sparse.support = Eigen::VectorXi(3);
  sparse.support << 10, 0, 30;
  CHECK(aggregate(sparse, Metric::f1, AverageMode::macro, ClassFilter::present_only) ==
        doctest::Approx(0.7).epsilon(1e-12));
  CHECK(aggregate(sparse, Metric::f1, AverageMode::macro, ClassFilter::all) ==
        doctest::Approx((0.9 + 0.0 + 0.5) / 3).epsilon(1e-12));

  ClassMetrics empty;
  empty.precision = Vector::Zero(2);
  empty.recall = Vector::Zero(2);
  empty.f1 = Vector::Zero(2);
  empty.support = Eigen::VectorXi::Zero(2);
  CHECK_THROWS_AS(aggregate(empty, Metric::f1, AverageMode::macro,
                            ClassFilter::present_only),
                  std::invalid_argument);
}

TEST_CASE("mae basics and density-count consistency") {
  const std::vector<double> a{3, 5}, b{1, 9};
  CHECK(mae(a, a) == 0.0);
  CHECK(mae(a, b) == 3.0);
  const std::vector<double> short_vec{1};
  CHECK_THROWS_AS(mae(a, short_vec), std::invalid_argument);

  Rng rng(5);
  std::vector<double> predicted_counts, true_counts;
  for (int g = 0; g < 6; ++g) {
    PointAnnotation pred, truth;
    for (std::uint64_t i = 0; i < 3 + rng.below(5); ++i)
      pred.points.push_back({rng.uniform() * 20, rng.uniform() * 20});
    for (std::uint64_t i = 0; i < 3 + rng.below(5); ++i)
      truth.points.push_back({rng.uniform() * 20, rng.uniform() * 20});
    predicted_counts.push_back(
        count_from_density(density_map_from_points(pred, 1.5, 20, 20)));
    true_counts.push_back(
        count_from_density(density_map_from_points(truth, 1.5, 20, 20)));
  }
  double expected = 0.0;
  for (std::size_t i = 0; i < predicted_counts.size(); ++i)
    expected += std::abs(predicted_counts[i] - true_counts[i]);
  expected /= static_cast<double>(predicted_counts.size());
  CHECK(mae(predicted_counts, true_counts) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("incremental deltas are signed differences on one fold") {
  FoldScores updated, baseline;
  updated.fold = baseline.fold = FoldTag::T;
  updated.accuracy = 0.80;
  baseline.accuracy = 0.77;

  const DeltaReport delta = incremental_delta(updated, baseline, ReportMetric::accuracy);
  CHECK(delta.delta == doctest::Approx(0.03).epsilon(1e-12));
  const DeltaReport swapped =
      incremental_delta(baseline, updated, ReportMetric::accuracy);
  CHECK(swapped.delta == -delta.delta);
  const DeltaReport same = incremental_delta(updated, updated, ReportMetric::accuracy);
  CHECK(same.delta == 0.0);

  FoldScores other = baseline;
  other.fold = FoldTag::V;
  CHECK_THROWS_AS(incremental_delta(updated, other, ReportMetric::accuracy),
                  std::invalid_argument);
}

TEST_CASE("forgetting diagnostic flags per-example regressions") {
  std::vector<Example> past(4);
  Rng rng(6);
  for (int i = 0; i < 4; ++i) {
    past[static_cast<std::size_t>(i)].x = rng.normal_vector(2);
    past[static_cast<std::size_t>(i)].y = 0.5 * past[static_cast<std::size_t>(i)].x[0];
  }

  LearnerState a = make_regressor(2);
  a.weights << 0.5, 0.0;
  const ForgettingReport same = forgetting_diagnostic(a, a, past);
  CHECK(same.violation_rate == 0.0);

  // Optimum on noiseless data has zero loss everywhere, so nothing can
  // regress relative to a random predecessor.
  LearnerState random_prev = make_regressor(2);
  random_prev.weights << 3.0, -2.0;
  random_prev.bias[0] = 1.0;
  for (const Example& ex : past)
    REQUIRE(example_loss(a, ex.x, *ex.y) == doctest::Approx(0.0).epsilon(1e-18));
  const ForgettingReport better = forgetting_diagnostic(a, random_prev, past);
  CHECK(better.violation_rate == 0.0);

  // Engineered single-example violation: losses 2.0 vs 1.0.
  std::vector<Example> one(1);
  one[0].x = Vector::Ones(1);
  one[0].y = 0.0;
  LearnerState prev = make_regressor(1);
  prev.weights(0, 0) = 1.0;  // loss 1
  LearnerState cur = make_regressor(1);
  cur.weights(0, 0) = std::sqrt(2.0);  // loss 2
  const ForgettingReport violated = forgetting_diagnostic(cur, prev, one);
  CHECK(violated.violated[0]);
  CHECK(violated.violation_rate == 1.0);

  // Appending a violating example strictly increases the rate.
  Example violating;
  violating.x = Vector::Zero(2);
  violating.y = 1.0;  // `a` predicts 0 (loss 1), random_prev predicts 1 (loss 0)
  const double before = forgetting_diagnostic(a, random_prev, past).violation_rate;
  std::vector<Example> extended = past;
  extended.push_back(violating);
  const double after = forgetting_diagnostic(a, random_prev, extended).violation_rate;
  CHECK(after > before);

  LearnerState mismatched = make_regressor(3);
  CHECK_THROWS_AS(forgetting_diagnostic(mismatched, a, past), std::invalid_argument);
}

TEST_CASE("battery report pools counts and averages sequences") {
  // Two sequences with equal sizes, accuracies 1.0 and 0.5.
  const TruthChannel truth_a = make_truth({0, 1, 0, 1}, "a");
  const TruthChannel truth_b = make_truth({0, 1, 0, 1}, "b");
  TruthChannel truth;
  truth.values["a"] = truth_a.values.at("a");
  truth.values["b"] = truth_b.values.at("b");

  const Report report_a =
      score_log(make_log({0, 1, 0, 1}, "a"), truth, TaskKind::classification, 2, "a",
                "sup-ft");
  const Report report_b =
      score_log(make_log({0, 1, 1, 0}, "b"), truth, TaskKind::classification, 2, "b",
                "sup-ft");

  const std::vector<Report> single{report_a};
  const BatteryReport one = battery_report(single);
  CHECK(one.sequences == 1);
  CHECK(*one.pooled[0].accuracy == *report_a.fold(FoldTag::T)->accuracy);

  const std::vector<Report> both{report_a, report_b};
  const BatteryReport two = battery_report(both);
  CHECK(*two.pooled[0].accuracy == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(*two.mean_over_sequences[0].accuracy == doctest::Approx(0.75).epsilon(1e-15));

  // Pooled counts are the matrix sum, invariant under sequence order.
  const std::vector<Report> swapped{report_b, report_a};
  const BatteryReport reordered = battery_report(swapped);
  const Eigen::MatrixXi expected = report_a.fold(FoldTag::T)->confusion->counts +
                                   report_b.fold(FoldTag::T)->confusion->counts;
  CHECK(two.pooled[0].confusion->counts == expected);
  CHECK(reordered.pooled[0].confusion->counts == expected);
  CHECK(*reordered.pooled[0].accuracy == *two.pooled[0].accuracy);

  CHECK_THROWS_AS(battery_report(std::vector<Report>{}), std::invalid_argument);
}

TEST_CASE("session traces group rows by producing session") {
  PredictionLog log = make_log({0, 1, 0, 1, 0, 1}, "s", FoldTag::V);
  log.rows[0].session = log.rows[1].session = 0;
  log.rows[2].session = log.rows[3].session = 1;
  log.rows[4].session = log.rows[5].session = 2;
  const TruthChannel truth = make_truth({0, 1, 1, 1, 1, 0});
  const auto trace = session_trace(log, truth, TaskKind::classification);
  REQUIRE(trace.size() == 3);
  CHECK(trace[0].value == 1.0);
  CHECK(trace[1].value == 0.5);
  CHECK(trace[2].value == 0.0);
  CHECK(trace[0].n == 2);
}
