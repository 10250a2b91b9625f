#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include <Eigen/Dense>

#include "cssl/rng.hpp"
#include "cssl/sequence_io.hpp"
#include "cssl/streamgen.hpp"

using namespace cssl;
namespace fs = std::filesystem;

namespace {

DriftSchedule simple_schedule(int C, int d, double sigma2 = 1.0) {
  DriftSchedule s;
  s.base_means = Matrix::Zero(C, d);
  for (int c = 0; c < C; ++c) s.base_means(c, 0) = 4.0 * c;
  s.velocities = Matrix::Zero(C, d);
  s.covariance_scale = sigma2;
  s.priors = Vector::Constant(C, 1.0 / C);
  return s;
}

bool bitwise_equal(const Sequence& a, const Sequence& b) {
  if (a.length() != b.length()) return false;
  for (int i = 0; i < a.length(); ++i) {
    const Example& ea = a.examples[static_cast<std::size_t>(i)];
    const Example& eb = b.examples[static_cast<std::size_t>(i)];
    if (ea.t != eb.t || ea.y != eb.y) return false;
    if (std::memcmp(ea.x.data(), eb.x.data(), sizeof(double) * ea.x.size()) != 0)
      return false;
  }
  return true;
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "cssl_streamgen_test";
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("classification stream has the requested shape and label range") {
  const DriftSchedule schedule = simple_schedule(9, 16);
  const Sequence seq = make_classification_stream(schedule, 22500, 16, 9, 7);
  CHECK(seq.length() == 22500);
  CHECK(seq.kind == TaskKind::classification);
  for (const Example& ex : seq.examples) {
    REQUIRE(ex.y.has_value());
    const int label = ex.class_label();
    REQUIRE(label >= 0);
    REQUIRE(label < 9);
    REQUIRE(ex.x.size() == 16);
  }
  validate(seq);
}

TEST_CASE("stationary stream keeps per-class means steady") {
  const int C = 3, d = 4, n = 4000, window = 1000;
  const double sigma = 1.0;
  const Sequence seq = make_classification_stream(simple_schedule(C, d), n, d, C, 11);

  for (int c = 0; c < C; ++c) {
    Vector first = Vector::Zero(d), last = Vector::Zero(d);
    int n_first = 0, n_last = 0;
    for (int i = 0; i < window; ++i) {
      const Example& ex = seq.examples[static_cast<std::size_t>(i)];
      if (ex.class_label() == c) {
        first += ex.x;
        ++n_first;
      }
    }
    for (int i = n - window; i < n; ++i) {
      const Example& ex = seq.examples[static_cast<std::size_t>(i)];
      if (ex.class_label() == c) {
        last += ex.x;
        ++n_last;
      }
    }
    REQUIRE(n_first > 0);
    REQUIRE(n_last > 0);
    first /= n_first;
    last /= n_last;
    const double bound = 5.0 * sigma / std::sqrt(std::min(n_first, n_last));
    for (int i = 0; i < d; ++i)
      CHECK(std::abs(first[i] - last[i]) < bound);
  }
}

TEST_CASE("a jump shifts the class mean by its offset") {
  const int C = 3, d = 2, n = 1000;
  DriftSchedule schedule = simple_schedule(C, d);
  DriftSchedule::Jump jump;
  jump.t = 500;
  jump.offsets = Matrix::Zero(C, d);
  jump.offsets(0, 0) = 10.0;
  schedule.jumps.push_back(jump);

  const Sequence seq = make_classification_stream(schedule, n, d, C, 3);
  double before = 0.0, after = 0.0;
  int n_before = 0, n_after = 0;
  for (const Example& ex : seq.examples) {
    if (ex.class_label() != 0) continue;
    if (ex.t < 500) {
      before += ex.x[0];
      ++n_before;
    } else {
      after += ex.x[0];
      ++n_after;
    }
  }
  before /= n_before;
  after /= n_after;
  const double se = std::sqrt(1.0 / n_before + 1.0 / n_after);
  CHECK(std::abs((after - before) - 10.0) < 3.0 * se);
}

TEST_CASE("schedule validation rejects bad configurations") {
  DriftSchedule schedule = simple_schedule(3, 4);
  CHECK_THROWS_AS(make_classification_stream(schedule, 100, 5, 3, 1),
                  std::invalid_argument);  // d mismatch
  CHECK_THROWS_AS(make_classification_stream(schedule, 100, 4, 4, 1),
                  std::invalid_argument);  // C mismatch

  schedule.priors[0] = 0.5;  // no longer sums to 1
  CHECK_THROWS_AS(make_classification_stream(schedule, 100, 4, 3, 1),
                  std::invalid_argument);

  DriftSchedule negative = simple_schedule(3, 4);
  negative.covariance_scale = 0.0;
  CHECK_THROWS_AS(make_classification_stream(negative, 100, 4, 3, 1),
                  std::invalid_argument);

  DriftSchedule late_jump = simple_schedule(3, 4);
  late_jump.jumps.push_back({400, Matrix::Zero(3, 4)});
  CHECK_THROWS_AS(make_classification_stream(late_jump, 100, 4, 3, 1),
                  std::invalid_argument);
}

TEST_CASE("same seed reproduces the stream bitwise, distinct seeds differ") {
  const DriftSchedule schedule = simple_schedule(4, 6);
  const Sequence a = make_classification_stream(schedule, 500, 6, 4, 42);
  const Sequence b = make_classification_stream(schedule, 500, 6, 4, 42);
  const Sequence c = make_classification_stream(schedule, 500, 6, 4, 43);
  CHECK(bitwise_equal(a, b));
  CHECK_FALSE(bitwise_equal(a, c));
}

TEST_CASE("label frequencies match the priors") {
  const int C = 9, d = 4, n = 10000;
  DriftSchedule schedule = simple_schedule(C, d);
  schedule.priors = Vector::Constant(C, 0.7 / 8);
  schedule.priors[0] = 0.3;

  const Sequence seq = make_classification_stream(schedule, n, d, C, 5);
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(C);
  for (const Example& ex : seq.examples) counts[ex.class_label()] += 1;
  for (int c = 0; c < C; ++c) {
    const double pi = schedule.priors[c];
    const double bound = 3.0 * std::sqrt(pi * (1.0 - pi) / n);
    CHECK(std::abs(counts[c] / static_cast<double>(n) - pi) <= bound);
  }
}

TEST_CASE("two jumps at the same step compose additively") {
  const int C = 2, d = 3;
  Matrix a = Matrix::Zero(C, d), b = Matrix::Zero(C, d);
  a(0, 1) = 2.5;
  a(1, 0) = -1.25;
  b(0, 1) = 0.75;
  b(1, 2) = 4.0;

  DriftSchedule split = simple_schedule(C, d);
  split.jumps.push_back({40, a});
  split.jumps.push_back({40, b});
  DriftSchedule merged = simple_schedule(C, d);
  merged.jumps.push_back({40, a + b});

  const Sequence sa = make_classification_stream(split, 100, d, C, 9);
  const Sequence sb = make_classification_stream(merged, 100, d, C, 9);
  CHECK(bitwise_equal(sa, sb));
}

TEST_CASE("noiseless stationary regression reproduces the linear target exactly") {
  RegressionDrift drift;
  drift.base_weights = Vector::LinSpaced(4, -1.0, 2.0);
  drift.weight_velocity = Vector::Zero(4);
  drift.base_bias = 0.5;

  const Sequence seq = make_regression_stream(drift, 0.0, 200, 4, 21);
  for (const Example& ex : seq.examples) {
    REQUIRE(ex.y.has_value());
    CHECK(*ex.y == drift.base_weights.dot(ex.x) + drift.base_bias);
  }
}

TEST_CASE("regression stream supports the 750-frame split size") {
  RegressionDrift drift;
  drift.base_weights = Vector::Ones(8);
  drift.weight_velocity = Vector::Zero(8);
  const Sequence seq = make_regression_stream(drift, 0.1, 750, 8, 2);
  CHECK(seq.length() == 750);
  CHECK(seq.kind == TaskKind::regression);
}

TEST_CASE("weight jump is recovered by per-segment least squares") {
  const int d = 4, n = 750, jump_at = 300;
  RegressionDrift drift;
  drift.base_weights = Vector::LinSpaced(d, 0.5, 2.0);
  drift.weight_velocity = Vector::Zero(d);
  drift.base_bias = 1.0;
  drift.jumps.push_back({jump_at, drift.base_weights, 0.0});  // doubles w

  const Sequence seq = make_regression_stream(drift, 0.05, n, d, 17);

  auto fit_segment = [&](int begin, int end) {
    const int m = end - begin;
    Matrix A(m, d + 1);
    Vector y(m);
    for (int i = 0; i < m; ++i) {
      A.row(i).head(d) = seq.examples[static_cast<std::size_t>(begin + i)].x;
      A(i, d) = 1.0;
      y[i] = *seq.examples[static_cast<std::size_t>(begin + i)].y;
    }
    return Vector(A.colPivHouseholderQr().solve(y));
  };

  const Vector theta1 = fit_segment(0, jump_at);
  const Vector theta2 = fit_segment(jump_at, n);
  const Vector w2 = 2.0 * drift.base_weights;
  CHECK((theta1.head(d) - drift.base_weights).norm() / drift.base_weights.norm() < 0.05);
  CHECK((theta2.head(d) - w2).norm() / w2.norm() < 0.05);
}

TEST_CASE("density map: empty annotation, unit mass, point-count mass") {
  const DensityGrid empty = density_map_from_points({}, 2.0, 32, 32);
  CHECK(count_from_density(empty) == 0.0);
  CHECK(empty.values.minCoeff() == 0.0);

  PointAnnotation center;
  center.points.push_back({16.0, 16.0});
  const DensityGrid one = density_map_from_points(center, 1.5, 32, 32);
  CHECK(count_from_density(one) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(one.values.minCoeff() >= 0.0);

  Rng rng(99);
  PointAnnotation many;
  for (int i = 0; i < 37; ++i)
    many.points.push_back({rng.uniform() * 24.0, rng.uniform() * 40.0});
  const DensityGrid grid = density_map_from_points(many, 2.5, 24, 40);
  CHECK(std::abs(count_from_density(grid) - 37.0) < 1e-6);
}

TEST_CASE("density map rejects points outside the grid") {
  PointAnnotation bad;
  bad.points.push_back({32.0, 10.0});  // row == rows is outside
  CHECK_THROWS_AS(density_map_from_points(bad, 1.0, 32, 32), std::invalid_argument);
}

TEST_CASE("counts are additive over grids") {
  Rng rng(4);
  PointAnnotation a, b;
  for (int i = 0; i < 5; ++i) a.points.push_back({rng.uniform() * 16, rng.uniform() * 16});
  for (int i = 0; i < 9; ++i) b.points.push_back({rng.uniform() * 16, rng.uniform() * 16});
  const DensityGrid ga = density_map_from_points(a, 1.0, 16, 16);
  const DensityGrid gb = density_map_from_points(b, 1.0, 16, 16);
  DensityGrid combined;
  combined.values = ga.values + gb.values;
  CHECK(count_from_density(combined) ==
        doctest::Approx(count_from_density(ga) + count_from_density(gb)).epsilon(1e-12));
}

TEST_CASE("sequence csv loads labelled and unlabelled files") {
  const fs::path dir = temp_dir();
  const fs::path labelled = dir / "labelled.csv";
  {
    std::ofstream out(labelled);
    out << "t,x0,x1,y\n0,1.5,2.5,1\n1,0.25,-1,0\n2,3,4,2\n";
  }
  SequenceCsvSchema schema;
  schema.kind = TaskKind::classification;
  schema.C = 3;
  schema.sequence_id = "file-a";
  const Sequence seq = load_sequence_csv(labelled.string(), schema);
  CHECK(seq.length() == 3);
  CHECK(seq.d == 2);
  CHECK(seq.examples[0].class_label() == 1);
  CHECK(seq.examples[2].x[1] == 4.0);

  const fs::path unlabelled = dir / "unlabelled.csv";
  {
    std::ofstream out(unlabelled);
    out << "t,x0,x1\n0,1,2\n1,3,4\n";
  }
  SequenceCsvSchema plain;
  plain.kind = TaskKind::regression;
  const Sequence seq2 = load_sequence_csv(unlabelled.string(), plain);
  CHECK(seq2.length() == 2);
  for (const Example& ex : seq2.examples) CHECK_FALSE(ex.y.has_value());
}

TEST_CASE("sequence csv round-trips a generated stream") {
  const DriftSchedule schedule = simple_schedule(3, 5);
  const Sequence seq = make_classification_stream(schedule, 64, 5, 3, 31, "round");
  const fs::path path = temp_dir() / "round.csv";
  save_sequence_csv(seq, path.string());

  SequenceCsvSchema schema;
  schema.kind = TaskKind::classification;
  schema.C = 3;
  schema.sequence_id = "round";
  const Sequence back = load_sequence_csv(path.string(), schema);
  REQUIRE(back.length() == seq.length());
  for (int i = 0; i < seq.length(); ++i) {
    const Example& a = seq.examples[static_cast<std::size_t>(i)];
    const Example& b = back.examples[static_cast<std::size_t>(i)];
    CHECK(a.t == b.t);
    CHECK(*a.y == *b.y);
    for (int k = 0; k < 5; ++k) CHECK(std::abs(a.x[k] - b.x[k]) <= 1e-12);
  }
}

TEST_CASE("sequence csv reports malformed rows and schema mismatches") {
  const fs::path dir = temp_dir();
  const fs::path bad = dir / "bad.csv";
  {
    std::ofstream out(bad);
    out << "t,x0,x1\n0,1,2\n1,abc,4\n";
  }
  SequenceCsvSchema schema;
  schema.kind = TaskKind::regression;
  try {
    load_sequence_csv(bad.string(), schema);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }

  SequenceCsvSchema mismatched;
  mismatched.kind = TaskKind::regression;
  mismatched.expected_d = 7;
  const fs::path ok = dir / "ok.csv";
  {
    std::ofstream out(ok);
    out << "t,x0,x1\n0,1,2\n";
  }
  CHECK_THROWS_AS(load_sequence_csv(ok.string(), mismatched), std::invalid_argument);

  const fs::path ragged = dir / "ragged.csv";
  {
    std::ofstream out(ragged);
    out << "t,x0,x1\n0,1,2\n1,3\n";
  }
  CHECK_THROWS_AS(load_sequence_csv(ragged.string(), schema), std::runtime_error);
}
