#include "cssl/streamgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cssl/rng.hpp"

namespace cssl {

namespace {

constexpr std::uint64_t kGeometryStream = 0x67656f6dULL;   // shared class layout
constexpr std::uint64_t kSequenceStream = 0x73657175ULL;   // per-sequence drift

Vector random_direction(Rng& rng, int d) {
  Vector v = rng.normal_vector(d);
  const double n = v.norm();
  if (n == 0.0) return Vector::Unit(d, 0);
  return v / n;
}

}  // namespace

Vector DriftSchedule::mean_at(int class_index, int t) const {
  Vector acc = Vector::Zero(dim());
  for (const Jump& jump : jumps)
    if (jump.t <= t) acc += jump.offsets.row(class_index).transpose();
  return base_means.row(class_index).transpose() +
         velocities.row(class_index).transpose() * static_cast<double>(t) + acc;
}

void validate(const DriftSchedule& schedule, int d, int C, int length) {
  if (schedule.base_means.rows() != C || schedule.base_means.cols() != d)
    throw std::invalid_argument("drift schedule: base_means must be C x d");
  if (schedule.velocities.rows() != C || schedule.velocities.cols() != d)
    throw std::invalid_argument("drift schedule: velocities must be C x d");
  if (!(schedule.covariance_scale > 0.0))
    throw std::invalid_argument("drift schedule: covariance_scale must be positive");
  if (schedule.priors.size() != C)
    throw std::invalid_argument("drift schedule: priors must have C entries");
  if (schedule.priors.minCoeff() < 0.0)
    throw std::invalid_argument("drift schedule: priors must be nonnegative");
  if (std::abs(schedule.priors.sum() - 1.0) > 1e-9)
    throw std::invalid_argument("drift schedule: priors must sum to 1");
  int prev_t = -1;
  for (const DriftSchedule::Jump& jump : schedule.jumps) {
    if (jump.t < prev_t)
      throw std::invalid_argument("drift schedule: jumps must be sorted by t");
    if (jump.t < 0 || jump.t >= length)
      throw std::invalid_argument("drift schedule: jump time outside sequence");
    if (jump.offsets.rows() != C || jump.offsets.cols() != d)
      throw std::invalid_argument("drift schedule: jump offsets must be C x d");
    prev_t = jump.t;
  }
}

Sequence make_classification_stream(const DriftSchedule& schedule, int length,
                                    int d, int C, std::uint64_t seed,
                                    const std::string& sequence_id,
                                    DriftGroup group) {
  if (length <= 0) throw std::invalid_argument("stream length must be positive");
  validate(schedule, d, C, length);

  Rng rng(seed);
  const double sigma = std::sqrt(schedule.covariance_scale);

  Sequence seq;
  seq.sequence_id = sequence_id;
  seq.kind = TaskKind::classification;
  seq.group = group;
  seq.d = d;
  seq.C = C;
  seq.examples.reserve(length);

  // Jump offsets accumulate as time passes each jump; summing them into a
  // running matrix keeps jump composition exact.
  Matrix jump_acc = Matrix::Zero(C, d);
  std::size_t next_jump = 0;

  for (int t = 0; t < length; ++t) {
    while (next_jump < schedule.jumps.size() && schedule.jumps[next_jump].t <= t) {
      jump_acc += schedule.jumps[next_jump].offsets;
      ++next_jump;
    }
    const int c = rng.categorical(schedule.priors);
    Vector x = schedule.base_means.row(c).transpose() +
               schedule.velocities.row(c).transpose() * static_cast<double>(t) +
               jump_acc.row(c).transpose();
    for (int i = 0; i < d; ++i) x[i] += sigma * rng.normal();

    Example ex;
    ex.t = t;
    ex.x = std::move(x);
    ex.y = static_cast<double>(c);
    ex.sequence_id = sequence_id;
    seq.examples.push_back(std::move(ex));
  }
  return seq;
}

Vector RegressionDrift::weights_at(int t) const {
  Vector acc = Vector::Zero(dim());
  for (const Jump& jump : jumps)
    if (jump.t <= t) acc += jump.weight_offset;
  return base_weights + weight_velocity * static_cast<double>(t) + acc;
}

double RegressionDrift::bias_at(int t) const {
  double acc = 0.0;
  for (const Jump& jump : jumps)
    if (jump.t <= t) acc += jump.bias_offset;
  return base_bias + bias_velocity * static_cast<double>(t) + acc;
}

void validate(const RegressionDrift& drift, int d, int length) {
  if (drift.base_weights.size() != d)
    throw std::invalid_argument("regression drift: base_weights must have d entries");
  if (drift.weight_velocity.size() != d)
    throw std::invalid_argument("regression drift: weight_velocity must have d entries");
  int prev_t = -1;
  for (const RegressionDrift::Jump& jump : drift.jumps) {
    if (jump.t < prev_t)
      throw std::invalid_argument("regression drift: jumps must be sorted by t");
    if (jump.t < 0 || jump.t >= length)
      throw std::invalid_argument("regression drift: jump time outside sequence");
    if (jump.weight_offset.size() != d)
      throw std::invalid_argument("regression drift: jump offset must have d entries");
    prev_t = jump.t;
  }
}

Sequence make_regression_stream(const RegressionDrift& drift, double noise_std,
                                int length, int d, std::uint64_t seed,
                                const std::string& sequence_id,
                                DriftGroup group) {
  if (length <= 0) throw std::invalid_argument("stream length must be positive");
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be >= 0");
  validate(drift, d, length);

  Rng rng(seed);

  Sequence seq;
  seq.sequence_id = sequence_id;
  seq.kind = TaskKind::regression;
  seq.group = group;
  seq.d = d;
  seq.C = 0;
  seq.examples.reserve(length);

  Vector weight_acc = drift.base_weights;
  double bias_acc = drift.base_bias;
  std::size_t next_jump = 0;

  for (int t = 0; t < length; ++t) {
    while (next_jump < drift.jumps.size() && drift.jumps[next_jump].t <= t) {
      weight_acc += drift.jumps[next_jump].weight_offset;
      bias_acc += drift.jumps[next_jump].bias_offset;
      ++next_jump;
    }
    const Vector w = weight_acc + drift.weight_velocity * static_cast<double>(t);
    const double b = bias_acc + drift.bias_velocity * static_cast<double>(t);

    Vector x = rng.normal_vector(d);
    double y = w.dot(x) + b;
    if (noise_std > 0.0) y += noise_std * rng.normal();

    Example ex;
    ex.t = t;
    ex.x = std::move(x);
    ex.y = y;
    ex.sequence_id = sequence_id;
    seq.examples.push_back(std::move(ex));
  }
  return seq;
}

DensityGrid density_map_from_points(const PointAnnotation& annotation,
                                    double sigma, int rows, int cols) {
  if (!(sigma > 0.0)) throw std::invalid_argument("kernel sigma must be positive");
  if (rows <= 0 || cols <= 0)
    throw std::invalid_argument("density grid dims must be positive");

  DensityGrid grid;
  grid.values = Matrix::Zero(rows, cols);

  const double radius = 4.0 * sigma;
  const double inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);

  for (const Eigen::Vector2d& p : annotation.points) {
    const double r = p[0], c = p[1];
    if (r < 0.0 || r >= rows || c < 0.0 || c >= cols)
      throw std::invalid_argument("annotation point outside grid");

    const int i0 = std::max(0, static_cast<int>(std::floor(r - radius)));
    const int i1 = std::min(rows - 1, static_cast<int>(std::ceil(r + radius)));
    const int j0 = std::max(0, static_cast<int>(std::floor(c - radius)));
    const int j1 = std::min(cols - 1, static_cast<int>(std::ceil(c + radius)));

    Matrix kernel = Matrix::Zero(i1 - i0 + 1, j1 - j0 + 1);
    for (int i = i0; i <= i1; ++i) {
      for (int j = j0; j <= j1; ++j) {
        const double dr = (i + 0.5) - r;
        const double dc = (j + 0.5) - c;
        kernel(i - i0, j - j0) = std::exp(-(dr * dr + dc * dc) * inv_two_sigma2);
      }
    }
    const double mass = kernel.sum();
    if (mass > 0.0) {
      grid.values.block(i0, j0, kernel.rows(), kernel.cols()) += kernel / mass;
    } else {
      // Kernel underflowed (sigma far below cell size): all mass on the
      // containing cell so the count invariant still holds.
      grid.values(std::min(rows - 1, static_cast<int>(r)),
                  std::min(cols - 1, static_cast<int>(c))) += 1.0;
    }
  }
  return grid;
}

double count_from_density(const DensityGrid& grid) { return grid.values.sum(); }

DriftSchedule make_classification_schedule(const ClassificationPreset& preset,
                                           std::uint64_t master_seed,
                                           std::uint64_t sequence_stream) {
  const int C = preset.C;
  const int d = preset.d;

  // Class layout shared by every sequence of a battery.
  Rng geometry(derive_seed(master_seed, kGeometryStream));
  DriftSchedule schedule;
  schedule.base_means = Matrix(C, d);
  for (int c = 0; c < C; ++c)
    schedule.base_means.row(c) =
        (preset.mean_radius * random_direction(geometry, d)).transpose();
  schedule.covariance_scale = preset.sigma * preset.sigma;
  schedule.priors = Vector::Constant(C, (1.0 - preset.background_prior) / (C - 1));
  schedule.priors[0] = preset.background_prior;

  // Per-sequence drift.
  Rng stream(derive_seed(derive_seed(master_seed, kSequenceStream), sequence_stream));
  schedule.velocities = Matrix(C, d);
  const double speed = preset.drift_per_length * preset.sigma / preset.length;
  for (int c = 0; c < C; ++c)
    schedule.velocities.row(c) = (speed * random_direction(stream, d)).transpose();

  if (preset.jump_scale > 0.0) {
    double scale = preset.jump_scale;
    for (int boundary : preset.boundaries) {
      DriftSchedule::Jump jump;
      jump.t = boundary;
      jump.offsets = Matrix(C, d);
      for (int c = 0; c < C; ++c)
        jump.offsets.row(c) =
            (scale * preset.sigma * random_direction(stream, d)).transpose();
      schedule.jumps.push_back(std::move(jump));
      scale *= preset.jump_growth;
    }
  }
  return schedule;
}

RegressionDrift make_regression_drift(const RegressionPreset& preset,
                                      std::uint64_t master_seed,
                                      std::uint64_t sequence_stream) {
  Rng stream(derive_seed(derive_seed(master_seed, kSequenceStream), sequence_stream));
  RegressionDrift drift;
  drift.base_weights = preset.weight_scale * stream.normal_vector(preset.d);
  drift.base_bias = preset.weight_scale * stream.normal();
  const double speed = preset.drift_per_length * preset.weight_scale / preset.length;
  drift.weight_velocity = speed * random_direction(stream, preset.d);
  drift.bias_velocity = 0.0;
  if (preset.jump_scale > 0.0) {
    for (int boundary : preset.boundaries) {
      RegressionDrift::Jump jump;
      jump.t = boundary;
      jump.weight_offset = preset.jump_scale * preset.weight_scale *
                           random_direction(stream, preset.d);
      jump.bias_offset = 0.0;
      drift.jumps.push_back(std::move(jump));
    }
  }
  return drift;
}

}  // namespace cssl
