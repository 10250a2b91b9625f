#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cssl/types.hpp"

namespace cssl {

// Time-varying class-conditional generative process: per-class means move
// with constant velocity and take discrete jumps, shared isotropic
// covariance, fixed class priors.
struct DriftSchedule {
  struct Jump {
    int t = 0;          // first time index at which the offset applies
    Matrix offsets;     // C x d, per-class displacement
  };

  Matrix base_means;        // C x d, class means at t = 0
  Matrix velocities;        // C x d, feature units per time step
  double covariance_scale = 1.0;  // sigma^2 of the shared isotropic covariance
  std::vector<Jump> jumps;  // sorted by t
  Vector priors;            // C entries, sums to 1

  int classes() const { return static_cast<int>(base_means.rows()); }
  int dim() const { return static_cast<int>(base_means.cols()); }

  // Class mean at time t: base + velocity * t + all jump offsets with t_j <= t.
  Vector mean_at(int class_index, int t) const;
};

// Throws std::invalid_argument on dimension mismatches, unsorted or
// out-of-range jumps, non-normalized priors, or non-positive covariance.
void validate(const DriftSchedule& schedule, int d, int C, int length);

Sequence make_classification_stream(const DriftSchedule& schedule, int length,
                                    int d, int C, std::uint64_t seed,
                                    const std::string& sequence_id = "stream",
                                    DriftGroup group = DriftGroup::contiguous);

// Drifting linear target: y = w(t) . x + b(t) + eps, x ~ N(0, I).
struct RegressionDrift {
  struct Jump {
    int t = 0;
    Vector weight_offset;   // d
    double bias_offset = 0.0;
  };

  Vector base_weights;      // d
  Vector weight_velocity;   // d, per time step
  double base_bias = 0.0;
  double bias_velocity = 0.0;
  std::vector<Jump> jumps;  // sorted by t

  int dim() const { return static_cast<int>(base_weights.size()); }

  Vector weights_at(int t) const;
  double bias_at(int t) const;
};

void validate(const RegressionDrift& drift, int d, int length);

Sequence make_regression_stream(const RegressionDrift& drift, double noise_std,
                                int length, int d, std::uint64_t seed,
                                const std::string& sequence_id = "stream",
                                DriftGroup group = DriftGroup::contiguous);

// Crowd-count style ground truth: nonnegative grid whose mass equals the
// number of annotated points.
struct DensityGrid {
  Matrix values;          // rows x cols, all entries >= 0
  double cell_area = 1.0;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

struct PointAnnotation {
  // (row, col) coordinates, each inside [0, rows) x [0, cols)
  std::vector<Eigen::Vector2d> points;
};

// One unit-mass gaussian kernel per point, truncated at 4*sigma and
// renormalized so each kernel's discrete mass over the grid is exactly 1.
// Points outside the grid are rejected with std::invalid_argument.
DensityGrid density_map_from_points(const PointAnnotation& annotation,
                                    double sigma, int rows, int cols);

double count_from_density(const DensityGrid& grid);

// ---------------------------------------------------------------------------
// Drift presets. The three benchmark regimes map onto generator defaults:
// contiguous = continuous drift only, short-gap adds small mean jumps at the
// fold boundaries, long-gap adds large ones. Magnitudes below are tuned
// defaults of this artifact, all overridable.
// ---------------------------------------------------------------------------

struct ClassificationPreset {
  int d = 16;
  int C = 9;
  int length = 22500;
  std::vector<int> boundaries = {7500, 15000};  // jump locations (fold edges)
  double mean_radius = 3.0;        // class means drawn at this radius
  double sigma = 1.0;              // sqrt of covariance_scale
  double drift_per_length = 1.0;   // total continuous mean displacement, in sigmas
  double jump_scale = 0.0;         // per-class jump magnitude at the first boundary
  double jump_growth = 1.0;        // magnitude multiplier per successive boundary
  double background_prior = 0.30;  // prior of class 0; rest uniform
};

// Class geometry (means, priors) depends only on (preset, master_seed) so a
// battery shares one label structure; velocities and jumps depend on the
// sequence stream so sequences drift apart individually.
DriftSchedule make_classification_schedule(const ClassificationPreset& preset,
                                           std::uint64_t master_seed,
                                           std::uint64_t sequence_stream);

struct RegressionPreset {
  int d = 8;
  int length = 2000;
  std::vector<int> boundaries = {400, 1200};
  double weight_scale = 1.0;
  double drift_per_length = 0.5;   // total weight drift relative to weight_scale
  double jump_scale = 0.0;         // relative weight jump at boundaries
  double noise_std = 0.1;
};

RegressionDrift make_regression_drift(const RegressionPreset& preset,
                                      std::uint64_t master_seed,
                                      std::uint64_t sequence_stream);

}  // namespace cssl
