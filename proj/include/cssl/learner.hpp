#pragma once

#include <cstdint>
#include <span>
#include <string>

#include <Eigen/Core>

#include "cssl/types.hpp"

namespace cssl {

// Linear model parameters: softmax classifier (weights C x d, bias C) or
// linear regressor (weights 1 x d, bias 1). Value type; fit returns a new
// state and never mutates its input.
struct LearnerState {
  TaskKind kind = TaskKind::classification;
  int d = 0;
  int C = 0;      // 0 for regression
  Matrix weights;
  Vector bias;
};

LearnerState make_classifier(int d, int C);  // zero-initialized
LearnerState make_regressor(int d);

bool same_parameters(const LearnerState& a, const LearnerState& b);  // bitwise

struct TrainConfig {
  double learning_rate = 0.01;  // >= 0; 0 is the no-op limit used in diagnostics
  int epochs = 1;
  int batch_size = 32;
  std::uint64_t shuffle_seed = 0;
};

// Labelled mini-batch in matrix form; y holds class indices (exact doubles)
// or regression targets.
struct Batch {
  Matrix X;  // N x d
  Vector y;  // N

  Eigen::Index size() const { return X.rows(); }
};

// Throws std::invalid_argument if any example is unlabelled or dimensions mix.
Batch make_batch(std::span<const Example> examples);

Vector logits(const LearnerState& state, Eigen::Ref<const Vector> x);

// Softmax probabilities; classification only. Entries are positive and sum
// to 1 within 1e-9.
Vector predict_proba(const LearnerState& state, Eigen::Ref<const Vector> x);

// Class index (ties break to the lowest index) or regression value.
double predict(const LearnerState& state, Eigen::Ref<const Vector> x);
int predict_class(const LearnerState& state, Eigen::Ref<const Vector> x);

// Mean training loss over the batch: cross-entropy or squared error.
double loss(const LearnerState& state, const Batch& batch);
double example_loss(const LearnerState& state, Eigen::Ref<const Vector> x, double y);

struct Gradient {
  Matrix weights;
  Vector bias;
};

// Analytic gradient of `loss` at the given state.
Gradient gradient(const LearnerState& state, const Batch& batch);

// Seeded-shuffled mini-batch gradient descent, `epochs` passes. An empty
// batch is a documented no-op returning a clone. Non-finite inputs or
// parameters raise std::runtime_error.
LearnerState fit(const LearnerState& state, const Batch& batch, const TrainConfig& cfg);

// Versioned textual checkpoint, round-trip exact (hexfloat payload).
void save_learner(const LearnerState& state, const std::string& path);
LearnerState load_learner(const std::string& path);

}  // namespace cssl
