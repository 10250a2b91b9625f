#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace cssl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class TaskKind { classification, regression };

// Drift regime of a benchmark stream: purely continuous drift, continuous
// drift plus small distribution jumps at fold boundaries, or plus large ones.
enum class DriftGroup { contiguous, short_gap, long_gap };

enum class FoldTag { S, V, T };

std::string to_string(TaskKind kind);
std::string to_string(DriftGroup group);
std::string to_string(FoldTag fold);
TaskKind task_kind_from_string(const std::string& s);
DriftGroup drift_group_from_string(const std::string& s);

// One timestamped sample. For classification streams the target is a class
// index in [0, C) stored exactly as a double; for regression it is a scalar.
// Absent target means the sample is unlabelled (or label withheld).
struct Example {
  int t = 0;
  Vector x;
  std::optional<double> y;
  std::string sequence_id;

  int class_label() const;  // throws when unlabelled or not integral
};

struct Sequence {
  std::string sequence_id;
  TaskKind kind = TaskKind::classification;
  DriftGroup group = DriftGroup::contiguous;
  int d = 0;
  int C = 0;  // class count; 0 for regression
  std::vector<Example> examples;

  int length() const { return static_cast<int>(examples.size()); }
};

// Throws std::invalid_argument when a structural invariant is broken:
// emptyness, t not starting at 0 / not advancing by 1, mixed dimensions or
// sequence ids, or classification labels outside [0, C).
void validate(const Sequence& seq);

}  // namespace cssl
