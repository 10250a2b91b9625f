#include "cssl/types.hpp"

#include <cmath>
#include <stdexcept>

namespace cssl {

std::string to_string(TaskKind kind) {
  return kind == TaskKind::classification ? "classification" : "regression";
}

std::string to_string(DriftGroup group) {
  switch (group) {
    case DriftGroup::contiguous: return "contiguous";
    case DriftGroup::short_gap: return "short-gap";
    case DriftGroup::long_gap: return "long-gap";
  }
  return "contiguous";
}

std::string to_string(FoldTag fold) {
  switch (fold) {
    case FoldTag::S: return "S";
    case FoldTag::V: return "V";
    case FoldTag::T: return "T";
  }
  return "S";
}

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "classification") return TaskKind::classification;
  if (s == "regression") return TaskKind::regression;
  throw std::invalid_argument("unknown task kind: " + s);
}

DriftGroup drift_group_from_string(const std::string& s) {
  if (s == "contiguous") return DriftGroup::contiguous;
  if (s == "short-gap") return DriftGroup::short_gap;
  if (s == "long-gap") return DriftGroup::long_gap;
  throw std::invalid_argument("unknown drift group: " + s);
}

int Example::class_label() const {
  if (!y) throw std::invalid_argument("example has no label");
  const double v = *y;
  if (std::floor(v) != v) throw std::invalid_argument("label is not a class index");
  return static_cast<int>(v);
}

void validate(const Sequence& seq) {
  if (seq.examples.empty())
    throw std::invalid_argument("sequence " + seq.sequence_id + " is empty");
  if (seq.d <= 0) throw std::invalid_argument("sequence dimension must be positive");
  for (std::size_t i = 0; i < seq.examples.size(); ++i) {
    const Example& ex = seq.examples[i];
    if (ex.t != static_cast<int>(i))
      throw std::invalid_argument("sequence " + seq.sequence_id +
                                  ": time index must increase by 1 from 0");
    if (ex.x.size() != seq.d)
      throw std::invalid_argument("sequence " + seq.sequence_id +
                                  ": mixed feature dimensions");
    if (ex.sequence_id != seq.sequence_id)
      throw std::invalid_argument("sequence " + seq.sequence_id +
                                  ": mixed sequence ids");
    if (seq.kind == TaskKind::classification && ex.y) {
      const int label = ex.class_label();
      if (label < 0 || label >= seq.C)
        throw std::invalid_argument("sequence " + seq.sequence_id +
                                    ": label outside [0, C)");
    }
  }
}

}  // namespace cssl
