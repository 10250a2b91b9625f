#pragma once

#include <string>

#include "cssl/types.hpp"

namespace cssl {

// Column mapping for ingested feature streams. The file layout is fixed
// (header `t,x0..x{d-1}[,y]`), what cannot be inferred from it comes from
// the schema: task kind, class count, and optionally an expected dimension.
struct SequenceCsvSchema {
  TaskKind kind = TaskKind::classification;
  int C = 0;                     // class count, classification only
  int expected_d = -1;           // -1 = infer from header
  std::string sequence_id;       // empty = file stem
  DriftGroup group = DriftGroup::contiguous;
};

// Rows are assigned t = 0..N-1 in file order; the label column is optional.
// Malformed rows raise std::runtime_error naming the row number; a row whose
// width disagrees with the header raises the same; an expected_d mismatch
// raises std::invalid_argument.
Sequence load_sequence_csv(const std::string& path, const SequenceCsvSchema& schema);

// Same column layout as the loader; doubles are written round-trip exact.
void save_sequence_csv(const Sequence& seq, const std::string& path);

// Round-trip exact formatting for doubles in all CSV surfaces.
std::string format_double(double v);

}  // namespace cssl
