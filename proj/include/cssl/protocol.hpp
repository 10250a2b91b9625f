#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cssl/learner.hpp"
#include "cssl/types.hpp"

namespace cssl {

// Contiguous S/V/T split of one stream. V and T examples have their targets
// stripped; the true targets are kept in a sealed channel that only the
// evaluation side reads. Nothing in this module looks at it.
struct SealedLabels {
  std::vector<std::optional<double>> v;  // aligned with FoldSplit::V
  std::vector<std::optional<double>> t;  // aligned with FoldSplit::T
};

struct FoldSplit {
  std::string sequence_id;
  TaskKind kind = TaskKind::classification;
  int d = 0;
  int C = 0;
  std::vector<Example> S;  // labelled
  std::vector<Example> V;  // targets stripped
  std::vector<Example> T;  // targets stripped
  SealedLabels sealed;
};

// sizes = (|S|, |V|, |T|); must sum to the sequence length.
FoldSplit split_folds(const Sequence& seq, const std::array<int, 3>& sizes);

// Unlabelled stream element, tagged with the fold it came from.
struct TaggedExample {
  Example ex;
  FoldTag fold = FoldTag::V;
};

std::vector<TaggedExample> unlabelled_stream(const FoldSplit& split,
                                             bool include_v, bool include_t);

// One self-training session's worth of stream.
struct Subfold {
  int index = 0;
  std::vector<TaggedExample> items;
};

// Contiguous chunks of subfold_size; the final chunk may be shorter.
std::vector<Subfold> partition_subfolds(const std::vector<TaggedExample>& stream,
                                        int subfold_size);

struct PseudoRecord {
  Vector x;
  double label = 0.0;       // P_L: class index or predicted value
  double confidence = 0.0;  // P_s
  bool selected = false;
};

struct PseudoLabelBatch {
  std::vector<PseudoRecord> records;
  double threshold = 0.0;

  int selected_count() const;
};

// P_L = argmax class, P_s = its probability; selected iff P_s is strictly
// above the threshold. Unselected samples stay in the batch, flagged.
PseudoLabelBatch pseudo_label(const LearnerState& state, const Subfold& subfold,
                              double threshold);

// Regression counterpart: P_L = predicted value, P_s = 1, everything
// selected. trim_fraction > 0 enables the optional quantile filter and
// unselects up to that fraction of the subfold, dropping the samples whose
// pseudo-target deviates most from the subfold median (ties at the cutoff
// stay selected).
PseudoLabelBatch pseudo_target(const LearnerState& state, const Subfold& subfold,
                               double trim_fraction = 0.0);

enum class EvalMode { pre_update, post_update };

struct SelfTrainConfig {
  double threshold = 0.4;       // strict comparison: selected iff P_s > threshold
  int epochs_per_session = 1;
  EvalMode eval_mode = EvalMode::post_update;
  double learning_rate = 0.05;
  int batch_size = 128;
  std::uint64_t seed = 0;
  double regression_trim = 0.0;  // optional pseudo-target quantile filter, off
};

// The exact TrainConfig a session uses; exposed so a session can be
// reproduced by composing pseudo_label + fit by hand.
TrainConfig session_train_config(const SelfTrainConfig& cfg, int subfold_index);

struct PredictionRow {
  std::string sequence_id;
  int t = 0;
  FoldTag fold = FoldTag::V;
  int session = -1;  // index of the producing model; -1 = warm-up model
  double prediction = 0.0;
  double confidence = 0.0;
};

struct PredictionLog {
  std::vector<PredictionRow> rows;
};

void sort_log(PredictionLog& log);  // by (sequence_id, t)
void save_prediction_log_csv(const PredictionLog& log, const std::string& path);
PredictionLog load_prediction_log_csv(const std::string& path);

struct SessionRecord {
  int index = 0;
  int selected_count = 0;
  LearnerState state_after;  // snapshot for the forgetting diagnostic
};

struct SessionResult {
  LearnerState state;
  std::vector<PredictionRow> predictions;
  int selected_count = 0;
};

// One self-training round: pseudo-label with the incoming state, fit on the
// selected subset, record this subfold's predictions (from the updated model
// under post_update, from the incoming one under pre_update). Nothing
// selected leaves the state parameter-identical.
SessionResult self_train_session(const LearnerState& state, const Subfold& subfold,
                                 const SelfTrainConfig& cfg);

struct ContinualResult {
  LearnerState final_state;
  PredictionLog log;
  std::vector<SessionRecord> sessions;
};

// Chains sessions: the model updated in session n seeds session n+1.
ContinualResult run_continual(const LearnerState& initial,
                              const std::vector<Subfold>& subfolds,
                              const SelfTrainConfig& cfg);

enum class Mode { sup_ft, upd_v, upd_t, upd_v_plus_t };

std::string to_string(Mode mode);
Mode mode_from_string(const std::string& s);

struct ModeResult {
  PredictionLog log;
  LearnerState final_state;
  std::vector<SessionRecord> sessions;
};

// The four experiment arms, all starting from an already warmed-up model:
//   sup-ft    frozen predictions on V and T
//   upd-V     continual on V's subfolds, frozen post-V predictions on T
//   upd-T     symmetric
//   upd-V+T   V and T treated as one contiguous stream
ModeResult run_mode(const LearnerState& warm, const FoldSplit& split, Mode mode,
                    const SelfTrainConfig& cfg, int subfold_size);

}  // namespace cssl
