#include "cssl/protocol.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cssl/rng.hpp"
#include "cssl/sequence_io.hpp"

namespace cssl {

FoldSplit split_folds(const Sequence& seq, const std::array<int, 3>& sizes) {
  for (int s : sizes)
    if (s < 0) throw std::invalid_argument("fold sizes must be >= 0");
  if (sizes[0] + sizes[1] + sizes[2] != seq.length())
    throw std::invalid_argument("fold sizes must sum to the sequence length (" +
                                std::to_string(seq.length()) + ")");

  FoldSplit split;
  split.sequence_id = seq.sequence_id;
  split.kind = seq.kind;
  split.d = seq.d;
  split.C = seq.C;

  auto copy_fold = [&seq](int begin, int count, bool strip,
                          std::vector<std::optional<double>>* sealed) {
    std::vector<Example> fold;
    fold.reserve(count);
    for (int i = begin; i < begin + count; ++i) {
      Example ex = seq.examples[static_cast<std::size_t>(i)];
      if (strip) {
        sealed->push_back(ex.y);
        ex.y.reset();
      }
      fold.push_back(std::move(ex));
    }
    return fold;
  };

  split.S = copy_fold(0, sizes[0], false, nullptr);
  split.V = copy_fold(sizes[0], sizes[1], true, &split.sealed.v);
  split.T = copy_fold(sizes[0] + sizes[1], sizes[2], true, &split.sealed.t);
  return split;
}

std::vector<TaggedExample> unlabelled_stream(const FoldSplit& split,
                                             bool include_v, bool include_t) {
  std::vector<TaggedExample> stream;
  stream.reserve((include_v ? split.V.size() : 0) + (include_t ? split.T.size() : 0));
  if (include_v)
    for (const Example& ex : split.V) stream.push_back({ex, FoldTag::V});
  if (include_t)
    for (const Example& ex : split.T) stream.push_back({ex, FoldTag::T});
  return stream;
}

std::vector<Subfold> partition_subfolds(const std::vector<TaggedExample>& stream,
                                        int subfold_size) {
  if (subfold_size < 1) throw std::invalid_argument("subfold size must be >= 1");
  std::vector<Subfold> subfolds;
  for (std::size_t begin = 0; begin < stream.size();
       begin += static_cast<std::size_t>(subfold_size)) {
    Subfold sf;
    sf.index = static_cast<int>(subfolds.size());
    const std::size_t end =
        std::min(stream.size(), begin + static_cast<std::size_t>(subfold_size));
    sf.items.assign(stream.begin() + static_cast<std::ptrdiff_t>(begin),
                    stream.begin() + static_cast<std::ptrdiff_t>(end));
    subfolds.push_back(std::move(sf));
  }
  return subfolds;
}

int PseudoLabelBatch::selected_count() const {
  int n = 0;
  for (const PseudoRecord& rec : records) n += rec.selected ? 1 : 0;
  return n;
}

PseudoLabelBatch pseudo_label(const LearnerState& state, const Subfold& subfold,
                              double threshold) {
  if (state.kind != TaskKind::classification)
    throw std::invalid_argument("pseudo_label requires a classification learner; "
                                "use pseudo_target for regression");
  PseudoLabelBatch batch;
  batch.threshold = threshold;
  batch.records.reserve(subfold.items.size());
  for (const TaggedExample& item : subfold.items) {
    const Vector p = predict_proba(state, item.ex.x);
    int best = 0;
    for (int c = 1; c < state.C; ++c)
      if (p[c] > p[best]) best = c;
    PseudoRecord rec;
    rec.x = item.ex.x;
    rec.label = static_cast<double>(best);
    rec.confidence = p[best];
    rec.selected = rec.confidence > threshold;  // strictly above
    batch.records.push_back(std::move(rec));
  }
  return batch;
}

PseudoLabelBatch pseudo_target(const LearnerState& state, const Subfold& subfold,
                               double trim_fraction) {
  if (state.kind != TaskKind::regression)
    throw std::invalid_argument("pseudo_target requires a regression learner; "
                                "use pseudo_label for classification");
  if (trim_fraction < 0.0 || trim_fraction >= 1.0)
    throw std::invalid_argument("trim_fraction must be in [0, 1)");

  PseudoLabelBatch batch;
  batch.threshold = 0.0;
  batch.records.reserve(subfold.items.size());
  for (const TaggedExample& item : subfold.items) {
    PseudoRecord rec;
    rec.x = item.ex.x;
    rec.label = predict(state, item.ex.x);
    rec.confidence = 1.0;
    rec.selected = true;
    batch.records.push_back(std::move(rec));
  }

  if (trim_fraction > 0.0 && !batch.records.empty()) {
    // Quantile filter on deviation from the median pseudo-target.
    std::vector<double> values;
    values.reserve(batch.records.size());
    for (const PseudoRecord& rec : batch.records) values.push_back(rec.label);
    std::sort(values.begin(), values.end());
    const double median = values[values.size() / 2];

    std::vector<double> deviations;
    deviations.reserve(batch.records.size());
    for (const PseudoRecord& rec : batch.records)
      deviations.push_back(std::abs(rec.label - median));
    std::vector<double> sorted = deviations;
    std::sort(sorted.begin(), sorted.end());
    // keep >= 1 since trim_fraction < 1; ties at the cutoff stay selected.
    const std::size_t keep = batch.records.size() -
        static_cast<std::size_t>(trim_fraction * static_cast<double>(batch.records.size()));
    const double cutoff = sorted[keep - 1];
    for (std::size_t i = 0; i < batch.records.size(); ++i)
      batch.records[i].selected = deviations[i] <= cutoff;
  }
  return batch;
}

TrainConfig session_train_config(const SelfTrainConfig& cfg, int subfold_index) {
  TrainConfig tc;
  tc.learning_rate = cfg.learning_rate;
  tc.epochs = cfg.epochs_per_session;
  tc.batch_size = cfg.batch_size;
  tc.shuffle_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(subfold_index));
  return tc;
}

namespace {

std::vector<PredictionRow> predictions_for(const LearnerState& state,
                                           std::span<const TaggedExample> items,
                                           int session) {
  std::vector<PredictionRow> rows;
  rows.reserve(items.size());
  for (const TaggedExample& item : items) {
    PredictionRow row;
    row.sequence_id = item.ex.sequence_id;
    row.t = item.ex.t;
    row.fold = item.fold;
    row.session = session;
    if (state.kind == TaskKind::classification) {
      const Vector p = predict_proba(state, item.ex.x);
      int best = 0;
      for (int c = 1; c < state.C; ++c)
        if (p[c] > p[best]) best = c;
      row.prediction = static_cast<double>(best);
      row.confidence = p[best];
    } else {
      row.prediction = predict(state, item.ex.x);
      row.confidence = 1.0;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

SessionResult self_train_session(const LearnerState& state, const Subfold& subfold,
                                 const SelfTrainConfig& cfg) {
  const PseudoLabelBatch pseudo =
      state.kind == TaskKind::classification
          ? pseudo_label(state, subfold, cfg.threshold)
          : pseudo_target(state, subfold, cfg.regression_trim);

  SessionResult result;
  result.selected_count = pseudo.selected_count();

  if (result.selected_count == 0) {
    result.state = state;
  } else {
    Batch train;
    train.X = Matrix(result.selected_count, state.d);
    train.y = Vector(result.selected_count);
    Eigen::Index row = 0;
    for (const PseudoRecord& rec : pseudo.records) {
      if (!rec.selected) continue;
      train.X.row(row) = rec.x.transpose();
      train.y[row] = rec.label;
      ++row;
    }
    result.state = fit(state, train, session_train_config(cfg, subfold.index));
  }

  const LearnerState& eval_state =
      cfg.eval_mode == EvalMode::post_update ? result.state : state;
  result.predictions = predictions_for(eval_state, subfold.items, subfold.index);
  return result;
}

ContinualResult run_continual(const LearnerState& initial,
                              const std::vector<Subfold>& subfolds,
                              const SelfTrainConfig& cfg) {
  ContinualResult result;
  result.final_state = initial;
  for (const Subfold& subfold : subfolds) {
    SessionResult session = self_train_session(result.final_state, subfold, cfg);
    result.final_state = std::move(session.state);
    result.log.rows.insert(result.log.rows.end(),
                           std::make_move_iterator(session.predictions.begin()),
                           std::make_move_iterator(session.predictions.end()));
    SessionRecord record;
    record.index = subfold.index;
    record.selected_count = session.selected_count;
    record.state_after = result.final_state;
    result.sessions.push_back(std::move(record));
  }
  return result;
}

std::string to_string(Mode mode) {
  switch (mode) {
    case Mode::sup_ft: return "sup-ft";
    case Mode::upd_v: return "upd-V";
    case Mode::upd_t: return "upd-T";
    case Mode::upd_v_plus_t: return "upd-V+T";
  }
  return "sup-ft";
}

Mode mode_from_string(const std::string& s) {
  if (s == "sup-ft") return Mode::sup_ft;
  if (s == "upd-V") return Mode::upd_v;
  if (s == "upd-T") return Mode::upd_t;
  if (s == "upd-V+T") return Mode::upd_v_plus_t;
  throw std::invalid_argument("unknown mode: " + s);
}

ModeResult run_mode(const LearnerState& warm, const FoldSplit& split, Mode mode,
                    const SelfTrainConfig& cfg, int subfold_size) {
  ModeResult result;

  auto frozen = [&result](const LearnerState& state,
                          const std::vector<TaggedExample>& items, int session) {
    std::vector<PredictionRow> rows = predictions_for(state, items, session);
    result.log.rows.insert(result.log.rows.end(),
                           std::make_move_iterator(rows.begin()),
                           std::make_move_iterator(rows.end()));
  };

  switch (mode) {
    case Mode::sup_ft: {
      frozen(warm, unlabelled_stream(split, true, true), -1);
      result.final_state = warm;
      break;
    }
    case Mode::upd_v:
    case Mode::upd_t: {
      const bool on_v = mode == Mode::upd_v;
      const std::vector<Subfold> subfolds =
          partition_subfolds(unlabelled_stream(split, on_v, !on_v), subfold_size);
      ContinualResult continual = run_continual(warm, subfolds, cfg);
      const int last_session =
          continual.sessions.empty() ? -1 : continual.sessions.back().index;
      result.log = std::move(continual.log);
      result.sessions = std::move(continual.sessions);
      result.final_state = std::move(continual.final_state);
      // The complementary fold is scored frozen by the post-update model.
      frozen(result.final_state, unlabelled_stream(split, !on_v, on_v), last_session);
      break;
    }
    case Mode::upd_v_plus_t: {
      const std::vector<Subfold> subfolds =
          partition_subfolds(unlabelled_stream(split, true, true), subfold_size);
      ContinualResult continual = run_continual(warm, subfolds, cfg);
      result.log = std::move(continual.log);
      result.sessions = std::move(continual.sessions);
      result.final_state = std::move(continual.final_state);
      break;
    }
  }
  sort_log(result.log);
  return result;
}

void sort_log(PredictionLog& log) {
  std::stable_sort(log.rows.begin(), log.rows.end(),
                   [](const PredictionRow& a, const PredictionRow& b) {
                     if (a.sequence_id != b.sequence_id)
                       return a.sequence_id < b.sequence_id;
                     return a.t < b.t;
                   });
}

void save_prediction_log_csv(const PredictionLog& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write prediction log: " + path);
  out << "sequence_id,t,fold,session,prediction,confidence\n";
  for (const PredictionRow& row : log.rows) {
    out << row.sequence_id << ',' << row.t << ',' << to_string(row.fold) << ','
        << row.session << ',' << format_double(row.prediction) << ','
        << format_double(row.confidence) << "\n";
  }
  if (!out) throw std::runtime_error("failed writing prediction log: " + path);
}

PredictionLog load_prediction_log_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open prediction log: " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("empty prediction log: " + path);

  PredictionLog log;
  std::size_t row_no = 1;
  while (std::getline(in, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 6)
      throw std::runtime_error("prediction log row " + std::to_string(row_no) +
                               ": expected 6 columns");
    PredictionRow row;
    row.sequence_id = fields[0];
    row.t = std::stoi(fields[1]);
    if (fields[2] == "V") row.fold = FoldTag::V;
    else if (fields[2] == "T") row.fold = FoldTag::T;
    else if (fields[2] == "S") row.fold = FoldTag::S;
    else throw std::runtime_error("prediction log row " + std::to_string(row_no) +
                                  ": bad fold tag " + fields[2]);
    row.session = std::stoi(fields[3]);
    row.prediction = std::stod(fields[4]);
    row.confidence = std::stod(fields[5]);
    log.rows.push_back(std::move(row));
  }
  return log;
}

}  // namespace cssl
