#include "cssl/report_io.hpp"

#include <sstream>
#include <vector>

#include "cssl/sequence_io.hpp"

namespace cssl {

using nlohmann::json;

namespace {

void put_optional(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

std::optional<double> get_optional(const json& j, const char* key) {
  if (!j.contains(key)) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

json to_json(const FoldScores& scores) {
  json j;
  j["fold"] = to_string(scores.fold);
  j["n"] = scores.n;
  j["contemporary_loss"] = scores.contemporary_loss;
  j["contemporary_loss_sum"] = scores.contemporary_loss_sum;
  put_optional(j, "accuracy", scores.accuracy);
  put_optional(j, "precision_C", scores.precision_macro);
  put_optional(j, "precision_W", scores.precision_weighted);
  put_optional(j, "recall_C", scores.recall_macro);
  put_optional(j, "recall_W", scores.recall_weighted);
  put_optional(j, "f1_C", scores.f1_macro);
  put_optional(j, "f1_W", scores.f1_weighted);
  put_optional(j, "mae", scores.mae);
  if (scores.confusion) {
    json rows = json::array();
    for (int r = 0; r < scores.confusion->classes(); ++r) {
      json row = json::array();
      for (int c = 0; c < scores.confusion->classes(); ++c)
        row.push_back(scores.confusion->counts(r, c));
      rows.push_back(std::move(row));
    }
    j["confusion"] = std::move(rows);
  }
  return j;
}

FoldScores fold_scores_from_json(const json& j) {
  FoldScores scores;
  const std::string fold = j.at("fold").get<std::string>();
  scores.fold = fold == "V" ? FoldTag::V : fold == "T" ? FoldTag::T : FoldTag::S;
  scores.n = j.at("n").get<int>();
  scores.contemporary_loss = j.at("contemporary_loss").get<double>();
  scores.contemporary_loss_sum = j.at("contemporary_loss_sum").get<double>();
  scores.accuracy = get_optional(j, "accuracy");
  scores.precision_macro = get_optional(j, "precision_C");
  scores.precision_weighted = get_optional(j, "precision_W");
  scores.recall_macro = get_optional(j, "recall_C");
  scores.recall_weighted = get_optional(j, "recall_W");
  scores.f1_macro = get_optional(j, "f1_C");
  scores.f1_weighted = get_optional(j, "f1_W");
  scores.mae = get_optional(j, "mae");
  if (j.contains("confusion")) {
    const json& rows = j.at("confusion");
    const int C = static_cast<int>(rows.size());
    ConfusionCounts cm;
    cm.counts = Eigen::MatrixXi::Zero(C, C);
    for (int r = 0; r < C; ++r)
      for (int c = 0; c < C; ++c) cm.counts(r, c) = rows.at(r).at(c).get<int>();
    scores.confusion = std::move(cm);
  }
  return scores;
}

json to_json(const Report& report) {
  json j;
  j["sequence_id"] = report.sequence_id;
  j["mode"] = report.mode;
  json folds = json::array();
  for (const FoldScores& f : report.folds) folds.push_back(to_json(f));
  j["folds"] = std::move(folds);
  return j;
}

json to_json(const BatteryReport& battery) {
  json j;
  j["mode"] = battery.mode;
  j["sequences"] = battery.sequences;
  json pooled = json::array();
  for (const FoldScores& f : battery.pooled) pooled.push_back(to_json(f));
  j["pooled"] = std::move(pooled);
  json mean = json::array();
  for (const FoldScores& f : battery.mean_over_sequences) mean.push_back(to_json(f));
  j["mean_over_sequences"] = std::move(mean);
  return j;
}

json to_json(const DeltaReport& delta) {
  json j;
  j["metric"] = delta.metric;
  j["fold"] = to_string(delta.fold);
  j["updated"] = delta.updated;
  j["baseline"] = delta.baseline;
  j["delta"] = delta.delta;
  return j;
}

json to_json(const std::vector<TracePoint>& trace) {
  json j = json::array();
  for (const TracePoint& point : trace) {
    json p;
    p["session"] = point.session;
    p["n"] = point.n;
    p["value"] = point.value;
    j.push_back(std::move(p));
  }
  return j;
}

namespace {

std::string cell(const json& fold_scores, const std::string& key) {
  if (!fold_scores.contains(key)) return "";
  return format_double(fold_scores.at(key).get<double>());
}

const json* find_fold(const json& folds, const std::string& tag) {
  for (const json& f : folds)
    if (f.at("fold").get<std::string>() == tag) return &f;
  return nullptr;
}

}  // namespace

std::string summary_table_csv(const json& reports) {
  const std::string kind = reports.at("kind").get<std::string>();
  const json& results = reports.at("results");
  std::ostringstream out;

  if (kind == "classification") {
    out << "mode,aggregate";
    for (const char* fold : {"V", "T"})
      for (const char* metric : {"precision", "recall", "f1"})
        for (const char* avg : {"C", "W"})
          out << ',' << fold << '_' << metric << '_' << avg;
    out << ",V_accuracy,T_accuracy\n";

    for (const auto& mode_json : reports.at("modes")) {
      const std::string mode = mode_json.get<std::string>();
      const json& battery = results.at(mode).at("battery");
      for (const char* aggregate : {"mean_over_sequences", "pooled"}) {
        const json& folds = battery.at(aggregate);
        out << mode << ','
            << (std::string(aggregate) == "pooled" ? "pooled" : "mean");
        for (const char* fold : {"V", "T"}) {
          const json* f = find_fold(folds, fold);
          for (const char* metric : {"precision", "recall", "f1"})
            for (const char* avg : {"C", "W"}) {
              out << ',';
              if (f) out << cell(*f, std::string(metric) + "_" + avg);
            }
        }
        for (const char* fold : {"V", "T"}) {
          const json* f = find_fold(folds, fold);
          out << ',';
          if (f) out << cell(*f, "accuracy");
        }
        out << "\n";
      }
    }
    return out.str();
  }

  // Regression battery: Table-2 layout, MAE per fold x sequence.
  std::vector<std::string> sequence_ids;
  const std::string first_mode = reports.at("modes").at(0).get<std::string>();
  for (const json& seq : results.at(first_mode).at("sequences"))
    sequence_ids.push_back(seq.at("sequence_id").get<std::string>());

  out << "mode";
  for (const char* fold : {"V", "T"})
    for (const std::string& id : sequence_ids) out << ',' << fold << '_' << id;
  out << ",V_mean,T_mean\n";

  for (const auto& mode_json : reports.at("modes")) {
    const std::string mode = mode_json.get<std::string>();
    const json& mode_result = results.at(mode);
    out << mode;
    for (const char* fold : {"V", "T"}) {
      for (const std::string& id : sequence_ids) {
        out << ',';
        for (const json& seq : mode_result.at("sequences")) {
          if (seq.at("sequence_id").get<std::string>() != id) continue;
          if (const json* f = find_fold(seq.at("folds"), fold)) out << cell(*f, "mae");
        }
      }
    }
    const json& mean = mode_result.at("battery").at("mean_over_sequences");
    for (const char* fold : {"V", "T"}) {
      out << ',';
      if (const json* f = find_fold(mean, fold)) out << cell(*f, "mae");
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace cssl
