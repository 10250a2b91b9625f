#pragma once

#include <json.hpp>

#include "cssl/metrics.hpp"

// nlohmann/json serialization of report types plus the flat summary table.
// Keys are stable (alphabetical) so equal inputs produce equal bytes.

namespace cssl {

nlohmann::json to_json(const FoldScores& scores);
nlohmann::json to_json(const Report& report);
nlohmann::json to_json(const BatteryReport& battery);
nlohmann::json to_json(const DeltaReport& delta);
nlohmann::json to_json(const std::vector<TracePoint>& trace);

FoldScores fold_scores_from_json(const nlohmann::json& j);

// Rows = (mode, aggregate), columns = fold x metric x {C, W} for
// classification batteries; rows = mode, columns = fold x sequence MAE for
// regression batteries.
std::string summary_table_csv(const nlohmann::json& reports);

}  // namespace cssl
