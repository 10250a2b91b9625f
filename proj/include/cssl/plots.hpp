#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace cssl {

// Renders the battery summary chart and one session trace per sequence as
// self-contained SVG files under <out_dir>/plots. Returns the written paths;
// an empty reports document yields none.
std::vector<std::string> render_plots(const nlohmann::json& reports,
                                      const std::string& out_dir);

}  // namespace cssl
