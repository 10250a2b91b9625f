#include "cssl/plots.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cssl {

using nlohmann::json;

namespace {

const char* kPalette[] = {"#4477aa", "#ee6677", "#228833", "#ccbb44",
                          "#66ccee", "#aa3377", "#bbbbbb"};

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

struct Svg {
  std::ostringstream body;
  int width, height;

  Svg(int w, int h) : width(w), height(h) {}

  void rect(double x, double y, double w, double h, const std::string& fill) {
    body << "<rect x='" << fmt(x) << "' y='" << fmt(y) << "' width='" << fmt(w)
         << "' height='" << fmt(h) << "' fill='" << fill << "'/>\n";
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke) {
    body << "<line x1='" << fmt(x1) << "' y1='" << fmt(y1) << "' x2='" << fmt(x2)
         << "' y2='" << fmt(y2) << "' stroke='" << stroke
         << "' stroke-width='1'/>\n";
  }
  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "start") {
    body << "<text x='" << fmt(x) << "' y='" << fmt(y) << "' font-size='" << size
         << "' font-family='sans-serif' text-anchor='" << anchor << "'>" << s
         << "</text>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& points,
                const std::string& stroke) {
    body << "<polyline fill='none' stroke='" << stroke
         << "' stroke-width='1.5' points='";
    for (const auto& [x, y] : points) body << fmt(x) << ',' << fmt(y) << ' ';
    body << "'/>\n";
    for (const auto& [x, y] : points)
      body << "<circle cx='" << fmt(x) << "' cy='" << fmt(y) << "' r='2' fill='"
           << stroke << "'/>\n";
  }

  std::string str() const {
    std::ostringstream out;
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width
        << "' height='" << height << "' viewBox='0 0 " << width << ' ' << height
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n"
        << body.str() << "</svg>\n";
    return out.str();
  }
};

void write_file(const std::string& path, const std::string& content,
                std::vector<std::string>& written) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write plot: " + path);
  out << content;
  written.push_back(path);
}

struct BarSpec {
  std::string label;
  std::vector<double> values;  // one per mode
};

std::string bar_chart(const std::string& title, const std::vector<std::string>& modes,
                      const std::vector<BarSpec>& bars, double y_max) {
  const int width = 960, height = 420;
  const double left = 60, right = 40, top = 48, bottom = 72;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  Svg svg(width, height);
  svg.text(left, 24, title, 15);

  for (int i = 0; i <= 5; ++i) {
    const double frac = i / 5.0;
    const double y = top + plot_h * (1.0 - frac);
    svg.line(left, y, left + plot_w, y, "#dddddd");
    svg.text(left - 8, y + 4, fmt(y_max * frac), 10, "end");
  }

  const std::size_t groups = bars.size();
  const std::size_t per_group = modes.size();
  const double group_w = plot_w / std::max<std::size_t>(groups, 1);
  const double bar_w = group_w * 0.8 / std::max<std::size_t>(per_group, 1);
  for (std::size_t g = 0; g < groups; ++g) {
    const double gx = left + group_w * g + group_w * 0.1;
    for (std::size_t m = 0; m < per_group; ++m) {
      const double v = bars[g].values[m];
      const double h = y_max > 0 ? plot_h * std::min(1.0, v / y_max) : 0.0;
      svg.rect(gx + bar_w * m, top + plot_h - h, bar_w * 0.92, h,
               kPalette[m % 7]);
    }
    svg.text(gx + group_w * 0.4, top + plot_h + 16, bars[g].label, 11, "middle");
  }

  double lx = left;
  for (std::size_t m = 0; m < per_group; ++m) {
    svg.rect(lx, height - 30, 12, 12, kPalette[m % 7]);
    svg.text(lx + 16, height - 20, modes[m], 11);
    lx += 24 + 9.0 * modes[m].size();
  }
  svg.line(left, top, left, top + plot_h, "#333333");
  svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333333");
  return svg.str();
}

std::string trace_chart(const std::string& title, const std::vector<std::string>& modes,
                        const std::vector<std::vector<std::pair<int, double>>>& traces,
                        bool unit_scale) {
  const int width = 960, height = 360;
  const double left = 60, right = 40, top = 48, bottom = 64;
  const double plot_w = width - left - right, plot_h = height - top - bottom;
  Svg svg(width, height);
  svg.text(left, 24, title, 15);

  int min_session = 0, max_session = 1;
  double y_max = unit_scale ? 1.0 : 0.0;
  for (const auto& trace : traces) {
    for (const auto& [session, value] : trace) {
      min_session = std::min(min_session, session);
      max_session = std::max(max_session, session);
      if (!unit_scale) y_max = std::max(y_max, value);
    }
  }
  if (y_max <= 0) y_max = 1.0;
  const double span = std::max(1, max_session - min_session);

  for (int i = 0; i <= 5; ++i) {
    const double frac = i / 5.0;
    const double y = top + plot_h * (1.0 - frac);
    svg.line(left, y, left + plot_w, y, "#dddddd");
    svg.text(left - 8, y + 4, fmt(y_max * frac), 10, "end");
  }

  for (std::size_t m = 0; m < traces.size(); ++m) {
    std::vector<std::pair<double, double>> points;
    for (const auto& [session, value] : traces[m]) {
      const double x = left + plot_w * (session - min_session) / span;
      const double y = top + plot_h * (1.0 - std::min(1.0, value / y_max));
      points.emplace_back(x, y);
    }
    if (!points.empty()) svg.polyline(points, kPalette[m % 7]);
  }

  double lx = left;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    svg.rect(lx, height - 24, 12, 12, kPalette[m % 7]);
    svg.text(lx + 16, height - 14, modes[m], 11);
    lx += 24 + 9.0 * modes[m].size();
  }
  svg.text(left + plot_w / 2, top + plot_h + 28, "session", 11, "middle");
  svg.line(left, top, left, top + plot_h, "#333333");
  svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333333");
  return svg.str();
}

}  // namespace

std::vector<std::string> render_plots(const json& reports, const std::string& out_dir) {
  std::vector<std::string> written;
  if (!reports.contains("modes") || reports.at("modes").empty()) return written;

  const std::string kind = reports.at("kind").get<std::string>();
  const bool classification = kind == "classification";
  std::vector<std::string> modes;
  for (const auto& m : reports.at("modes")) modes.push_back(m.get<std::string>());
  const json& results = reports.at("results");

  const std::filesystem::path plot_dir = std::filesystem::path(out_dir) / "plots";
  std::filesystem::create_directories(plot_dir);

  // Battery summary: metric x fold groups, one bar per mode.
  std::vector<BarSpec> bars;
  double y_max = classification ? 1.0 : 0.0;
  const auto metric_keys =
      classification
          ? std::vector<std::string>{"accuracy", "f1_C", "f1_W"}
          : std::vector<std::string>{"mae"};
  for (const std::string& metric : metric_keys) {
    for (const char* fold : {"V", "T"}) {
      BarSpec spec;
      spec.label = std::string(fold) + " " + metric;
      for (const std::string& mode : modes) {
        double value = 0.0;
        for (const json& f : results.at(mode).at("battery").at("mean_over_sequences")) {
          if (f.at("fold").get<std::string>() == fold && f.contains(metric))
            value = f.at(metric).get<double>();
        }
        spec.values.push_back(value);
        if (!classification) y_max = std::max(y_max, value);
      }
      bars.push_back(std::move(spec));
    }
  }
  if (y_max <= 0) y_max = 1.0;
  const std::string battery = reports.at("battery").get<std::string>();
  write_file((plot_dir / "summary.svg").string(),
             bar_chart("battery " + battery + ": " +
                           (classification ? "accuracy / F1 by mode" : "MAE by mode"),
                       modes, bars, classification ? 1.0 : y_max * 1.15),
             written);

  // Per-sequence session traces, one line per mode.
  std::vector<std::string> sequence_ids;
  for (const json& seq : results.at(modes.front()).at("sequences"))
    sequence_ids.push_back(seq.at("sequence_id").get<std::string>());

  for (const std::string& id : sequence_ids) {
    std::vector<std::vector<std::pair<int, double>>> traces;
    for (const std::string& mode : modes) {
      std::vector<std::pair<int, double>> trace;
      for (const json& seq : results.at(mode).at("sequences")) {
        if (seq.at("sequence_id").get<std::string>() != id) continue;
        for (const json& point : seq.at("trace"))
          trace.emplace_back(point.at("session").get<int>(),
                             point.at("value").get<double>());
      }
      traces.push_back(std::move(trace));
    }
    write_file((plot_dir / ("trace_" + id + ".svg")).string(),
               trace_chart("sequence " + id + ": session-wise " +
                               (classification ? "accuracy" : "MAE"),
                           modes, traces, classification),
               written);
  }
  return written;
}

}  // namespace cssl
