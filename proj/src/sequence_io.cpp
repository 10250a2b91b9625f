#include "cssl/sequence_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace cssl {

std::string format_double(double v) {
  if (v == std::floor(v) && std::abs(v) < 1e15 && std::isfinite(v)) {
    // Integral values print without an exponent so class labels stay clean.
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, std::size_t row) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("csv row " + std::to_string(row) +
                             ": cannot parse value '" + s + "'");
  }
}

}  // namespace

Sequence load_sequence_csv(const std::string& path, const SequenceCsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sequence file: " + path);

  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty sequence file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  const std::vector<std::string> header = split_csv_line(line);
  if (header.empty() || header[0] != "t")
    throw std::runtime_error("sequence header must start with 't': " + path);

  bool has_label = !header.empty() && header.back() == "y";
  const int d = static_cast<int>(header.size()) - 1 - (has_label ? 1 : 0);
  if (d <= 0) throw std::runtime_error("sequence header has no feature columns: " + path);
  for (int i = 0; i < d; ++i) {
    if (header[1 + i] != "x" + std::to_string(i))
      throw std::runtime_error("sequence header: expected column x" +
                               std::to_string(i) + " in " + path);
  }
  if (schema.expected_d >= 0 && schema.expected_d != d)
    throw std::invalid_argument("sequence dimension mismatch: schema expects d=" +
                                std::to_string(schema.expected_d) + ", file has d=" +
                                std::to_string(d));

  Sequence seq;
  seq.sequence_id = schema.sequence_id.empty()
                        ? std::filesystem::path(path).stem().string()
                        : schema.sequence_id;
  seq.kind = schema.kind;
  seq.group = schema.group;
  seq.d = d;
  seq.C = schema.kind == TaskKind::classification ? schema.C : 0;

  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("csv row " + std::to_string(row) + ": expected " +
                               std::to_string(header.size()) + " columns, got " +
                               std::to_string(fields.size()));
    Example ex;
    ex.t = static_cast<int>(seq.examples.size());
    ex.sequence_id = seq.sequence_id;
    ex.x = Vector(d);
    for (int i = 0; i < d; ++i) ex.x[i] = parse_double(fields[1 + i], row);
    if (has_label && !fields.back().empty())
      ex.y = parse_double(fields.back(), row);
    seq.examples.push_back(std::move(ex));
  }
  validate(seq);
  return seq;
}

void save_sequence_csv(const Sequence& seq, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write sequence file: " + path);

  const bool has_label = !seq.examples.empty() && seq.examples.front().y.has_value();
  out << "t";
  for (int i = 0; i < seq.d; ++i) out << ",x" << i;
  if (has_label) out << ",y";
  out << "\n";

  for (const Example& ex : seq.examples) {
    out << ex.t;
    for (int i = 0; i < seq.d; ++i) out << ',' << format_double(ex.x[i]);
    if (has_label) {
      out << ',';
      if (ex.y) out << format_double(*ex.y);
    }
    out << "\n";
  }
  if (!out) throw std::runtime_error("failed writing sequence file: " + path);
}

}  // namespace cssl
