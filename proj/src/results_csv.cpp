#include "evdl/results_csv.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "evdl/errors.hpp"

namespace evdl {

namespace {

std::string number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

std::string format_results_csv(std::span<const SweepRow> rows) {
  std::string out;
  for (std::size_t i = 0; i < kSweepCsvColumns.size(); ++i) {
    if (i > 0) out += ',';
    out += kSweepCsvColumns[i];
  }
  out += '\n';
  for (const auto& row : rows) {
    const double nan = std::nan("");
    const MetricsReport* m = row.metrics ? &*row.metrics : nullptr;
    const double values[] = {
        row.value,
        row.coverage,
        m ? m->accuracy : nan,
        m ? m->f1 : nan,
        m ? m->precision : nan,
        m ? m->recall : nan,
        m ? m->private_class.f1 : nan,
        m ? m->private_class.precision : nan,
        m ? m->private_class.recall : nan,
        m ? m->public_class.f1 : nan,
        m ? m->public_class.precision : nan,
        m ? m->public_class.recall : nan,
    };
    for (std::size_t i = 0; i < std::size(values); ++i) {
      if (i > 0) out += ',';
      out += number(values[i]);
    }
    out += '\n';
  }
  return out;
}

void export_results(std::span<const SweepRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write results '" + path.string() + "'");
  out << format_results_csv(rows);
  out.flush();
  if (!out) throw IoError("failed writing results '" + path.string() + "'");
}

std::vector<SweepRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError("results file is empty");
  const auto header = split_csv_line(line);
  if (header.size() != kSweepCsvColumns.size()) throw FormatError("results header has wrong width");
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] != kSweepCsvColumns[i]) throw FormatError("unexpected results column '" + header[i] + "'");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != kSweepCsvColumns.size()) throw FormatError("results row has wrong width");
    std::vector<double> v;
    try {
      for (const auto& c : cells) v.push_back(std::stod(c));
    } catch (const std::exception&) {
      throw FormatError("results row has a non-numeric cell");
    }
    SweepRow row{v[0], v[1], std::nullopt};
    if (!std::isnan(v[2])) {
      MetricsReport m;
      m.coverage = v[1];
      m.accuracy = v[2];
      m.f1 = v[3];
      m.precision = v[4];
      m.recall = v[5];
      m.private_class.f1 = v[6];
      m.private_class.precision = v[7];
      m.private_class.recall = v[8];
      m.public_class.f1 = v[9];
      m.public_class.precision = v[10];
      m.public_class.recall = v[11];
      row.metrics = m;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace evdl
