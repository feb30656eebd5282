#include "fenlo/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fenlo {

std::string format_double(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

std::string csv_header_comment(const ConfigEcho& config) {
  std::string out;
  for (const auto& [key, value] : config) {
    out += "# " + key + " = " + value + "\n";
  }
  return out;
}

namespace {

void append_quantiles(std::string& line, const std::array<double, 9>& q) {
  for (double v : q) {
    line += ',';
    line += format_double(v);
  }
}

}  // namespace

std::string csv_mi_trace(const ConfigEcho& config, const std::vector<MetricRecord>& rows) {
  std::string out = csv_header_comment(config);
  out += kTraceHeader;
  out += '\n';
  for (const MetricRecord& r : rows) {
    std::string line = std::to_string(r.step) + ',' + r.kind + ',' + std::to_string(r.k) +
                       ',' + format_double(r.estimate);
    append_quantiles(line, r.quantiles);
    line += ',' + format_double(r.truth) + ',' + format_double(r.wall_ms);
    out += line;
    out += '\n';
  }
  return out;
}

std::string csv_mi_sweep(const ConfigEcho& config, const std::vector<MetricRecord>& rows) {
  std::string out = csv_header_comment(config);
  out += kSweepHeader;
  out += '\n';
  for (const MetricRecord& r : rows) {
    std::string line = format_double(r.rho) + ',' + std::to_string(r.d) + ',' + r.kind + ',' +
                       std::to_string(r.trial) + ',' + std::to_string(r.k) + ',' +
                       format_double(r.estimate);
    append_quantiles(line, r.quantiles);
    line += ',' + format_double(r.truth) + ',' + format_double(r.wall_ms) + ',' +
            (r.failed ? "1" : "0");
    out += line;
    out += '\n';
  }
  return out;
}

std::string csv_meta_train(const ConfigEcho& config, const std::vector<MetaTrainRow>& rows) {
  std::string out = csv_header_comment(config);
  out += kMetaTrainHeader;
  out += '\n';
  for (const MetaTrainRow& r : rows) {
    out += std::to_string(r.step) + ',' + format_double(r.loss_total) + ',' +
           format_double(r.loss_r) + ',' + format_double(r.loss_flo_estimate) + ',' +
           format_double(r.wall_ms) + '\n';
  }
  return out;
}

std::string csv_meta_eval(const ConfigEcho& config, const std::vector<TaskEval>& rows) {
  std::string out = csv_header_comment(config);
  out += kMetaEvalHeader;
  out += '\n';
  for (const TaskEval& r : rows) {
    out += std::to_string(r.task_id) + ',' + format_double(r.kappa) + ',' +
           format_double(r.gamma) + ',' + format_double(r.query_mse) + '\n';
  }
  return out;
}

std::string csv_adaptation(const ConfigEcho& config, const std::vector<AdaptRow>& rows) {
  std::string out = csv_header_comment(config);
  out += kAdaptHeader;
  out += '\n';
  for (const AdaptRow& r : rows) {
    out += format_double(r.x) + ',' + format_double(r.y_true) + ',' + format_double(r.y_pred) +
           ',' + std::to_string(r.is_support) + '\n';
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open output file: " + path);
  os << content;
  if (!os) throw std::runtime_error("write failed: " + path);
}

CsvData read_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open input file: " + path);
  CsvData data;
  std::string line;
  bool have_header = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    if (!have_header) {
      data.columns = std::move(cells);
      have_header = true;
    } else {
      if (cells.size() != data.columns.size()) {
        throw std::runtime_error("csv: row with wrong column count in " + path);
      }
      data.rows.push_back(std::move(cells));
    }
  }
  if (!have_header) throw std::runtime_error("csv: no header row in " + path);
  return data;
}

int column_index(const CsvData& data, const std::string& name) {
  for (size_t i = 0; i < data.columns.size(); ++i) {
    if (data.columns[i] == name) return static_cast<int>(i);
  }
  throw std::runtime_error("csv: missing column '" + name + "'");
}

double cell_double(const CsvData& data, size_t row, int col) {
  const std::string& s = data.rows.at(row).at(col);
  if (s == "nan") return std::nan("");
  size_t pos = 0;
  double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::runtime_error("csv: malformed numeric cell '" + s + "'");
  return v;
}

}  // namespace fenlo
