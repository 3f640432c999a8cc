// Copyright 2026 The fimkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fimkit/series_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

namespace fim::io {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA" || cell == "null";
}

double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
    throw ValidationError(fmt::format("row {}: column '{}': cannot parse '{}' as a number", row, column, cell));
  }
  return v;
}

// `row` is 1-based and counts the header.
void check_time(const std::vector<double>& times, double t, std::size_t row) {
  if (times.empty()) return;
  if (t == times.back()) throw ValidationError(fmt::format("row {}: duplicate timestamp {}", row, t));
  if (t < times.back()) throw ValidationError(fmt::format("row {}: timestamp {} is not increasing", row, t));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

SeriesFormat series_format_from_path(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".csv") return SeriesFormat::Csv;
  if (ext == ".jsonl" || ext == ".json") return SeriesFormat::JsonLines;
  throw ValidationError("cannot infer series format from '" + path.string() + "' (use .csv or .jsonl)");
}

std::vector<NamedSeries> parse_series_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  std::vector<std::string> header;
  while (header.empty() && std::getline(in, line)) {
    ++row;
    if (!trim(line).empty()) header = split_csv(trim(line));
  }
  if (header.size() < 2) throw ValidationError("CSV needs a time column and at least one value column");
  if (header[0] != "t" && header[0] != "time") {
    throw ValidationError("CSV: first column must be 't' or 'time', got '" + header[0] + "'");
  }
  std::vector<NamedSeries> out(header.size() - 1);
  for (std::size_t c = 1; c < header.size(); ++c) out[c - 1].name = header[c];
  std::vector<double> times;
  while (std::getline(in, line)) {
    ++row;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw ValidationError(fmt::format("row {}: expected {} cells, got {}", row, header.size(), cells.size()));
    }
    if (is_missing(cells[0])) throw ValidationError(fmt::format("row {}: missing timestamp", row));
    const double t = parse_number(cells[0], row, header[0]);
    check_time(times, t, row);
    times.push_back(t);
    for (std::size_t c = 1; c < cells.size(); ++c) {
      auto& s = out[c - 1].series;
      s.times.push_back(t);
      if (is_missing(cells[c])) {
        s.values.push_back(kNaN);
        s.mask.push_back(0);
      } else {
        s.values.push_back(parse_number(cells[c], row, header[c]));
        s.mask.push_back(1);
      }
    }
  }
  if (times.empty()) throw ValidationError("CSV has no data rows");
  return out;
}

std::vector<NamedSeries> parse_series_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  std::vector<NamedSeries> out;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("line {}: invalid JSON: {}", row, e.what()));
    }
    if (!j.is_object() || !j.contains("times") || !j.contains("values")) {
      throw ValidationError(fmt::format("line {}: expected an object with 'times' and 'values'", row));
    }
    NamedSeries ns;
    ns.name = j.value("name", fmt::format("x{}", out.size() + 1));
    const auto& jt = j.at("times");
    const auto& jv = j.at("values");
    if (!jt.is_array() || !jv.is_array() || jt.size() != jv.size()) {
      throw ValidationError(fmt::format("line {}: 'times' and 'values' must be arrays of equal length", row));
    }
    const nlohmann::json* jm = j.contains("mask") ? &j.at("mask") : nullptr;
    if (jm && (!jm->is_array() || jm->size() != jt.size())) {
      throw ValidationError(fmt::format("line {}: 'mask' must match 'times' in length", row));
    }
    for (std::size_t i = 0; i < jt.size(); ++i) {
      if (!jt[i].is_number()) throw ValidationError(fmt::format("line {}: time {} is not a number", row, i));
      const double t = jt[i].get<double>();
      if (!ns.series.times.empty() && t == ns.series.times.back()) {
        throw ValidationError(fmt::format("line {}: duplicate timestamp {} at index {}", row, t, i));
      }
      if (!ns.series.times.empty() && t < ns.series.times.back()) {
        throw ValidationError(fmt::format("line {}: timestamp {} at index {} is not increasing", row, t, i));
      }
      ns.series.times.push_back(t);
      const bool masked_out = jm && (*jm)[i].get<int>() == 0;
      if (jv[i].is_null() || masked_out) {
        ns.series.values.push_back(jv[i].is_number() ? jv[i].get<double>() : kNaN);
        ns.series.mask.push_back(0);
      } else {
        if (!jv[i].is_number()) throw ValidationError(fmt::format("line {}: value {} is not a number", row, i));
        ns.series.values.push_back(jv[i].get<double>());
        ns.series.mask.push_back(1);
      }
    }
    out.push_back(std::move(ns));
  }
  if (out.empty()) throw ValidationError("JSONL input holds no series");
  return out;
}

std::vector<NamedSeries> read_series(const std::filesystem::path& path) {
  const auto text = read_text(path);
  try {
    return series_format_from_path(path) == SeriesFormat::Csv ? parse_series_csv(text) : parse_series_jsonl(text);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string series_to_csv(const std::vector<NamedSeries>& channels) {
  if (channels.empty()) throw ValidationError("no channels to export");
  const auto& times = channels.front().series.times;
  std::string out = "t";
  for (const auto& c : channels) {
    if (c.series.times != times) throw ValidationError("CSV export needs all channels on one time grid");
    out += "," + c.name;
  }
  out += "\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    out += fmt::format("{:.17g}", times[i]);
    for (const auto& c : channels) {
      out += c.series.observed(i) ? fmt::format(",{:.17g}", c.series.values[i]) : std::string(",");
    }
    out += "\n";
  }
  return out;
}

std::string series_to_jsonl(const std::vector<NamedSeries>& channels) {
  std::string out;
  for (const auto& c : channels) {
    nlohmann::json values = nlohmann::json::array();
    for (std::size_t i = 0; i < c.series.size(); ++i) {
      values.push_back(c.series.observed(i) ? nlohmann::json(c.series.values[i]) : nlohmann::json());
    }
    out += nlohmann::json{{"name", c.name}, {"times", c.series.times}, {"values", values}}.dump() + "\n";
  }
  return out;
}

ImputedChannel evaluate_channel(const std::string& name, const Trajectory& traj, const std::vector<double>& times) {
  ImputedChannel c;
  c.name = name;
  c.times = times;
  c.values = traj.values(times);
  c.derivatives = traj.derivatives(times);
  c.derivative_log_vars = traj.derivative_log_vars(times);
  return c;
}

nlohmann::json imputation_json(const std::vector<ImputedChannel>& channels, const nlohmann::json& info) {
  nlohmann::json out = info;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : channels) {
    nlohmann::json j{{"name", c.name}};
    if (!c.error.empty()) {
      j["error"] = c.error;
    } else {
      j["times"] = c.times;
      j["values"] = c.values;
      j["derivatives"] = c.derivatives;
      j["derivative_log_vars"] = c.derivative_log_vars;
    }
    arr.push_back(std::move(j));
  }
  out["channels"] = std::move(arr);
  return out;
}

std::string imputation_csv(const std::vector<ImputedChannel>& channels) {
  std::string out = "channel,t,value,derivative,derivative_log_var\n";
  for (const auto& c : channels) {
    if (!c.error.empty()) continue;
    for (std::size_t i = 0; i < c.times.size(); ++i) {
      out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g}\n", c.name, c.times[i], c.values[i], c.derivatives[i],
                         c.derivative_log_vars[i]);
    }
  }
  return out;
}

}  // namespace fim::io
