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

// Ingestion and export of user series and imputation results.
//
// CSV: a header row, a time column first ("t" or "time") and one column
// per channel. Missing cells are empty or NaN and become mask zeros.
// JSONL: one channel per line, {"name": ..., "times": [...], "values": [...]}
// with null or a zero in an optional "mask" array marking missing values.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "fimkit/common.hpp"
#include "fimkit/trajectory.hpp"

namespace fim::io {

struct NamedSeries {
  std::string name;
  TimeSeries series;  // mask always populated
};

enum class SeriesFormat { Csv, JsonLines };
SeriesFormat series_format_from_path(const std::filesystem::path& path);

std::vector<NamedSeries> parse_series_csv(const std::string& text);
std::vector<NamedSeries> parse_series_jsonl(const std::string& text);
std::vector<NamedSeries> read_series(const std::filesystem::path& path);

// CSV export needs every channel on the same time grid.
std::string series_to_csv(const std::vector<NamedSeries>& channels);
std::string series_to_jsonl(const std::vector<NamedSeries>& channels);

// One imputed channel evaluated on an output grid.
struct ImputedChannel {
  std::string name;
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> derivatives;
  std::vector<double> derivative_log_vars;
  std::string error;  // non-empty when the channel failed; vectors empty
};

ImputedChannel evaluate_channel(const std::string& name, const Trajectory& traj, const std::vector<double>& times);

nlohmann::json imputation_json(const std::vector<ImputedChannel>& channels, const nlohmann::json& info);
std::string imputation_csv(const std::vector<ImputedChannel>& channels);

}  // namespace fim::io
