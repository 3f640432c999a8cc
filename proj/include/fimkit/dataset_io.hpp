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

#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "fimkit/synthgen.hpp"

namespace fim::io {

// One JSON object per line:
//   {seed, family, sigma, fine_grid_len, f, x, obs_idx, y, gap: [lo, hi] | null}
nlohmann::json record_to_json(const synthgen::GenerationRecord& rec);
synthgen::GenerationRecord record_from_json(const nlohmann::json& j);

enum class DatasetFormat { JsonLines, Packed };
DatasetFormat dataset_format_from_name(const std::string& name);

// Packed layout: "FIMD", version byte, then records of
//   u64 seed | u8 family | f32 sigma | u32 L | f32[] f | f32[] x |
//   u32[] obs_idx | f32[] y | i32 gap_lo | i32 gap_hi
// where every array is preceded by its u32 length. All little-endian; a gap
// of (-1, -1) means none.
inline constexpr char kDatasetMagic[4] = {'F', 'I', 'M', 'D'};
inline constexpr std::uint8_t kDatasetVersion = 1;

// Writes into `<path>.tmp` and renames on commit(); an abandoned writer leaves
// no file at `path`.
class DatasetWriter {
 public:
  DatasetWriter(std::filesystem::path path, DatasetFormat format);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const synthgen::GenerationRecord& rec);
  void commit();
  std::size_t count() const { return count_; }

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_path_;
  DatasetFormat format_;
  std::ofstream out_;
  std::size_t count_ = 0;
  bool committed_ = false;
};

// Reads either format; the packed one is detected by its magic.
std::vector<synthgen::GenerationRecord> read_dataset(const std::filesystem::path& path);

// Byte-exact write-then-rename for small text outputs.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace fim::io
