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

#include "fimkit/dataset_io.hpp"

#include <bit>
#include <cstring>
#include <sstream>

#include "fimkit/common.hpp"

namespace fim::io {

using synthgen::GenerationRecord;
using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "packed formats assume a little-endian host");

json record_to_json(const GenerationRecord& rec) {
  json j;
  j["seed"] = rec.seed;
  j["family"] = synthgen::family_name(rec.family);
  j["sigma"] = rec.sigma;
  j["fine_grid_len"] = rec.fine_grid_len();
  j["f"] = rec.f.values;
  j["x"] = rec.x.values;
  j["obs_idx"] = rec.grid.indices;
  j["y"] = rec.y;
  if (rec.grid.gap) {
    j["gap"] = json::array({rec.grid.gap->first, rec.grid.gap->second});
  } else {
    j["gap"] = nullptr;
  }
  return j;
}

GenerationRecord record_from_json(const json& j) {
  GenerationRecord rec;
  try {
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.family = synthgen::family_from_name(j.at("family").get<std::string>());
    rec.sigma = j.at("sigma").get<double>();
    rec.f.values = j.at("f").get<std::vector<double>>();
    rec.x.values = j.at("x").get<std::vector<double>>();
    rec.grid.indices = j.at("obs_idx").get<std::vector<int>>();
    rec.y = j.at("y").get<std::vector<double>>();
    const int len = j.at("fine_grid_len").get<int>();
    if (rec.f.size() != len || rec.x.size() != len) throw ValidationError("record arrays disagree with fine_grid_len");
    if (rec.y.size() != rec.grid.indices.size()) throw ValidationError("record y and obs_idx lengths differ");
    if (j.contains("gap") && !j.at("gap").is_null()) {
      const auto gap = j.at("gap").get<std::vector<int>>();
      if (gap.size() != 2) throw ValidationError("record gap must have two entries");
      rec.grid.gap = std::make_pair(gap[0], gap[1]);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed dataset record: ") + e.what());
  }
  rec.x0 = rec.x.values.empty() ? 0.0 : rec.x.values.front();
  rec.grid.scheme = synthgen::GridScheme::Irregular;
  rec.grid.validate(rec.fine_grid_len());
  return rec;
}

DatasetFormat dataset_format_from_name(const std::string& name) {
  if (name == "jsonl") return DatasetFormat::JsonLines;
  if (name == "bin" || name == "packed") return DatasetFormat::Packed;
  throw ValidationError("unknown dataset format '" + name + "'");
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("truncated packed dataset");
  return v;
}

void put_f32_array(std::ostream& out, const std::vector<double>& xs) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(xs.size()));
  for (double v : xs) put<float>(out, static_cast<float>(v));
}

std::vector<double> get_f32_array(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::vector<double> xs(n);
  for (auto& v : xs) v = get<float>(in);
  return xs;
}

void write_packed(std::ostream& out, const GenerationRecord& rec) {
  put<std::uint64_t>(out, rec.seed);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(rec.family));
  put<float>(out, static_cast<float>(rec.sigma));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.fine_grid_len()));
  put_f32_array(out, rec.f.values);
  put_f32_array(out, rec.x.values);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(rec.grid.indices.size()));
  for (int idx : rec.grid.indices) put<std::uint32_t>(out, static_cast<std::uint32_t>(idx));
  put_f32_array(out, rec.y);
  put<std::int32_t>(out, rec.grid.gap ? rec.grid.gap->first : -1);
  put<std::int32_t>(out, rec.grid.gap ? rec.grid.gap->second : -1);
}

GenerationRecord read_packed(std::istream& in) {
  GenerationRecord rec;
  rec.seed = get<std::uint64_t>(in);
  const auto fam = get<std::uint8_t>(in);
  if (fam > 2) throw ValidationError("packed dataset: bad family tag");
  rec.family = static_cast<synthgen::Family>(fam);
  rec.sigma = get<float>(in);
  const auto len = get<std::uint32_t>(in);
  rec.f.values = get_f32_array(in);
  rec.x.values = get_f32_array(in);
  const auto n_obs = get<std::uint32_t>(in);
  rec.grid.indices.resize(n_obs);
  for (auto& idx : rec.grid.indices) idx = static_cast<int>(get<std::uint32_t>(in));
  rec.y = get_f32_array(in);
  const auto lo = get<std::int32_t>(in);
  const auto hi = get<std::int32_t>(in);
  if (lo >= 0) rec.grid.gap = std::make_pair(lo, hi);
  if (static_cast<std::uint32_t>(rec.f.size()) != len || static_cast<std::uint32_t>(rec.x.size()) != len) {
    throw ValidationError("packed dataset: array length disagrees with fine grid");
  }
  rec.x0 = rec.x.values.empty() ? 0.0 : rec.x.values.front();
  rec.grid.scheme = synthgen::GridScheme::Irregular;
  rec.grid.validate(static_cast<int>(len));
  return rec;
}

}  // namespace

DatasetWriter::DatasetWriter(std::filesystem::path path, DatasetFormat format)
    : path_(std::move(path)), tmp_path_(path_.string() + ".tmp"), format_(format) {
  out_.open(tmp_path_, std::ios::binary | std::ios::trunc);
  if (!out_) throw RuntimeError("cannot open " + tmp_path_.string() + " for writing");
  if (format_ == DatasetFormat::Packed) {
    out_.write(kDatasetMagic, 4);
    put<std::uint8_t>(out_, kDatasetVersion);
  }
}

DatasetWriter::~DatasetWriter() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_path_, ec);
  }
}

void DatasetWriter::write(const GenerationRecord& rec) {
  if (format_ == DatasetFormat::JsonLines) {
    out_ << record_to_json(rec).dump() << '\n';
  } else {
    write_packed(out_, rec);
  }
  ++count_;
}

void DatasetWriter::commit() {
  out_.close();
  if (!out_) throw RuntimeError("error writing " + tmp_path_.string());
  std::filesystem::rename(tmp_path_, path_);
  committed_ = true;
}

std::vector<GenerationRecord> read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  std::vector<GenerationRecord> out;
  if (in.gcount() == 4 && std::memcmp(magic, kDatasetMagic, 4) == 0) {
    const auto version = get<std::uint8_t>(in);
    if (version != kDatasetVersion) throw ValidationError("unsupported packed dataset version");
    while (in.peek() != std::char_traits<char>::eof()) out.push_back(read_packed(in));
    return out;
  }
  in.clear();
  in.seekg(0);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(record_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw RuntimeError("error writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace fim::io
