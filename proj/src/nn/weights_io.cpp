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

#include "fimkit/nn/weights_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "fimkit/common.hpp"
#include "fimkit/dataset_io.hpp"

namespace fim::nn {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little, "weight files assume a little-endian host");

namespace {

template <typename T>
void append(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T read_at(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw ValidationError("weight file is truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_weights(const ParameterStore& ps, const json& meta, WeightDtype dtype) {
  json header;
  header["dtype"] = dtype == WeightDtype::F32 ? "f32" : "f64";
  header["meta"] = meta;
  header["tensors"] = json::array();
  for (const auto& name : ps.names()) {
    const auto& m = ps.at(name);
    header["tensors"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}});
  }
  const std::string h = header.dump();

  std::string out(kWeightsMagic, 4);
  append<std::uint8_t>(out, kWeightsVersion);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  for (const auto& name : ps.names()) {
    const auto& m = ps.at(name);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      if (dtype == WeightDtype::F32) {
        append<float>(out, static_cast<float>(m.data()[i]));
      } else {
        append<double>(out, m.data()[i]);
      }
    }
  }
  return out;
}

ParameterStore decode_weights(const std::string& bytes, json* meta) {
  if (bytes.size() < 9 || std::memcmp(bytes.data(), kWeightsMagic, 4) != 0) {
    throw ValidationError("not a weight file (bad magic)");
  }
  std::size_t pos = 4;
  const auto version = read_at<std::uint8_t>(bytes, pos);
  if (version != kWeightsVersion) throw ValidationError("unsupported weight file version " + std::to_string(version));
  const auto hlen = read_at<std::uint32_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw ValidationError("weight file header is truncated");
  json header;
  try {
    header = json::parse(bytes.substr(pos, hlen));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("weight file header: ") + e.what());
  }
  pos += hlen;

  ParameterStore ps;
  try {
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != "f32" && dtype != "f64") throw ValidationError("weight file: unknown dtype " + dtype);
    const bool f32 = dtype == "f32";
    for (const auto& t : header.at("tensors")) {
      const auto shape = t.at("shape").get<std::vector<Eigen::Index>>();
      if (shape.size() != 2 || shape[0] < 0 || shape[1] < 0) throw ValidationError("weight file: bad tensor shape");
      Matrix m(shape[0], shape[1]);
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = f32 ? static_cast<double>(read_at<float>(bytes, pos)) : read_at<double>(bytes, pos);
      }
      ps.add(t.at("name").get<std::string>(), std::move(m));
    }
    if (meta) *meta = header.value("meta", json::object());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("weight file header: ") + e.what());
  }
  if (pos != bytes.size()) throw ValidationError("weight file has trailing bytes");
  return ps;
}

void save_weights(const std::filesystem::path& path, const ParameterStore& ps, const json& meta, WeightDtype dtype) {
  io::write_file_atomic(path, encode_weights(ps, meta, dtype));
}

ParameterStore load_weights(const std::filesystem::path& path, json* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open weight file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_weights(buf.str(), meta);
}

}  // namespace fim::nn
