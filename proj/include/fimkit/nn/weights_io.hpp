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
#include <string>

#include <json.hpp>

#include "fimkit/nn/params.hpp"

namespace fim::nn {

// File layout:
//   "FIMW" | u8 version | u32 header_len | header JSON | payload
// The header lists {"tensors": [{"name", "shape"}], "dtype": "f32"|"f64",
// "meta": {...}}. The payload is every tensor in header order, column-major,
// little-endian.
inline constexpr char kWeightsMagic[4] = {'F', 'I', 'M', 'W'};
inline constexpr std::uint8_t kWeightsVersion = 1;

enum class WeightDtype { F32, F64 };

std::string encode_weights(const ParameterStore& ps, const nlohmann::json& meta, WeightDtype dtype = WeightDtype::F32);
// Returns the tensors; `meta` (if given) receives the header's meta object.
ParameterStore decode_weights(const std::string& bytes, nlohmann::json* meta = nullptr);

// Atomic write (temp file + rename).
void save_weights(const std::filesystem::path& path, const ParameterStore& ps, const nlohmann::json& meta,
                  WeightDtype dtype = WeightDtype::F32);
ParameterStore load_weights(const std::filesystem::path& path, nlohmann::json* meta = nullptr);

}  // namespace fim::nn
