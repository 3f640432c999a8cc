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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "fimkit/series_io.hpp"

using namespace fim;
using namespace fim::io;

namespace {

class Line : public Trajectory {
 public:
  double value(double t) const override { return 2.0 * t + 1.0; }
  double derivative(double) const override { return 2.0; }
};

}  // namespace

TEST_CASE("CSV parsing with missing cells") {
  const auto ch = parse_series_csv("t,a,b\n0,1.5,\n0.5,NaN,2\n1.0,3,4\n");
  REQUIRE(ch.size() == 2);
  CHECK(ch[0].name == "a");
  CHECK(ch[0].series.times == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(ch[0].series.mask == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(ch[1].series.mask == std::vector<std::uint8_t>{0, 1, 1});
  CHECK(ch[1].series.values[2] == 4.0);
  CHECK(std::isnan(ch[1].series.values[0]));
}

TEST_CASE("CSV errors name the row") {
  auto message = [](const std::string& text) {
    try {
      parse_series_csv(text);
    } catch (const ValidationError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("t,a\n0,1\n0,2\n").find("row 3: duplicate timestamp") != std::string::npos);
  CHECK(message("t,a\n1,1\n0,2\n").find("row 3") != std::string::npos);
  CHECK(message("t,a\n0,1\n1,x\n").find("row 3") != std::string::npos);
  CHECK(message("t,a\n0,1,2\n").find("row 2") != std::string::npos);
  CHECK(!message("x,a\n0,1\n").empty());
  CHECK(!message("t,a\n").empty());
}

TEST_CASE("JSONL parsing") {
  const auto ch = parse_series_jsonl(
      "{\"name\":\"v\",\"times\":[0,1,2],\"values\":[1,null,3]}\n"
      "{\"times\":[0,1],\"values\":[5,6],\"mask\":[1,0]}\n");
  REQUIRE(ch.size() == 2);
  CHECK(ch[0].series.mask == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(ch[1].name == "x2");
  CHECK(ch[1].series.mask == std::vector<std::uint8_t>{1, 0});
  CHECK_THROWS_AS(parse_series_jsonl("{\"times\":[0,0],\"values\":[1,2]}\n"), ValidationError);
  CHECK_THROWS_AS(parse_series_jsonl("{\"times\":[0,1],\"values\":[1]}\n"), ValidationError);
  CHECK_THROWS_AS(parse_series_jsonl("not json\n"), ValidationError);
}

TEST_CASE("round trips through both formats") {
  std::vector<NamedSeries> ch(2);
  ch[0].name = "p";
  ch[1].name = "q";
  for (int i = 0; i < 5; ++i) {
    const double t = 0.1 * i + 1e-13;
    for (auto& c : ch) c.series.times.push_back(t);
    ch[0].series.values.push_back(std::exp(t));
    ch[1].series.values.push_back(i == 2 ? std::nan("") : -t / 3.0);
  }
  ch[0].series.mask = {1, 1, 1, 1, 1};
  ch[1].series.mask = {1, 1, 0, 1, 1};
  for (const auto& back : {parse_series_csv(series_to_csv(ch)), parse_series_jsonl(series_to_jsonl(ch))}) {
    REQUIRE(back.size() == 2);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(back[k].name == ch[k].name);
      CHECK(back[k].series.times == ch[k].series.times);
      CHECK(back[k].series.mask == ch[k].series.mask);
      for (std::size_t i = 0; i < 5; ++i) {
        if (ch[k].series.observed(i)) CHECK(back[k].series.values[i] == ch[k].series.values[i]);
      }
    }
  }
}

TEST_CASE("file dispatch by extension") {
  CHECK(series_format_from_path("a.csv") == SeriesFormat::Csv);
  CHECK(series_format_from_path("a.jsonl") == SeriesFormat::JsonLines);
  CHECK_THROWS_AS(series_format_from_path("a.txt"), ValidationError);
  const auto path = std::filesystem::temp_directory_path() / "fimkit_test_series.csv";
  std::ofstream(path) << "time,z\n0,1\n1,1\n";
  CHECK(read_series(path)[0].name == "z");
  std::ofstream(path) << "time,z\n0,1\n0,1\n";
  try {
    read_series(path);
    FAIL("expected an error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(path.string()) == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("imputation exports") {
  const Line line;
  const auto c = evaluate_channel("x1", line, {0.0, 0.5});
  CHECK(c.values == std::vector<double>{1.0, 2.0});
  CHECK(c.derivatives == std::vector<double>{2.0, 2.0});
  ImputedChannel failed;
  failed.name = "x2";
  failed.error = "too few observations";
  const auto j = imputation_json({c, failed}, {{"model", "test"}});
  CHECK(j["model"] == "test");
  CHECK(j["channels"][0]["values"][1] == 2.0);
  CHECK(j["channels"][1]["error"] == "too few observations");
  CHECK(imputation_csv({c, failed}) == "channel,t,value,derivative,derivative_log_var\nx1,0,1,2,0\nx1,0.5,2,2,0\n");
}
