// Copyright 2026 The ValueScope Authors.
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

#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <string>

#include "valuescope/io.hpp"

using namespace valuescope;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    auto dir = fs::temp_directory_path() / "valuescope-io-test";
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("file round trip and digest stability") {
    auto path = temp_dir() / "blob.txt";
    io::write_file(path, "hello\nworld\n");
    CHECK(io::read_file(path) == "hello\nworld\n");
    auto d1 = io::file_digest(path);
    io::write_file(path, "hello\nworld\n");
    CHECK(io::file_digest(path) == d1);
    io::write_file(path, "hello\nworld!\n");
    CHECK(io::file_digest(path) != d1);
}

TEST_CASE("missing files raise input errors") {
    CHECK_THROWS_AS(io::read_file(temp_dir() / "does-not-exist"), input_error);
    CHECK_THROWS_AS(io::read_jsonl(temp_dir() / "does-not-exist"), input_error);
}

TEST_CASE("jsonl writer sorts keys for stable bytes") {
    nlohmann::json a = {{"zeta", 1}, {"alpha", 2}, {"mid", nlohmann::json{{"b", 1}, {"a", 2}}}};
    nlohmann::json b;
    b["mid"]["a"] = 2;
    b["mid"]["b"] = 1;
    b["alpha"] = 2;
    b["zeta"] = 1;
    CHECK(io::jsonl_line(a) == io::jsonl_line(b));
    CHECK(io::jsonl_line(a) == R"({"alpha":2,"mid":{"a":2,"b":1},"zeta":1})");
}

TEST_CASE("jsonl round trip") {
    auto path = temp_dir() / "rows.jsonl";
    std::vector<nlohmann::json> rows;
    rows.push_back({{"id", "c1"}, {"score", 3}});
    rows.push_back({{"id", "c2"}, {"score", -1}, {"body", "a,b\n\"q\""}});
    io::write_jsonl(path, rows);
    auto back = io::read_jsonl(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0]["id"] == "c1");
    CHECK(back[1]["body"] == "a,b\n\"q\"");
}

TEST_CASE("jsonl reader rejects malformed lines") {
    auto path = temp_dir() / "bad.jsonl";
    io::write_file(path, "{\"ok\":1}\nnot json\n");
    CHECK_THROWS_AS(io::read_jsonl(path), parse_error);
}

TEST_CASE("csv escaping and round trip") {
    io::CsvTable t;
    t.header = {"id", "text", "value"};
    t.rows.push_back({"a", "plain", "1.5"});
    t.rows.push_back({"b", "comma, quote \" and\nnewline", "-2"});
    auto path = temp_dir() / "table.csv";
    io::write_csv(path, t);
    auto back = io::read_csv(path);
    CHECK(back.header == t.header);
    REQUIRE(back.rows.size() == 2);
    CHECK(back.rows[1][1] == "comma, quote \" and\nnewline");
}

TEST_CASE("format_double round trips doubles") {
    for (double v : {0.0, -1.5, 0.3333333333333333, 1e-9, 12345.678901}) {
        CHECK(std::stod(io::format_double(v)) == Catch::Approx(v).epsilon(1e-11));
    }
}

TEST_CASE("manifest digest depends on artifacts, not insertion order") {
    io::Manifest m1;
    m1.run_id = "run-a";
    m1.add("scale.csv", 0x1111);
    m1.add("labels.jsonl", 0x2222);
    io::Manifest m2;
    m2.run_id = "run-a";
    m2.add("labels.jsonl", 0x2222);
    m2.add("scale.csv", 0x1111);
    CHECK(m1.digest() == m2.digest());

    io::Manifest m3 = m1;
    m3.add("extra.csv", 0x3333);
    CHECK(m3.digest() != m1.digest());
}

TEST_CASE("manifest save/load detects tampering") {
    auto path = temp_dir() / "manifest.json";
    io::Manifest m;
    m.run_id = "run-b";
    m.add("scale.csv", 0xabcdef);
    m.save(path);
    auto loaded = io::Manifest::load(path);
    CHECK(loaded.digest() == m.digest());

    // Corrupt one digest in place; load must refuse it.
    auto text = io::read_file(path);
    auto pos = text.find("abcdef");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 6, "abcde0");
    io::write_file(path, text);
    CHECK_THROWS_AS(io::Manifest::load(path), artifact_error);
}
