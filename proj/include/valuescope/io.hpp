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
//
// Artifact I/O: JSONL and CSV readers/writers, content digests, and the
// run manifest. All writers are deterministic byte-for-byte for a fixed
// input so repeated runs hash identically.

#ifndef VALUESCOPE_IO_HPP
#define VALUESCOPE_IO_HPP

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "valuescope/util.hpp"

namespace valuescope::io {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw artifact_error("cannot write " + path.string());
    out << content;
    if (!out) throw artifact_error("short write to " + path.string());
}

inline std::uint64_t file_digest(const std::filesystem::path& path) {
    return fnv1a64(read_file(path));
}

inline std::string digest_hex(std::uint64_t digest) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return std::string(buf);
}

// --- JSONL ----------------------------------------------------------------

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw input_error("cannot open " + path.string());
    std::vector<nlohmann::json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            throw parse_error(path.string() + ":" + std::to_string(lineno) + ": invalid JSON");
        }
        rows.push_back(std::move(j));
    }
    return rows;
}

// dump() with sorted keys keeps serialization independent of insertion order.
inline std::string jsonl_line(const nlohmann::json& j) {
    nlohmann::ordered_json sorted;
    std::function<nlohmann::ordered_json(const nlohmann::json&)> canon =
        [&](const nlohmann::json& v) -> nlohmann::ordered_json {
        if (v.is_object()) {
            nlohmann::ordered_json o = nlohmann::ordered_json::object();
            std::vector<std::string> keys;
            for (auto it = v.begin(); it != v.end(); ++it) keys.push_back(it.key());
            std::sort(keys.begin(), keys.end());
            for (const auto& k : keys) o[k] = canon(v.at(k));
            return o;
        }
        if (v.is_array()) {
            nlohmann::ordered_json a = nlohmann::ordered_json::array();
            for (const auto& e : v) a.push_back(canon(e));
            return a;
        }
        return v;
    };
    return canon(j).dump();
}

inline void write_jsonl(const std::filesystem::path& path,
                        const std::vector<nlohmann::json>& rows) {
    std::string out;
    for (const auto& r : rows) {
        out += jsonl_line(r);
        out += '\n';
    }
    write_file(path, out);
}

// --- CSV ------------------------------------------------------------------

inline std::string csv_escape(const std::string& field) {
    bool needs_quote = field.find_first_of(",\"\n\r") != std::string::npos;
    if (!needs_quote) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// Fixed 'g'-style formatting with enough digits to round-trip a double.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return std::string(buf);
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::string serialize() const {
        std::string out;
        auto emit = [&out](const std::vector<std::string>& fields) {
            for (std::size_t i = 0; i < fields.size(); ++i) {
                if (i) out += ',';
                out += csv_escape(fields[i]);
            }
            out += '\n';
        };
        emit(header);
        for (const auto& r : rows) emit(r);
        return out;
    }
};

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) {
    write_file(path, table.serialize());
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::string text = read_file(path);
    CsvTable table;
    std::vector<std::string> fields;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    auto end_field = [&]() {
        fields.push_back(field);
        field.clear();
    };
    auto end_row = [&]() {
        end_field();
        if (!any) {
            table.header = fields;
            any = true;
        } else {
            table.rows.push_back(fields);
        }
        fields.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field += '"';
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field += c;
        }
    }
    if (!field.empty() || !fields.empty()) end_row();
    return table;
}

// --- Run manifest -----------------------------------------------------------

// Records what produced each artifact. The manifest digest covers artifact
// digests plus the run id, so two runs agree iff their outputs agree.
struct Manifest {
    std::string run_id;
    std::vector<std::pair<std::string, std::string>> artifacts;  // name -> hex digest

    void add(const std::string& name, std::uint64_t digest) {
        artifacts.emplace_back(name, digest_hex(digest));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["run_id"] = run_id;
        nlohmann::json a = nlohmann::json::object();
        for (const auto& [name, hex] : artifacts) a[name] = hex;
        j["artifacts"] = a;
        j["manifest_digest"] = digest();
        return j;
    }

    std::string digest() const {
        std::vector<std::pair<std::string, std::string>> sorted = artifacts;
        std::sort(sorted.begin(), sorted.end());
        std::string blob = run_id;
        for (const auto& [name, hex] : sorted) {
            blob += '\n';
            blob += name;
            blob += '=';
            blob += hex;
        }
        return digest_hex(fnv1a64(blob));
    }

    void save(const std::filesystem::path& path) const {
        write_file(path, to_json().dump(2) + "\n");
    }

    static Manifest load(const std::filesystem::path& path) {
        nlohmann::json j = nlohmann::json::parse(read_file(path));
        Manifest m;
        m.run_id = j.at("run_id").get<std::string>();
        const auto& a = j.at("artifacts");
        std::vector<std::string> keys;
        for (auto it = a.begin(); it != a.end(); ++it) keys.push_back(it.key());
        std::sort(keys.begin(), keys.end());
        for (const auto& k : keys) m.artifacts.emplace_back(k, a.at(k).get<std::string>());
        if (j.contains("manifest_digest") &&
            j.at("manifest_digest").get<std::string>() != m.digest()) {
            throw artifact_error("manifest digest mismatch in " + path.string());
        }
        return m;
    }
};

}  // namespace valuescope::io

#endif  // VALUESCOPE_IO_HPP
