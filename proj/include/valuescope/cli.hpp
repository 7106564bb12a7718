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
// Command line driver: configuration, stage subcommands, run manifests, and
// report emission. Exit codes: 0 success, 1 runtime failure, 2 usage error,
// 3 invalid configuration, 4 missing or stale upstream artifact.
//
// Stages are resumable. Each one reads its predecessors' artifacts from the
// run directory and appends its own, so a production-size run can restart at
// any stage. All artifacts carry the run id that produced them; the manifest
// digest covers the run id and artifact digests, so identical config + seed
// reproduce identical digests byte for byte.

#ifndef VALUESCOPE_CLI_HPP
#define VALUESCOPE_CLI_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "valuescope/corpus.hpp"
#include "valuescope/dimensions.hpp"
#include "valuescope/dynamics.hpp"
#include "valuescope/gateway.hpp"
#include "valuescope/gateway_http.hpp"
#include "valuescope/io.hpp"
#include "valuescope/normness.hpp"
#include "valuescope/preference.hpp"
#include "valuescope/rpm.hpp"
#include "valuescope/simulation.hpp"
#include "valuescope/stub_backends.hpp"
#include "valuescope/synthbench.hpp"
#include "valuescope/util.hpp"

namespace valuescope::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;
inline constexpr int kExitMissingArtifact = 4;

// --- Configuration ----------------------------------------------------------------

struct PeriodSpec {
    int lo = 0;
    int hi = 0;
};

// "2019-2020" or a single "2020".
inline PeriodSpec parse_period(const std::string& spec) {
    auto dash = spec.find('-');
    try {
        if (dash == std::string::npos) {
            int y = std::stoi(spec);
            return {y, y};
        }
        PeriodSpec p{std::stoi(spec.substr(0, dash)), std::stoi(spec.substr(dash + 1))};
        if (p.hi < p.lo) throw config_error("period '" + spec + "' is inverted");
        return p;
    } catch (const config_error&) {
        throw;
    } catch (const std::exception&) {
        throw config_error("cannot parse period '" + spec + "' (expected YYYY or YYYY-YYYY)");
    }
}

namespace detail {

inline void expect_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                        const std::string& where) {
    if (!j.is_object()) throw config_error(where + " must be a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (allowed.count(it.key()) == 0) {
            throw config_error("unknown key '" + it.key() + "' in " + where);
        }
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw config_error(std::string("bad value for '") + key + "'");
    }
}

}  // namespace detail

struct RunConfig {
    std::filesystem::path run_dir = "runs/default";
    std::filesystem::path input_dump;
    std::filesystem::path asset_dir = gateway::default_asset_dir();
    std::vector<std::string> communities;  // empty = every community in the dump
    std::vector<Dimension> dimensions = {Dimension::formality};
    std::uint64_t seed = 1;
    std::int64_t scrape_time = 0;  // 0 = derive from the dump
    bool offline = true;
    std::size_t threads = 1;

    // sample
    std::size_t per_scale = 2;
    std::size_t pairs = 0;  // 0 = complete graph over the sampled ids

    // label / winrate
    std::size_t min_comparisons = 3;

    // simulate / filter
    double content_threshold = 0.5;
    double max_scorer_failure_rate = 0.0;
    bool pooled_fluency = false;
    std::string train_partition;

    // preference
    preference::InputVariant variant = preference::InputVariant::comment;

    // rpm
    int bins = 10;
    std::size_t min_bin_count = 5;

    // dynamics
    PeriodSpec s1{2019, 2020};
    PeriodSpec s2{2021, 2023};
    std::size_t min_user_comments = 2;
    int phi_bins = 5;

    // synthbench; defaults exercise a noisy unimodal world end to end
    synthbench::WorldConfig bench{
        .n_comments = 500,
        .response = {synthbench::ResponseKind::unimodal, 1.0, 0.7, 0.2},
        .sigma = 0.25,
        .epsilon = 0.1};
    std::size_t bench_rounds = 30;
    std::size_t bench_min_comparisons = 30;
    int bench_bins = 10;
    std::size_t bench_min_bin_count = 20;

    // remote backend; the credential is read from the named environment
    // variable at call time and never from the config file
    gateway::RemoteConfig remote;
    gateway::PriceSheet price;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["run_dir"] = run_dir.generic_string();
        j["input_dump"] = input_dump.generic_string();
        j["asset_dir"] = asset_dir.generic_string();
        j["communities"] = communities;
        nlohmann::json dims = nlohmann::json::array();
        for (Dimension d : dimensions) dims.push_back(dimension_name(d));
        j["dimensions"] = dims;
        j["seed"] = seed;
        j["scrape_time"] = scrape_time;
        j["offline"] = offline;
        j["threads"] = threads;
        j["sample"] = {{"per_scale", per_scale}, {"pairs", pairs}};
        j["label"] = {{"min_comparisons", min_comparisons}};
        j["simulate"] = {{"content_threshold", content_threshold},
                         {"max_scorer_failure_rate", max_scorer_failure_rate},
                         {"pooled_fluency", pooled_fluency},
                         {"train_partition", train_partition}};
        j["preference"] = {{"variant", preference::variant_name(variant)}};
        j["rpm"] = {{"bins", bins}, {"min_bin_count", min_bin_count}};
        j["dynamics"] = {{"s1", std::to_string(s1.lo) + "-" + std::to_string(s1.hi)},
                         {"s2", std::to_string(s2.lo) + "-" + std::to_string(s2.hi)},
                         {"min_user_comments", min_user_comments},
                         {"phi_bins", phi_bins}};
        j["synthbench"] = {
            {"n", bench.n_comments},
            {"epsilon", bench.epsilon},
            {"sigma", bench.sigma},
            {"community", bench.community},
            {"dimension", dimension_name(bench.dimension)},
            {"rounds", bench_rounds},
            {"min_comparisons", bench_min_comparisons},
            {"bins", bench_bins},
            {"min_bin_count", bench_min_bin_count},
            {"response",
             {{"kind", bench.response.kind == synthbench::ResponseKind::linear ? "linear"
                                                                               : "unimodal"},
              {"peak", bench.response.peak},
              {"width", bench.response.width},
              {"slope", bench.response.slope}}}};
        j["backend"] = {{"endpoint", remote.endpoint},
                        {"model", remote.model},
                        {"temperature", remote.temperature},
                        {"api_key_env", remote.api_key_env},
                        {"input_price", price.input_price},
                        {"output_price", price.output_price}};
        return j;
    }

    // Run identity: every knob except the output location, so two runs of the
    // same inputs into different directories compare byte for byte.
    std::string run_id() const {
        nlohmann::json j = to_json();
        j.erase("run_dir");
        return io::digest_hex(fnv1a64(j.dump()));
    }

    static RunConfig from_json(const nlohmann::json& j) {
        detail::expect_keys(j, {"run_dir", "input_dump", "asset_dir", "communities",
                                "dimensions", "seed", "scrape_time", "offline", "threads",
                                "sample", "label", "simulate", "preference", "rpm", "dynamics",
                                "synthbench", "backend"},
                            "config");
        RunConfig c;
        c.run_dir = detail::get_or<std::string>(j, "run_dir", c.run_dir.generic_string());
        c.input_dump = detail::get_or<std::string>(j, "input_dump", "");
        c.asset_dir = detail::get_or<std::string>(j, "asset_dir", c.asset_dir.generic_string());
        c.communities = detail::get_or<std::vector<std::string>>(j, "communities", {});
        if (j.contains("dimensions")) {
            c.dimensions.clear();
            for (const auto& name : j.at("dimensions")) {
                try {
                    c.dimensions.push_back(parse_dimension(name.get<std::string>()));
                } catch (const std::exception& e) {
                    throw config_error(std::string("bad dimension: ") + e.what());
                }
            }
            if (c.dimensions.empty()) throw config_error("dimensions must not be empty");
        }
        c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
        c.scrape_time = detail::get_or<std::int64_t>(j, "scrape_time", c.scrape_time);
        c.offline = detail::get_or<bool>(j, "offline", c.offline);
        c.threads = detail::get_or<std::size_t>(j, "threads", c.threads);
        if (c.threads == 0) throw config_error("threads must be positive");

        if (j.contains("sample")) {
            const auto& s = j.at("sample");
            detail::expect_keys(s, {"per_scale", "pairs"}, "sample");
            c.per_scale = detail::get_or<std::size_t>(s, "per_scale", c.per_scale);
            c.pairs = detail::get_or<std::size_t>(s, "pairs", c.pairs);
            if (c.per_scale == 0) throw config_error("sample.per_scale must be positive");
        }
        if (j.contains("label")) {
            const auto& s = j.at("label");
            detail::expect_keys(s, {"min_comparisons"}, "label");
            c.min_comparisons =
                detail::get_or<std::size_t>(s, "min_comparisons", c.min_comparisons);
        }
        if (j.contains("simulate")) {
            const auto& s = j.at("simulate");
            detail::expect_keys(s, {"content_threshold", "max_scorer_failure_rate",
                                    "pooled_fluency", "train_partition"},
                                "simulate");
            c.content_threshold =
                detail::get_or<double>(s, "content_threshold", c.content_threshold);
            c.max_scorer_failure_rate =
                detail::get_or<double>(s, "max_scorer_failure_rate", c.max_scorer_failure_rate);
            c.pooled_fluency = detail::get_or<bool>(s, "pooled_fluency", c.pooled_fluency);
            c.train_partition =
                detail::get_or<std::string>(s, "train_partition", c.train_partition);
            if (c.content_threshold < 0.0 || c.content_threshold > 1.0) {
                throw config_error("simulate.content_threshold must lie in [0, 1]");
            }
        }
        if (j.contains("preference")) {
            const auto& s = j.at("preference");
            detail::expect_keys(s, {"variant"}, "preference");
            c.variant = preference::parse_variant(
                detail::get_or<std::string>(s, "variant", preference::variant_name(c.variant)));
        }
        if (j.contains("rpm")) {
            const auto& s = j.at("rpm");
            detail::expect_keys(s, {"bins", "min_bin_count"}, "rpm");
            c.bins = detail::get_or<int>(s, "bins", c.bins);
            c.min_bin_count = detail::get_or<std::size_t>(s, "min_bin_count", c.min_bin_count);
            if (c.bins < 2) throw config_error("rpm.bins must be at least 2");
        }
        if (j.contains("dynamics")) {
            const auto& s = j.at("dynamics");
            detail::expect_keys(s, {"s1", "s2", "min_user_comments", "phi_bins"}, "dynamics");
            if (s.contains("s1")) c.s1 = parse_period(s.at("s1").get<std::string>());
            if (s.contains("s2")) c.s2 = parse_period(s.at("s2").get<std::string>());
            c.min_user_comments =
                detail::get_or<std::size_t>(s, "min_user_comments", c.min_user_comments);
            c.phi_bins = detail::get_or<int>(s, "phi_bins", c.phi_bins);
            if (c.phi_bins < 1) throw config_error("dynamics.phi_bins must be positive");
        }
        if (j.contains("synthbench")) {
            const auto& s = j.at("synthbench");
            detail::expect_keys(s, {"n", "epsilon", "sigma", "community", "dimension", "rounds",
                                    "min_comparisons", "bins", "min_bin_count", "response"},
                                "synthbench");
            c.bench.n_comments = detail::get_or<std::size_t>(s, "n", c.bench.n_comments);
            c.bench.epsilon = detail::get_or<double>(s, "epsilon", c.bench.epsilon);
            c.bench.sigma = detail::get_or<double>(s, "sigma", c.bench.sigma);
            c.bench.community = detail::get_or<std::string>(s, "community", c.bench.community);
            if (s.contains("dimension")) {
                c.bench.dimension = parse_dimension(s.at("dimension").get<std::string>());
            }
            c.bench_rounds = detail::get_or<std::size_t>(s, "rounds", c.bench_rounds);
            c.bench_min_comparisons =
                detail::get_or<std::size_t>(s, "min_comparisons", c.bench_min_comparisons);
            c.bench_bins = detail::get_or<int>(s, "bins", c.bench_bins);
            c.bench_min_bin_count =
                detail::get_or<std::size_t>(s, "min_bin_count", c.bench_min_bin_count);
            if (s.contains("response")) {
                const auto& r = s.at("response");
                detail::expect_keys(r, {"kind", "peak", "width", "slope"}, "synthbench.response");
                std::string kind = detail::get_or<std::string>(r, "kind", "linear");
                if (kind == "linear") {
                    c.bench.response.kind = synthbench::ResponseKind::linear;
                } else if (kind == "unimodal") {
                    c.bench.response.kind = synthbench::ResponseKind::unimodal;
                } else {
                    throw config_error("synthbench.response.kind must be linear or unimodal");
                }
                c.bench.response.peak = detail::get_or<double>(r, "peak", c.bench.response.peak);
                c.bench.response.width =
                    detail::get_or<double>(r, "width", c.bench.response.width);
                c.bench.response.slope =
                    detail::get_or<double>(r, "slope", c.bench.response.slope);
            }
        }
        if (j.contains("backend")) {
            const auto& s = j.at("backend");
            detail::expect_keys(s, {"endpoint", "model", "temperature", "api_key_env",
                                    "input_price", "output_price"},
                                "backend");
            c.remote.endpoint = detail::get_or<std::string>(s, "endpoint", c.remote.endpoint);
            c.remote.model = detail::get_or<std::string>(s, "model", c.remote.model);
            c.remote.temperature =
                detail::get_or<double>(s, "temperature", c.remote.temperature);
            c.remote.api_key_env =
                detail::get_or<std::string>(s, "api_key_env", c.remote.api_key_env);
            c.price.input_price = detail::get_or<double>(s, "input_price", c.price.input_price);
            c.price.output_price =
                detail::get_or<double>(s, "output_price", c.price.output_price);
        }
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::string text;
        try {
            text = io::read_file(path);
        } catch (const std::exception& e) {
            throw config_error(std::string("cannot read config: ") + e.what());
        }
        nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
        if (j.is_discarded()) throw config_error("config is not valid JSON: " + path.string());
        return from_json(j);
    }
};

// --- Run manifest ----------------------------------------------------------------

// Digest covers run id + artifact digests only; stage timings and spend are
// informational and vary between otherwise identical runs.
struct RunManifest {
    std::string run_id;
    nlohmann::json config_snapshot;
    std::map<std::string, std::string> artifacts;  // relative name -> digest hex
    std::map<std::string, double> timings;         // stage -> seconds (last run wins)
    double cost_usd = 0.0;

    std::string digest() const {
        std::string blob = run_id;
        for (const auto& [name, hex] : artifacts) {
            blob += '\n';
            blob += name;
            blob += '=';
            blob += hex;
        }
        return io::digest_hex(fnv1a64(blob));
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["run_id"] = run_id;
        j["config"] = config_snapshot;
        j["artifacts"] = artifacts;
        j["timings"] = timings;
        j["cost_usd"] = cost_usd;
        j["manifest_digest"] = digest();
        return j;
    }

    void save(const std::filesystem::path& run_dir) const {
        std::filesystem::path final_path = run_dir / "manifest.json";
        std::filesystem::path tmp_path = run_dir / "manifest.json.tmp";
        io::write_file(tmp_path, to_json().dump(2) + "\n");
        std::filesystem::rename(tmp_path, final_path);
    }

    static RunManifest load(const std::filesystem::path& run_dir) {
        nlohmann::json j = nlohmann::json::parse(io::read_file(run_dir / "manifest.json"));
        RunManifest m;
        m.run_id = j.at("run_id").get<std::string>();
        m.config_snapshot = j.at("config");
        m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
        m.timings = j.at("timings").get<std::map<std::string, double>>();
        m.cost_usd = j.at("cost_usd").get<double>();
        if (j.at("manifest_digest").get<std::string>() != m.digest()) {
            throw artifact_error("manifest digest mismatch in " + run_dir.string());
        }
        return m;
    }

    // Loads the manifest for this run directory or starts a fresh one. A
    // directory already claimed by a different configuration is refused.
    static RunManifest open(const std::filesystem::path& run_dir, const RunConfig& config) {
        std::filesystem::create_directories(run_dir);
        RunManifest m;
        if (std::filesystem::exists(run_dir / "manifest.json")) {
            m = load(run_dir);
            if (m.run_id != config.run_id()) {
                throw config_error("run directory " + run_dir.string() +
                                   " belongs to run " + m.run_id + ", not " + config.run_id() +
                                   "; use a fresh directory or the original config");
            }
        } else {
            m.run_id = config.run_id();
        }
        m.config_snapshot = config.to_json();
        return m;
    }
};

// --- Artifact helpers ----------------------------------------------------------------

namespace detail {

inline const std::map<std::string, std::string>& artifact_producers() {
    static const std::map<std::string, std::string> kProducers = {
        {"comments.json", "ingest"},         {"sample.json", "sample"},
        {"labels.json", "label"},            {"winrate.json", "winrate"},
        {"rewrites.json", "simulate"},       {"filtered.json", "filter"},
        {"preferences.json", "score-preference"}, {"rpm.json", "rpm"},
        {"dynamics.json", "dynamics"},       {"synthbench.json", "synthbench"}};
    return kProducers;
}

inline void write_artifact(const std::filesystem::path& run_dir, RunManifest& manifest,
                           const std::string& name, const std::string& stage,
                           nlohmann::json payload) {
    payload["run_id"] = manifest.run_id;
    payload["stage"] = stage;
    std::filesystem::path path = run_dir / name;
    io::write_file(path, payload.dump(2) + "\n");
    manifest.artifacts[name] = io::digest_hex(io::file_digest(path));
}

inline void register_file(const std::filesystem::path& run_dir, RunManifest& manifest,
                          const std::string& name) {
    manifest.artifacts[name] = io::digest_hex(io::file_digest(run_dir / name));
}

inline nlohmann::json load_artifact(const std::filesystem::path& run_dir,
                                    const RunManifest& manifest, const std::string& name) {
    std::filesystem::path path = run_dir / name;
    if (!std::filesystem::exists(path)) {
        auto it = artifact_producers().find(name);
        std::string hint = it == artifact_producers().end()
                               ? ""
                               : "; run the `" + it->second + "` stage first";
        throw artifact_error("missing artifact " + name + hint);
    }
    nlohmann::json j = nlohmann::json::parse(io::read_file(path));
    if (j.at("run_id").get<std::string>() != manifest.run_id) {
        throw artifact_error("artifact " + name + " belongs to run " +
                             j.at("run_id").get<std::string>() + ", expected " +
                             manifest.run_id + "; re-run its stage");
    }
    return j;
}

inline nlohmann::json comment_to_json(const corpus::Comment& c) {
    return nlohmann::json{{"comment_id", c.comment_id}, {"parent_id", c.parent_id},
                          {"post_id", c.post_id},       {"community", c.community},
                          {"author", c.author},         {"body", c.body},
                          {"created_at", c.created_at}, {"retrieved_at", c.retrieved_at},
                          {"net_votes", c.net_votes},   {"post_title", c.post_title},
                          {"partition", c.partition}};
}

inline corpus::Comment comment_from_json(const nlohmann::json& j) {
    corpus::Comment c;
    c.comment_id = j.at("comment_id").get<std::string>();
    c.parent_id = j.at("parent_id").get<std::string>();
    c.post_id = j.at("post_id").get<std::string>();
    c.community = j.at("community").get<std::string>();
    c.author = j.at("author").get<std::string>();
    c.body = j.at("body").get<std::string>();
    c.created_at = j.at("created_at").get<std::int64_t>();
    c.retrieved_at = j.at("retrieved_at").get<std::int64_t>();
    c.net_votes = j.at("net_votes").get<std::int64_t>();
    c.post_title = j.at("post_title").get<std::string>();
    c.partition = j.at("partition").get<std::string>();
    return c;
}

inline std::vector<corpus::Comment> load_comments(const std::filesystem::path& run_dir,
                                                  const RunManifest& manifest) {
    nlohmann::json j = load_artifact(run_dir, manifest, "comments.json");
    std::vector<corpus::Comment> out;
    for (const auto& cj : j.at("comments")) out.push_back(comment_from_json(cj));
    return out;
}

inline std::map<std::string, std::vector<corpus::Comment>> by_community(
    const std::vector<corpus::Comment>& comments) {
    std::map<std::string, std::vector<corpus::Comment>> out;
    for (const auto& c : comments) out[c.community].push_back(c);
    return out;
}

}  // namespace detail

// --- Backend bindings ----------------------------------------------------------------

// Offline mode wires fully deterministic local backends. Online mode sends
// rating, judging, and rewriting through the chat endpoint; perplexity,
// similarity, and preference scoring have no remote protocol here and stay on
// the deterministic local scorers either way.
struct Backends {
    std::unique_ptr<gateway::ChatClient> client;
    std::unique_ptr<gateway::LikertRater> rater;
    std::unique_ptr<gateway::PairwiseJudge> judge;
    std::unique_ptr<gateway::RewriteGenerator> generator;
    std::unique_ptr<gateway::PerplexityScorer> perplexity;
    std::unique_ptr<gateway::SimilarityScorer> similarity;
    std::unique_ptr<gateway::PreferenceBackend> preference;

    double cost(const gateway::PriceSheet& price) const {
        return client ? client->total_cost(price) : 0.0;
    }
};

inline Backends make_backends(const RunConfig& config) {
    Backends b;
    if (!config.offline) {
        if (config.remote.endpoint.empty() || config.remote.model.empty()) {
            throw config_error("online mode needs backend.endpoint and backend.model");
        }
        b.client = std::make_unique<gateway::ChatClient>(
            config.remote, gateway::http_transport(config.remote));
        b.rater = std::make_unique<gateway::ChatLikertRater>(*b.client, config.asset_dir);
        b.judge = std::make_unique<gateway::ChatPairwiseJudge>(*b.client, config.asset_dir);
        b.generator = std::make_unique<gateway::ChatRewriteGenerator>(*b.client, config.asset_dir);
    } else {
        b.rater = std::make_unique<stubs::LengthLikertRater>();
        b.judge = std::make_unique<stubs::LexiconPairwiseJudge>();
        b.generator = std::make_unique<stubs::EchoRewriteGenerator>();
    }
    b.perplexity = std::make_unique<stubs::HashNoisePerplexity>(config.seed, 100.0, 40.0);
    b.similarity = std::make_unique<stubs::TokenOverlapSimilarity>();
    b.preference = std::make_unique<stubs::LengthPreferenceBackend>();
    return b;
}

// Replays recorded rewrite texts so the filter stage can re-run the pipeline
// without asking the generator again. Keyed by (origin body, level).
class ReplayGenerator final : public gateway::RewriteGenerator {
public:
    void record(const std::string& origin_body, int level, const std::string& text) {
        texts_[{origin_body, level}] = text;
    }
    void record_failure(const std::string& origin_body, int level) {
        failures_.insert({origin_body, level});
    }

    std::string rewrite(const gateway::RewriteContext& ctx) override {
        if (failures_.count({ctx.comment, ctx.level}) != 0) {
            throw parse_error("recorded generation failure");
        }
        auto it = texts_.find({ctx.comment, ctx.level});
        if (it == texts_.end()) throw parse_error("no recorded rewrite for this origin/level");
        return it->second;
    }

private:
    std::map<std::pair<std::string, int>, std::string> texts_;
    std::set<std::pair<std::string, int>> failures_;
};

// --- Stages ----------------------------------------------------------------

namespace stage {

inline void ingest(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    if (config.input_dump.empty()) {
        throw config_error("ingest needs input_dump in the config");
    }
    std::ifstream in(config.input_dump);
    if (!in) throw input_error("cannot open dump " + config.input_dump.generic_string());
    corpus::ParseResult parsed = corpus::parse_dump(in);

    std::int64_t scrape_time = config.scrape_time;
    if (scrape_time == 0) {
        for (const auto& c : parsed.comments) scrape_time = std::max(scrape_time, c.created_at);
        for (const auto& p : parsed.posts) scrape_time = std::max(scrape_time, p.created_at);
        scrape_time += 86400;
    }
    corpus::PreprocessReport report;
    std::vector<corpus::Comment> comments =
        corpus::preprocess(parsed.comments, parsed.posts, scrape_time, &report);

    if (!config.communities.empty()) {
        std::set<std::string> keep(config.communities.begin(), config.communities.end());
        std::erase_if(comments, [&](const corpus::Comment& c) { return !keep.count(c.community); });
    }
    // Deterministic half split: one side trains the preference model, the
    // other seeds simulation.
    for (auto& c : comments) {
        c.partition = (fnv1a64(c.comment_id, config.seed) & 1) ? "train" : "simulate";
    }
    std::sort(comments.begin(), comments.end(),
              [](const corpus::Comment& a, const corpus::Comment& b) {
                  return a.comment_id < b.comment_id;
              });

    nlohmann::json payload;
    payload["skipped_lines"] = parsed.skipped;
    payload["kept"] = comments.size();
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : comments) arr.push_back(detail::comment_to_json(c));
    payload["comments"] = std::move(arr);
    detail::write_artifact(config.run_dir, manifest, "comments.json", "ingest", payload);
    log << "ingest: kept " << comments.size() << " comments (" << parsed.skipped
        << " lines skipped)\n";
}

inline void sample(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    auto comments = detail::load_comments(config.run_dir, manifest);
    auto groups = detail::by_community(comments);
    Backends backends = make_backends(config);

    nlohmann::json payload;
    nlohmann::json per_dim = nlohmann::json::array();
    for (Dimension dim : config.dimensions) {
        if (!dimension_info(dim).rewritable) {
            log << "sample: " << dimension_name(dim) << " is measured, not sampled\n";
            continue;
        }
        std::vector<normness::LikertRating> ratings;
        for (const auto& c : comments) {
            gateway::RatingContext ctx;
            ctx.dimension = dim;
            ctx.post_title = c.post_title;
            ctx.comment = c.body;
            normness::LikertRating r;
            r.comment_id = c.comment_id;
            r.community = c.community;
            r.dimension = dim;
            r.rating = backends.rater->rate(ctx);
            ratings.push_back(r);
        }
        auto drawn = normness::stratified_sample(
            ratings, config.per_scale, derive_seed(config.seed, "sample|" + dimension_name(dim)));

        std::set<std::string> chosen(drawn.ids.begin(), drawn.ids.end());
        nlohmann::json communities_json = nlohmann::json::array();
        for (const auto& [community, members] : groups) {
            std::vector<std::string> ids;
            for (const auto& c : members) {
                if (chosen.count(c.comment_id)) ids.push_back(c.comment_id);
            }
            if (ids.size() < 2) {
                log << "sample: " << community << "/" << dimension_name(dim)
                    << " has fewer than 2 sampled comments; no pairs\n";
                continue;
            }
            std::size_t total = ids.size() * (ids.size() - 1) / 2;
            std::size_t m = config.pairs == 0 ? total : std::min(config.pairs, total);
            auto pairs = normness::sample_pairs(
                ids, m,
                derive_seed(config.seed, "pairs|" + dimension_name(dim) + "|" + community));
            nlohmann::json pj = nlohmann::json::array();
            for (const auto& [a, b] : pairs) pj.push_back({a, b});
            communities_json.push_back(
                {{"community", community}, {"chosen", ids}, {"pairs", std::move(pj)}});
        }

        nlohmann::json shortfalls = nlohmann::json::array();
        for (const auto& s : drawn.shortfalls) {
            shortfalls.push_back({{"community", s.community},
                                  {"scale", s.scale},
                                  {"requested", s.requested},
                                  {"available", s.available}});
        }
        nlohmann::json ratings_json = nlohmann::json::array();
        for (const auto& r : ratings) {
            ratings_json.push_back({{"comment_id", r.comment_id},
                                    {"community", r.community},
                                    {"rating", r.rating}});
        }
        per_dim.push_back({{"dimension", dimension_name(dim)},
                           {"communities", std::move(communities_json)},
                           {"shortfalls", std::move(shortfalls)},
                           {"ratings", std::move(ratings_json)}});
        log << "sample: " << dimension_name(dim) << " drew " << drawn.ids.size()
            << " comments\n";
    }
    payload["dimensions"] = std::move(per_dim);
    detail::write_artifact(config.run_dir, manifest, "sample.json", "sample", payload);
    manifest.cost_usd += backends.cost(config.price);
}

inline void label(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    auto comments = detail::load_comments(config.run_dir, manifest);
    nlohmann::json sample_json = detail::load_artifact(config.run_dir, manifest, "sample.json");
    Backends backends = make_backends(config);

    std::map<std::string, const corpus::Comment*> by_id;
    for (const auto& c : comments) by_id[c.comment_id] = &c;

    nlohmann::json payload;
    nlohmann::json graphs = nlohmann::json::array();
    for (const auto& dim_entry : sample_json.at("dimensions")) {
        Dimension dim = parse_dimension(dim_entry.at("dimension").get<std::string>());
        for (const auto& cj : dim_entry.at("communities")) {
            std::string community = cj.at("community").get<std::string>();
            std::vector<std::pair<std::string, std::string>> pairs;
            for (const auto& pj : cj.at("pairs")) {
                pairs.emplace_back(pj.at(0).get<std::string>(), pj.at(1).get<std::string>());
            }
            auto lookup = [&](const std::string& a, const std::string& b) {
                gateway::JudgeContext ctx;
                ctx.dimension = dim;
                const corpus::Comment* ca = by_id.at(a);
                const corpus::Comment* cb = by_id.at(b);
                ctx.title1 = ca->post_title;
                ctx.comment1 = ca->body;
                ctx.title2 = cb->post_title;
                ctx.comment2 = cb->body;
                return ctx;
            };
            normness::LabelingReport report;
            auto graph = normness::label_pairs(
                pairs, dim, *backends.judge, lookup,
                derive_seed(config.seed, "label|" + dimension_name(dim) + "|" + community),
                &report, config.threads);
            nlohmann::json entry = normness::graph_to_json(graph);
            entry["community"] = community;
            entry["judged"] = report.judged;
            entry["dropped"] = report.dropped;
            entry["contradiction_rate"] = report.contradiction_rate;
            graphs.push_back(std::move(entry));
            log << "label: " << community << "/" << dimension_name(dim) << " judged "
                << report.judged << " pairs (" << report.dropped << " dropped)\n";
        }
    }
    payload["graphs"] = std::move(graphs);
    detail::write_artifact(config.run_dir, manifest, "labels.json", "label", payload);
    manifest.cost_usd += backends.cost(config.price);
}

inline void winrate(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    bool wants_verbosity = false;
    bool wants_judged = false;
    for (Dimension d : config.dimensions) {
        (d == Dimension::verbosity ? wants_verbosity : wants_judged) = true;
    }

    nlohmann::json payload;
    nlohmann::json scales = nlohmann::json::array();

    if (wants_judged) {
        nlohmann::json labels_json =
            detail::load_artifact(config.run_dir, manifest, "labels.json");
        for (const auto& gj : labels_json.at("graphs")) {
            auto graph = normness::graph_from_json(gj);
            auto result = normness::win_rate(graph, config.min_comparisons);
            nlohmann::json scores = nlohmann::json::array();
            for (const auto& s : result.scores) scores.push_back(normness::score_to_json(s));
            scales.push_back({{"dimension", dimension_name(graph.dimension)},
                              {"community", gj.at("community")},
                              {"scores", std::move(scores)},
                              {"excluded", result.excluded}});
            log << "winrate: " << gj.at("community").get<std::string>() << "/"
                << dimension_name(graph.dimension) << " scored " << result.scores.size()
                << " comments (" << result.excluded.size() << " without comparisons)\n";
        }
    }
    if (wants_verbosity) {
        auto comments = detail::load_comments(config.run_dir, manifest);
        for (const auto& [community, members] : detail::by_community(comments)) {
            auto scores = normness::verbosity_scale(members);
            nlohmann::json sj = nlohmann::json::array();
            for (const auto& s : scores) sj.push_back(normness::score_to_json(s));
            scales.push_back({{"dimension", dimension_name(Dimension::verbosity)},
                              {"community", community},
                              {"scores", std::move(sj)},
                              {"excluded", nlohmann::json::array()}});
            log << "winrate: " << community << "/verbosity scored " << scores.size()
                << " comments by length\n";
        }
    }
    payload["scales"] = std::move(scales);
    detail::write_artifact(config.run_dir, manifest, "winrate.json", "winrate", payload);
}

// Sampled origins for one community/dimension, excluding the training side.
inline std::vector<corpus::Comment> simulation_origins(const nlohmann::json& sample_json,
                                                       const RunConfig& config, Dimension dim,
                                                       const std::string& community,
                                                       const std::map<std::string, const corpus::Comment*>& by_id) {
    std::vector<corpus::Comment> origins;
    for (const auto& dim_entry : sample_json.at("dimensions")) {
        if (parse_dimension(dim_entry.at("dimension").get<std::string>()) != dim) continue;
        for (const auto& cj : dim_entry.at("communities")) {
            if (cj.at("community").get<std::string>() != community) continue;
            for (const auto& idj : cj.at("chosen")) {
                const corpus::Comment* c = by_id.at(idj.get<std::string>());
                if (!config.train_partition.empty() && c->partition == config.train_partition) {
                    continue;
                }
                origins.push_back(*c);
            }
        }
    }
    return origins;
}

inline void simulate(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    auto comments = detail::load_comments(config.run_dir, manifest);
    nlohmann::json sample_json = detail::load_artifact(config.run_dir, manifest, "sample.json");
    Backends backends = make_backends(config);

    std::map<std::string, const corpus::Comment*> by_id;
    for (const auto& c : comments) by_id[c.comment_id] = &c;

    nlohmann::json payload;
    nlohmann::json batches = nlohmann::json::array();
    for (Dimension dim : config.dimensions) {
        if (!dimension_info(dim).rewritable) continue;
        for (const auto& [community, members] : detail::by_community(comments)) {
            auto origins = simulation_origins(sample_json, config, dim, community, by_id);
            if (origins.empty()) continue;
            nlohmann::json rewrites = nlohmann::json::array();
            nlohmann::json failures = nlohmann::json::array();
            for (const auto& origin : origins) {
                auto gen = simulation::generate_rewrites(origin, dim, *backends.generator);
                for (const auto& v : gen.variants) {
                    rewrites.push_back(simulation::synthetic_to_json(v));
                }
                for (int level : gen.failed_levels) {
                    failures.push_back({{"origin_id", origin.comment_id}, {"level", level}});
                }
            }
            batches.push_back({{"dimension", dimension_name(dim)},
                               {"community", community},
                               {"rewrites", std::move(rewrites)},
                               {"generation_failures", std::move(failures)}});
            log << "simulate: " << community << "/" << dimension_name(dim) << " rewrote "
                << origins.size() << " origins\n";
        }
    }
    payload["batches"] = std::move(batches);
    detail::write_artifact(config.run_dir, manifest, "rewrites.json", "simulate", payload);
    manifest.cost_usd += backends.cost(config.price);
}

inline void filter(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    auto comments = detail::load_comments(config.run_dir, manifest);
    nlohmann::json sample_json = detail::load_artifact(config.run_dir, manifest, "sample.json");
    nlohmann::json rewrites_json =
        detail::load_artifact(config.run_dir, manifest, "rewrites.json");
    Backends backends = make_backends(config);
    simulation::LexicalRules rules = simulation::load_lexical_rules(config.asset_dir);

    std::map<std::string, const corpus::Comment*> by_id;
    for (const auto& c : comments) by_id[c.comment_id] = &c;

    nlohmann::json payload;
    nlohmann::json batches = nlohmann::json::array();
    for (const auto& batch : rewrites_json.at("batches")) {
        Dimension dim = parse_dimension(batch.at("dimension").get<std::string>());
        std::string community = batch.at("community").get<std::string>();
        auto origins = simulation_origins(sample_json, config, dim, community, by_id);
        if (origins.empty()) continue;

        ReplayGenerator replay;
        for (const auto& rj : batch.at("rewrites")) {
            auto synth = simulation::synthetic_from_json(rj);
            replay.record(by_id.at(synth.origin_id)->body, synth.target_level, synth.text);
        }
        for (const auto& fj : batch.at("generation_failures")) {
            replay.record_failure(by_id.at(fj.at("origin_id").get<std::string>())->body,
                                  fj.at("level").get<int>());
        }

        simulation::PipelineBackends pipe_backends;
        pipe_backends.generator = &replay;
        pipe_backends.perplexity = backends.perplexity.get();
        pipe_backends.similarity = backends.similarity.get();
        simulation::PipelineConfig pipe_config;
        pipe_config.dimension = dim;
        pipe_config.content_threshold = config.content_threshold;
        pipe_config.max_scorer_failure_rate = config.max_scorer_failure_rate;
        pipe_config.pooled_fluency = config.pooled_fluency;
        pipe_config.train_partition = config.train_partition;
        auto result = simulation::run_pipeline(origins, pipe_backends, pipe_config, rules);

        nlohmann::json all = nlohmann::json::array();
        for (const auto& s : result.all) all.push_back(simulation::synthetic_to_json(s));
        nlohmann::json kept = nlohmann::json::array();
        for (const auto& s : result.kept) kept.push_back(s.id);
        nlohmann::json stages = nlohmann::json::array();
        for (const auto& s : result.report.stages) {
            stages.push_back({{"name", s.name}, {"in", s.in}, {"out", s.out}});
        }
        nlohmann::json fluency = nlohmann::json::object();
        for (const auto& [key, st] : result.fluency) {
            fluency[key] = {{"mean", st.mean}, {"sd", st.sd}, {"n", st.n}};
        }
        batches.push_back({{"dimension", dimension_name(dim)},
                           {"community", community},
                           {"all", std::move(all)},
                           {"kept", std::move(kept)},
                           {"stages", std::move(stages)},
                           {"generation_failures", result.report.generation_failures},
                           {"scorer_failures", result.report.scorer_failures},
                           {"retention", result.report.retention},
                           {"fluency", std::move(fluency)}});
        log << "filter: " << community << "/" << dimension_name(dim) << " kept "
            << result.kept.size() << " of " << result.all.size() << " rewrites (retention "
            << result.report.retention << ")\n";
    }
    payload["batches"] = std::move(batches);
    detail::write_artifact(config.run_dir, manifest, "filtered.json", "filter", payload);
}

// phi per (dimension, community) from the winrate artifact; reliable only.
inline std::map<std::string, std::map<std::string, double>> load_phi(
    const nlohmann::json& winrate_json) {
    std::map<std::string, std::map<std::string, double>> phi;  // dim|community -> id -> phi
    for (const auto& scale : winrate_json.at("scales")) {
        std::string key = scale.at("dimension").get<std::string>() + "|" +
                          scale.at("community").get<std::string>();
        for (const auto& sj : scale.at("scores")) {
            auto s = normness::score_from_json(sj);
            if (s.reliable) phi[key][s.comment_id] = s.value;
        }
    }
    return phi;
}

inline void score_preference(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    auto comments = detail::load_comments(config.run_dir, manifest);
    nlohmann::json winrate_json = detail::load_artifact(config.run_dir, manifest, "winrate.json");
    nlohmann::json filtered_json =
        detail::load_artifact(config.run_dir, manifest, "filtered.json");
    Backends backends = make_backends(config);

    nlohmann::json payload;

    // Every comment gets a raw preference score; curves standardize later.
    nlohmann::json scores = nlohmann::json::array();
    for (const auto& c : comments) {
        double psi = backends.preference->score(preference::build_input(config.variant, c));
        scores.push_back({{"comment_id", c.comment_id}, {"psi", psi}});
    }
    payload["scores"] = std::move(scores);

    auto phi_by_scale = load_phi(winrate_json);
    auto groups = detail::by_community(comments);

    nlohmann::json delta_batches = nlohmann::json::array();
    for (const auto& batch : filtered_json.at("batches")) {
        Dimension dim = parse_dimension(batch.at("dimension").get<std::string>());
        std::string community = batch.at("community").get<std::string>();
        std::vector<simulation::SyntheticComment> kept;
        std::set<std::string> kept_ids;
        for (const auto& idj : batch.at("kept")) kept_ids.insert(idj.get<std::string>());
        for (const auto& rj : batch.at("all")) {
            auto synth = simulation::synthetic_from_json(rj);
            if (kept_ids.count(synth.id)) kept.push_back(std::move(synth));
        }
        if (kept.empty()) {
            log << "score-preference: " << community << "/" << dimension_name(dim)
                << " has no surviving rewrites; no deltas\n";
            continue;
        }

        std::map<std::string, double> phi;
        auto scale_it = phi_by_scale.find(dimension_name(dim) + "|" + community);
        if (scale_it != phi_by_scale.end()) phi = scale_it->second;
        // The rewrite's normness position is its planted target level.
        for (const auto& rw : kept) phi[rw.id] = synthbench::level_midpoint(rw.target_level);

        auto deltas = preference::build_deltas(groups.at(community), kept, phi,
                                               *backends.preference, config.variant);
        nlohmann::json dj = nlohmann::json::array();
        for (const auto& d : deltas.deltas) dj.push_back(preference::delta_to_json(d));
        delta_batches.push_back({{"dimension", dimension_name(dim)},
                                 {"community", community},
                                 {"deltas", std::move(dj)},
                                 {"skipped", deltas.skipped},
                                 {"degenerate", deltas.degenerate}});
        log << "score-preference: " << community << "/" << dimension_name(dim) << " built "
            << deltas.deltas.size() << " deltas (" << deltas.skipped << " skipped)\n";
    }
    payload["delta_batches"] = std::move(delta_batches);
    detail::write_artifact(config.run_dir, manifest, "preferences.json", "score-preference",
                           payload);
}

inline void rpm_stage(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    nlohmann::json preferences_json =
        detail::load_artifact(config.run_dir, manifest, "preferences.json");

    nlohmann::json payload;
    nlohmann::json curves = nlohmann::json::array();
    for (const auto& batch : preferences_json.at("delta_batches")) {
        std::string community = batch.at("community").get<std::string>();
        std::string dim_name = batch.at("dimension").get<std::string>();
        std::vector<preference::PreferenceDelta> deltas;
        for (const auto& dj : batch.at("deltas")) {
            deltas.push_back(preference::delta_from_json(dj));
        }
        try {
            rpm::RpmCurve curve = rpm::build_curve(
                deltas, static_cast<std::size_t>(config.bins), config.min_bin_count, community);
            std::string csv_name = "rpm_" + community + "_" + dim_name + ".csv";
            io::write_csv(config.run_dir / csv_name, rpm::curve_to_csv(curve));
            detail::register_file(config.run_dir, manifest, csv_name);
            nlohmann::json entry = rpm::curve_to_json(curve);
            entry["dimension"] = dim_name;
            entry["summary"] = rpm::curve_summary(curve);
            curves.push_back(std::move(entry));
            log << "rpm: " << community << "/" << dim_name << " curve over " << deltas.size()
                << " deltas\n";
        } catch (const input_error& e) {
            log << "rpm: " << community << "/" << dim_name << " skipped: " << e.what() << "\n";
        } catch (const std::invalid_argument& e) {
            log << "rpm: " << community << "/" << dim_name << " skipped: " << e.what() << "\n";
        }
    }
    payload["curves"] = std::move(curves);
    detail::write_artifact(config.run_dir, manifest, "rpm.json", "rpm", payload);
}

inline void dynamics_stage(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    auto comments = detail::load_comments(config.run_dir, manifest);
    nlohmann::json winrate_json = detail::load_artifact(config.run_dir, manifest, "winrate.json");
    nlohmann::json preferences_json =
        detail::load_artifact(config.run_dir, manifest, "preferences.json");

    std::map<std::string, double> psi;
    for (const auto& sj : preferences_json.at("scores")) {
        psi[sj.at("comment_id").get<std::string>()] = sj.at("psi").get<double>();
    }
    auto phi_by_scale = load_phi(winrate_json);
    auto groups = detail::by_community(comments);

    corpus::TimeBin p1 = dynamics::period_from_years(config.s1.lo, config.s1.hi);
    corpus::TimeBin p2 = dynamics::period_from_years(config.s2.lo, config.s2.hi);

    nlohmann::json ni_json = nlohmann::json::array();
    nlohmann::json cr_json = nlohmann::json::array();
    nlohmann::json tc_json = nlohmann::json::array();
    nlohmann::json fits_json = nlohmann::json::array();
    nlohmann::json shifts_json = nlohmann::json::array();

    auto fit_to_json = [](const dynamics::RegressionFit& f) {
        return nlohmann::json{
            {"model", f.model == dynamics::RegressionModel::ni_only ? "ni_only" : "ni_cr"},
            {"coefficients", f.coefficients},
            {"std_errors", f.std_errors},
            {"p_values", f.p_values},
            {"r_squared", f.r_squared_defined ? nlohmann::json(f.r_squared) : nlohmann::json()},
            {"n", f.n}};
    };

    double width = 1.0 / config.phi_bins;
    for (Dimension dim : config.dimensions) {
        // (community, bin index) -> {ni per period}; joined into regression rows.
        std::vector<dynamics::RegressionRow> rows;
        for (const auto& [community, members] : groups) {
            auto scale_it = phi_by_scale.find(dimension_name(dim) + "|" + community);
            if (scale_it == phi_by_scale.end()) continue;
            const auto& phi = scale_it->second;

            auto bin_of = [&](double v) {
                int b = static_cast<int>(v / width);
                return std::min(b, config.phi_bins - 1);
            };
            // period -> bin -> preferences
            std::map<int, std::vector<double>> bins_s1, bins_s2;
            for (const auto& c : members) {
                auto phi_it = phi.find(c.comment_id);
                auto psi_it = psi.find(c.comment_id);
                if (phi_it == phi.end() || psi_it == psi.end()) continue;
                int b = bin_of(phi_it->second);
                if (c.created_at >= p1.start && c.created_at < p1.end) {
                    bins_s1[b].push_back(psi_it->second);
                } else if (c.created_at >= p2.start && c.created_at < p2.end) {
                    bins_s2[b].push_back(psi_it->second);
                }
            }

            auto key_for = [&](int b) {
                dynamics::BinKey key;
                key.community = community;
                key.dimension = dim;
                key.bin_lo = b * width;
                key.bin_hi = (b + 1) * width;
                return key;
            };
            std::map<int, dynamics::NormIntensityRecord> ni1, ni2;
            for (const auto& [b, values] : bins_s1) {
                ni1[b] = dynamics::norm_intensity(key_for(b), p1, values);
                ni_json.push_back(dynamics::ni_to_json(ni1[b]));
            }
            for (const auto& [b, values] : bins_s2) {
                ni2[b] = dynamics::norm_intensity(key_for(b), p2, values);
                ni_json.push_back(dynamics::ni_to_json(ni2[b]));
            }

            // CR per period over bins with enough members for a variance.
            std::map<int, dynamics::CrystallizationRecord> cr1;
            std::vector<dynamics::CrystallizationInput> inputs;
            for (const auto& [b, values] : bins_s1) {
                if (values.size() >= 2) inputs.push_back({key_for(b), p1, values});
            }
            if (!inputs.empty()) {
                auto records = dynamics::crystallization(
                    inputs, derive_seed(config.seed, "cr|" + dimension_name(dim) + "|" +
                                                         community));
                for (const auto& r : records) {
                    int b = static_cast<int>(r.key.bin_lo / width + 0.5);
                    cr1[b] = r;
                    cr_json.push_back({{"community", r.key.community},
                                       {"dimension", dimension_name(r.key.dimension)},
                                       {"bin_lo", r.key.bin_lo},
                                       {"bin_hi", r.key.bin_hi},
                                       {"period_label", r.period.label},
                                       {"cr", r.degenerate ? nlohmann::json()
                                                           : nlohmann::json(r.cr)},
                                       {"subsample_n", r.subsample_n},
                                       {"degenerate", r.degenerate}});
                }
            }

            for (const auto& [b, rec1] : ni1) {
                auto it2 = ni2.find(b);
                if (it2 == ni2.end()) continue;
                auto tc = dynamics::temporal_change(rec1, it2->second);
                tc_json.push_back({{"community", community},
                                   {"dimension", dimension_name(dim)},
                                   {"bin_lo", rec1.key.bin_lo},
                                   {"bin_hi", rec1.key.bin_hi},
                                   {"tc", tc.tc}});
                auto cr_it = cr1.find(b);
                if (cr_it != cr1.end() && !cr_it->second.degenerate) {
                    rows.push_back({rec1.ni, cr_it->second.cr, tc.tc});
                }
            }
        }

        if (rows.size() > 3) {
            dynamics::DimensionRegression reg;
            reg.dimension = dim;
            reg.ni_only = dynamics::ols_fit(rows, dynamics::RegressionModel::ni_only);
            reg.ni_cr = dynamics::ols_fit(rows, dynamics::RegressionModel::ni_cr);
            fits_json.push_back({{"dimension", dimension_name(dim)},
                                 {"rows", rows.size()},
                                 {"ni_only", fit_to_json(reg.ni_only)},
                                 {"ni_cr", fit_to_json(reg.ni_cr)}});
            log << "dynamics: " << dimension_name(dim) << " regression over " << rows.size()
                << " bins\n";
        } else {
            log << "dynamics: " << dimension_name(dim) << " has " << rows.size()
                << " usable bins; regression needs more than 3\n";
        }

        // Cross-community user shifts, one record per community pair.
        std::vector<std::string> names;
        for (const auto& [community, members] : groups) {
            if (phi_by_scale.count(dimension_name(dim) + "|" + community)) {
                names.push_back(community);
            }
        }
        for (std::size_t i = 0; i < names.size(); ++i) {
            for (std::size_t j = i + 1; j < names.size(); ++j) {
                std::map<std::string, double> normness;
                for (const auto& name : {names[i], names[j]}) {
                    for (const auto& [id, v] : phi_by_scale.at(dimension_name(dim) + "|" + name)) {
                        normness[id] = v;
                    }
                }
                try {
                    auto shift =
                        dynamics::user_shift(groups.at(names[i]), groups.at(names[j]), normness,
                                             dim, config.min_user_comments);
                    shifts_json.push_back(
                        {{"community_a", shift.community_a},
                         {"community_b", shift.community_b},
                         {"dimension", dimension_name(dim)},
                         {"shared_users", shift.shared_users},
                         {"mean_delta", shift.mean_delta},
                         {"t", shift.t},
                         {"p", shift.p_defined ? nlohmann::json(shift.p) : nlohmann::json()},
                         {"p_defined", shift.p_defined},
                         {"degenerate", shift.degenerate},
                         {"significance", shift.significance}});
                } catch (const input_error& e) {
                    log << "dynamics: user shift " << names[i] << " vs " << names[j] << "/"
                        << dimension_name(dim) << " skipped: " << e.what() << "\n";
                }
            }
        }
    }

    nlohmann::json payload;
    payload["ni"] = std::move(ni_json);
    payload["cr"] = std::move(cr_json);
    payload["tc"] = std::move(tc_json);
    payload["regressions"] = std::move(fits_json);
    payload["user_shifts"] = std::move(shifts_json);
    payload["s1"] = {{"start", p1.start}, {"end", p1.end}, {"label", p1.label}};
    payload["s2"] = {{"start", p2.start}, {"end", p2.end}, {"label", p2.label}};
    detail::write_artifact(config.run_dir, manifest, "dynamics.json", "dynamics", payload);
}

inline void synthbench_stage(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    auto bundle = synthbench::plant_world(config.bench, config.seed);
    synthbench::RecoveryOptions options;
    options.rounds = config.bench_rounds;
    options.min_comparisons = config.bench_min_comparisons;
    options.n_bins = config.bench_bins;
    options.min_bin_count = config.bench_min_bin_count;
    options.threads = config.threads;
    auto report = synthbench::run_recovery(bundle, options);

    nlohmann::json payload;
    payload["report"] = synthbench::report_to_json(report);
    payload["world"] = {{"n", config.bench.n_comments},
                        {"epsilon", config.bench.epsilon},
                        {"sigma", config.bench.sigma},
                        {"seed", config.seed}};
    detail::write_artifact(config.run_dir, manifest, "synthbench.json", "synthbench", payload);

    log << synthbench::report_to_json(report).dump() << "\n";
    log << "synthbench: spearman " << report.spearman << " over " << report.reliable_scores
        << " comments; curve peak bin " << report.pmr_bin << " (expected " << report.expected_bin
        << "); prd " << report.prd << (report.prd_sign_match ? " matches" : " contradicts")
        << " the planted response sign\n";
}

inline void report_stage(const RunConfig& config, RunManifest& manifest, std::ostream& log) {
    // Orphan scan: every top-level json artifact must be listed with a
    // matching digest and carry this manifest's run id.
    for (const auto& entry : std::filesystem::directory_iterator(config.run_dir)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name == "manifest.json" || entry.path().extension() != ".json") continue;
        auto it = manifest.artifacts.find(name);
        if (it == manifest.artifacts.end()) {
            throw artifact_error("orphan artifact " + name + ": not in the manifest");
        }
        if (io::digest_hex(io::file_digest(entry.path())) != it->second) {
            throw artifact_error("artifact " + name + " does not match its manifest digest");
        }
        nlohmann::json j = nlohmann::json::parse(io::read_file(entry.path()));
        if (j.at("run_id").get<std::string>() != manifest.run_id) {
            throw artifact_error("artifact " + name + " names a different run");
        }
    }

    nlohmann::json rpm_json = detail::load_artifact(config.run_dir, manifest, "rpm.json");
    nlohmann::json dynamics_json =
        detail::load_artifact(config.run_dir, manifest, "dynamics.json");
    std::filesystem::path report_dir = config.run_dir / "report";
    std::filesystem::create_directories(report_dir);

    // Regression table, one row per dimension, both models side by side.
    std::vector<dynamics::DimensionRegression> regressions;
    for (const auto& fj : dynamics_json.at("regressions")) {
        auto parse_fit = [](const nlohmann::json& j, dynamics::RegressionModel model) {
            dynamics::RegressionFit f;
            f.model = model;
            f.coefficients = j.at("coefficients").get<std::vector<double>>();
            f.std_errors = j.at("std_errors").get<std::vector<double>>();
            f.p_values = j.at("p_values").get<std::vector<double>>();
            if (j.at("r_squared").is_null()) {
                f.r_squared_defined = false;
            } else {
                f.r_squared = j.at("r_squared").get<double>();
            }
            f.n = j.at("n").get<std::size_t>();
            return f;
        };
        dynamics::DimensionRegression reg;
        reg.dimension = parse_dimension(fj.at("dimension").get<std::string>());
        reg.ni_only = parse_fit(fj.at("ni_only"), dynamics::RegressionModel::ni_only);
        reg.ni_cr = parse_fit(fj.at("ni_cr"), dynamics::RegressionModel::ni_cr);
        regressions.push_back(std::move(reg));
    }
    io::write_csv(report_dir / "regression_table.csv",
                  dynamics::regression_table_csv(regressions));
    detail::register_file(config.run_dir, manifest, "report/regression_table.csv");

    // User shift table, one row per community pair and dimension.
    std::vector<dynamics::UserShiftRecord> shifts;
    for (const auto& sj : dynamics_json.at("user_shifts")) {
        dynamics::UserShiftRecord r;
        r.community_a = sj.at("community_a").get<std::string>();
        r.community_b = sj.at("community_b").get<std::string>();
        r.dimension = parse_dimension(sj.at("dimension").get<std::string>());
        r.shared_users = sj.at("shared_users").get<std::size_t>();
        r.mean_delta = sj.at("mean_delta").get<double>();
        r.t = sj.at("t").get<double>();
        r.p_defined = sj.at("p_defined").get<bool>();
        if (r.p_defined) r.p = sj.at("p").get<double>();
        r.degenerate = sj.at("degenerate").get<bool>();
        r.significance = sj.at("significance").get<std::string>();
        shifts.push_back(std::move(r));
    }
    io::write_csv(report_dir / "user_shift_table.csv", dynamics::user_shift_table_csv(shifts));
    detail::register_file(config.run_dir, manifest, "report/user_shift_table.csv");

    std::size_t curves = 0;
    for (const auto& cj : rpm_json.at("curves")) {
        rpm::RpmCurve curve = rpm::curve_from_json(cj);
        std::string name = "report/curve_" + curve.community + "_" +
                           cj.at("dimension").get<std::string>() + ".csv";
        io::write_csv(config.run_dir / name, rpm::curve_to_csv(curve));
        detail::register_file(config.run_dir, manifest, name);
        ++curves;
    }
    log << "report: wrote regression table (" << regressions.size() << " rows), user shift table ("
        << shifts.size() << " rows), " << curves << " curve files\n";
}

}  // namespace stage

// --- Dispatch ----------------------------------------------------------------

inline void print_usage(std::ostream& out) {
    out << "usage: valuescope <subcommand> [options]\n"
           "\n"
           "subcommands:\n"
           "  ingest           parse a community dump and emit cleaned comments\n"
           "  sample           draw a deterministic stratified comment sample\n"
           "  label            collect pairwise judgments over the sample\n"
           "  winrate          aggregate judgments into win-rate scales\n"
           "  simulate         generate counterfactual rewrites at planted levels\n"
           "  filter           run the rewrite quality filter pipeline\n"
           "  score-preference score comments and rewrites, build deltas\n"
           "  rpm              fit return potential curves (PMR, PRD)\n"
           "  dynamics         compute norm dynamics (NI, CR, TC) and regressions\n"
           "  synthbench       run the synthetic recovery benchmark\n"
           "  report           verify artifacts and render result tables\n"
           "\n"
           "options:\n"
           "  --config PATH    configuration file (JSON); defaults apply if omitted\n"
           "  --community NAME restrict to one community\n"
           "  --dimension NAME restrict to one norm dimension\n"
           "  --seed N         root random seed\n"
           "  --bins N         return-potential bin count\n"
           "  --s1 SPEC        first period, e.g. 2019-2020\n"
           "  --s2 SPEC        second period, e.g. 2021-2023\n"
           "  --variant NAME   preference input variant: comment, comment+post,\n"
           "                   comment+post+time, comment+post+time+author\n"
           "  --offline        force deterministic offline backends\n"
           "  --run-dir PATH   override the output directory\n"
           "  -h, --help       show this message\n";
}

namespace detail {

struct ParsedArgs {
    std::string subcommand;
    std::optional<std::string> config_path;
    std::optional<std::string> community;
    std::optional<std::string> dimension;
    std::optional<std::uint64_t> seed;
    std::optional<int> bins;
    std::optional<std::string> s1, s2;
    std::optional<std::string> variant;
    std::optional<std::string> run_dir;
    bool offline = false;
    bool help = false;
};

// Throws config_error for a malformed value and input_error for a usage
// problem (unknown flag, missing value); the dispatcher maps them to exit
// codes 3 and 2 respectively.
inline ParsedArgs parse_args(const std::vector<std::string>& args) {
    static const std::set<std::string> kSubcommands = {
        "ingest",   "sample", "label",    "winrate",  "simulate", "filter",
        "score-preference", "rpm", "dynamics", "synthbench", "report"};
    ParsedArgs out;
    std::size_t i = 0;
    if (i < args.size() && !args[i].empty() && args[i][0] != '-') {
        out.subcommand = args[i++];
        if (kSubcommands.count(out.subcommand) == 0) {
            throw input_error("unknown subcommand '" + out.subcommand + "'");
        }
    }
    auto value = [&](const std::string& flag) -> std::string {
        if (i + 1 >= args.size()) throw input_error(flag + " needs a value");
        return args[++i];
    };
    for (; i < args.size(); ++i) {
        const std::string& a = args[i];
        if (a == "-h" || a == "--help" || a == "help") {
            out.help = true;
        } else if (a == "--config") {
            out.config_path = value(a);
        } else if (a == "--community") {
            out.community = value(a);
        } else if (a == "--dimension") {
            out.dimension = value(a);
        } else if (a == "--seed") {
            try {
                out.seed = std::stoull(value(a));
            } catch (const std::exception&) {
                throw config_error("--seed needs an unsigned integer");
            }
        } else if (a == "--bins") {
            try {
                out.bins = std::stoi(value(a));
            } catch (const std::exception&) {
                throw config_error("--bins needs an integer");
            }
        } else if (a == "--s1") {
            out.s1 = value(a);
        } else if (a == "--s2") {
            out.s2 = value(a);
        } else if (a == "--variant") {
            out.variant = value(a);
        } else if (a == "--run-dir") {
            out.run_dir = value(a);
        } else if (a == "--offline") {
            out.offline = true;
        } else {
            throw input_error("unknown option '" + a + "'");
        }
    }
    if (out.subcommand.empty() && !out.help) throw input_error("no subcommand given");
    return out;
}

inline RunConfig effective_config(const ParsedArgs& args) {
    RunConfig config =
        args.config_path ? RunConfig::load(*args.config_path) : RunConfig{};
    if (args.community) config.communities = {*args.community};
    if (args.dimension) {
        try {
            config.dimensions = {parse_dimension(*args.dimension)};
        } catch (const std::exception& e) {
            throw config_error(std::string("bad --dimension: ") + e.what());
        }
    }
    if (args.seed) config.seed = *args.seed;
    if (args.bins) {
        if (*args.bins < 2) throw config_error("--bins must be at least 2");
        config.bins = *args.bins;
    }
    if (args.s1) config.s1 = parse_period(*args.s1);
    if (args.s2) config.s2 = parse_period(*args.s2);
    if (args.variant) config.variant = preference::parse_variant(*args.variant);
    if (args.run_dir) config.run_dir = *args.run_dir;
    if (args.offline) config.offline = true;
    return config;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
    detail::ParsedArgs parsed;
    try {
        parsed = detail::parse_args(args);
    } catch (const config_error& e) {
        err << "valuescope: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "valuescope: " << e.what() << "\n";
        print_usage(err);
        return kExitUsage;
    }
    if (parsed.help) {
        print_usage(out);
        return kExitOk;
    }

    try {
        RunConfig config = detail::effective_config(parsed);
        RunManifest manifest = RunManifest::open(config.run_dir, config);

        auto started = std::chrono::steady_clock::now();
        if (parsed.subcommand == "ingest") {
            stage::ingest(config, manifest, out);
        } else if (parsed.subcommand == "sample") {
            stage::sample(config, manifest, out);
        } else if (parsed.subcommand == "label") {
            stage::label(config, manifest, out);
        } else if (parsed.subcommand == "winrate") {
            stage::winrate(config, manifest, out);
        } else if (parsed.subcommand == "simulate") {
            stage::simulate(config, manifest, out);
        } else if (parsed.subcommand == "filter") {
            stage::filter(config, manifest, out);
        } else if (parsed.subcommand == "score-preference") {
            stage::score_preference(config, manifest, out);
        } else if (parsed.subcommand == "rpm") {
            stage::rpm_stage(config, manifest, out);
        } else if (parsed.subcommand == "dynamics") {
            stage::dynamics_stage(config, manifest, out);
        } else if (parsed.subcommand == "synthbench") {
            stage::synthbench_stage(config, manifest, out);
        } else if (parsed.subcommand == "report") {
            stage::report_stage(config, manifest, out);
        }
        std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - started;
        manifest.timings[parsed.subcommand] = elapsed.count();
        manifest.save(config.run_dir);
        return kExitOk;
    } catch (const config_error& e) {
        err << "valuescope: invalid config: " << e.what() << "\n";
        return kExitConfig;
    } catch (const artifact_error& e) {
        err << "valuescope: " << e.what() << "\n";
        return kExitMissingArtifact;
    } catch (const std::exception& e) {
        err << "valuescope: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace valuescope::cli

#endif  // VALUESCOPE_CLI_HPP
