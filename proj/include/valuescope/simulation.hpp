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
// Community language simulation: controlled rewrites at five target levels
// and the four-stage keep/drop pipeline (generation, lexical, fluency,
// content preservation).

#ifndef VALUESCOPE_SIMULATION_HPP_
#define VALUESCOPE_SIMULATION_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "valuescope/corpus.hpp"
#include "valuescope/dimensions.hpp"
#include "valuescope/gateway.hpp"
#include "valuescope/stats.hpp"
#include "valuescope/util.hpp"

namespace valuescope::simulation {

struct StageVerdict {
    std::string stage;
    bool pass = false;
};

struct SyntheticComment {
    std::string origin_id;
    std::string id;  // origin_id + "#L" + target_level
    Dimension dimension = Dimension::formality;
    int target_level = 0;  // 1..5
    std::string text;
    std::optional<double> perplexity;
    std::optional<double> similarity;
    std::vector<StageVerdict> verdicts;  // pipeline order; stops at first fail

    bool kept() const {
        if (verdicts.empty()) return false;
        for (const auto& v : verdicts) {
            if (!v.pass) return false;
        }
        return true;
    }
};

struct FluencyStats {
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

struct StageCount {
    std::string name;
    std::size_t in = 0;
    std::size_t out = 0;
};

struct FilterReport {
    std::vector<StageCount> stages;
    std::size_t generation_failures = 0;
    std::size_t scorer_failures = 0;
    double retention = 0.0;  // final kept / first-stage input
};

// --- Rewrite generation -----------------------------------------------------------

struct GenerationResult {
    std::vector<SyntheticComment> variants;  // ordered by target level
    std::vector<int> failed_levels;
};

// One rewrite per target level 1..5. A generator that cannot produce a
// parsable rewrite for a level leaves that level absent; the failure is
// recorded, not fatal.
inline GenerationResult generate_rewrites(const corpus::Comment& comment, Dimension dimension,
                                          gateway::RewriteGenerator& generator) {
    if (!dimension_info(dimension).rewritable) {
        throw std::invalid_argument("generate_rewrites: dimension " + dimension_name(dimension) +
                                    " is measured, not rewritten");
    }
    GenerationResult out;
    for (int level = 1; level <= 5; ++level) {
        gateway::RewriteContext ctx;
        ctx.dimension = dimension;
        ctx.level = level;
        ctx.post_title = comment.post_title;
        ctx.comment = comment.body;
        SyntheticComment synth;
        synth.origin_id = comment.comment_id;
        synth.id = comment.comment_id + "#L" + std::to_string(level);
        synth.dimension = dimension;
        synth.target_level = level;
        try {
            synth.text = generator.rewrite(ctx);
        } catch (const parse_error&) {
            out.failed_levels.push_back(level);
            continue;
        }
        synth.verdicts.push_back({"generation", true});
        out.variants.push_back(std::move(synth));
    }
    return out;
}

// --- Lexical filter ---------------------------------------------------------------

struct LexicalRules {
    std::vector<std::string> abstain_patterns;  // case-insensitive substrings
    std::vector<std::string> strip_prefixes;    // case-insensitive leading markers
};

namespace detail {

inline std::vector<std::string> read_pattern_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("cannot open pattern file " + path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto trimmed = trim(line);
        if (trimmed.empty() || trimmed[0] == '#') continue;
        out.push_back(std::move(trimmed));
    }
    return out;
}

inline std::string normalize_for_identity(const std::string& text) {
    return collapse_whitespace(trim(to_lower(text)));
}

}  // namespace detail

inline LexicalRules load_lexical_rules(const std::filesystem::path& asset_dir) {
    LexicalRules rules;
    rules.abstain_patterns = detail::read_pattern_file(asset_dir / "filters" / "abstain_patterns.txt");
    rules.strip_prefixes = detail::read_pattern_file(asset_dir / "filters" / "strip_prefixes.txt");
    return rules;
}

// Strips extraneous leading markers, rejects abstains, and rejects rewrites
// identical to the origin after lowercasing and whitespace collapse. Mutates
// the text in place when a prefix is stripped and appends the verdict.
inline bool lexical_filter(SyntheticComment& synth, const std::string& origin_text,
                           const LexicalRules& rules) {
    std::string text = trim(synth.text);
    bool stripped = true;
    while (stripped) {
        stripped = false;
        for (const auto& prefix : rules.strip_prefixes) {
            if (starts_with_ci(text, prefix)) {
                text = trim(text.substr(prefix.size()));
                stripped = true;
                break;
            }
        }
    }
    bool pass = !text.empty();
    if (pass) {
        for (const auto& pattern : rules.abstain_patterns) {
            if (contains_ci(text, pattern)) {
                pass = false;
                break;
            }
        }
    }
    if (pass &&
        detail::normalize_for_identity(text) == detail::normalize_for_identity(origin_text)) {
        pass = false;
    }
    if (pass) synth.text = text;
    synth.verdicts.push_back({"lexical", pass});
    return pass;
}

// --- Fluency filter ---------------------------------------------------------------

// Sample mean and sd of perplexity over original comments. Scorer failures
// are tolerated up to the given rate; beyond it the corpus cannot be trusted.
inline FluencyStats fluency_stats(const std::vector<corpus::Comment>& originals,
                                  gateway::PerplexityScorer& scorer,
                                  double max_failure_rate = 0.0) {
    if (originals.size() < 2) {
        throw std::invalid_argument("fluency_stats: need at least 2 original comments");
    }
    std::vector<double> scores;
    std::size_t failures = 0;
    for (const auto& c : originals) {
        try {
            scores.push_back(scorer.perplexity(c.body));
        } catch (const transport_error&) {
            ++failures;
        } catch (const parse_error&) {
            ++failures;
        }
    }
    const double rate = static_cast<double>(failures) / static_cast<double>(originals.size());
    if (rate > max_failure_rate) {
        throw input_error("fluency_stats: scorer failure rate " + std::to_string(rate) +
                          " exceeds ceiling " + std::to_string(max_failure_rate));
    }
    if (scores.size() < 2) {
        throw std::invalid_argument("fluency_stats: fewer than 2 scored originals");
    }
    FluencyStats out;
    out.mean = stats::mean(scores);
    out.sd = stats::stddev(scores);
    out.n = scores.size();
    return out;
}

// Pass iff the perplexity lies in the closed interval mean +/- one sd.
inline bool fluency_filter(SyntheticComment& synth, const FluencyStats& stats) {
    if (!synth.perplexity.has_value()) {
        throw std::logic_error("fluency_filter: perplexity not computed for " + synth.id);
    }
    const double ppl = *synth.perplexity;
    const bool pass = ppl >= stats.mean - stats.sd && ppl <= stats.mean + stats.sd;
    synth.verdicts.push_back({"fluency", pass});
    return pass;
}

// --- Content preservation filter --------------------------------------------------

// Pass iff similarity(origin, rewrite) >= threshold; the boundary is inclusive.
inline bool content_filter(const std::string& origin_text, SyntheticComment& synth,
                           gateway::SimilarityScorer& scorer, double threshold = 0.5) {
    synth.similarity = scorer.similarity(origin_text, synth.text);
    const bool pass = *synth.similarity >= threshold;
    synth.verdicts.push_back({"content", pass});
    return pass;
}

// --- Caching scorer wrappers ------------------------------------------------------

// Filters may re-run during tuning; scores are cached by text hash so a
// repeat pass never re-bills the backend.
class CachingPerplexityScorer : public gateway::PerplexityScorer {
public:
    explicit CachingPerplexityScorer(gateway::PerplexityScorer& backend) : backend_(backend) {}

    double perplexity(const std::string& text) override {
        const std::uint64_t key = fnv1a64(text);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        const double value = backend_.perplexity(text);
        std::lock_guard<std::mutex> lock(mutex_);
        cache_.emplace(key, value);
        return value;
    }

private:
    gateway::PerplexityScorer& backend_;
    std::mutex mutex_;
    std::map<std::uint64_t, double> cache_;
};

class CachingSimilarityScorer : public gateway::SimilarityScorer {
public:
    explicit CachingSimilarityScorer(gateway::SimilarityScorer& backend) : backend_(backend) {}

    double similarity(const std::string& a, const std::string& b) override {
        const std::pair<std::uint64_t, std::uint64_t> key{fnv1a64(a), fnv1a64(b)};
        {
            std::lock_guard<std::mutex> lock(mutex_);
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
        }
        const double value = backend_.similarity(a, b);
        std::lock_guard<std::mutex> lock(mutex_);
        cache_.emplace(key, value);
        return value;
    }

private:
    gateway::SimilarityScorer& backend_;
    std::mutex mutex_;
    std::map<std::pair<std::uint64_t, std::uint64_t>, double> cache_;
};

// --- Pipeline ---------------------------------------------------------------------

struct PipelineBackends {
    gateway::RewriteGenerator* generator = nullptr;
    gateway::PerplexityScorer* perplexity = nullptr;
    gateway::SimilarityScorer* similarity = nullptr;
};

struct PipelineConfig {
    Dimension dimension = Dimension::formality;
    double content_threshold = 0.5;
    double max_scorer_failure_rate = 0.0;
    // Fluency statistics are computed per community unless pooled.
    bool pooled_fluency = false;
    // Name of the partition reserved for preference-predictor training; seeds
    // carrying it are rejected. Empty disables the check.
    std::string train_partition;
};

struct PipelineResult {
    std::vector<SyntheticComment> kept;
    std::vector<SyntheticComment> all;
    FilterReport report;
    std::map<std::string, FluencyStats> fluency;  // keyed by community; "" = pooled
};

// Generation then lexical, fluency, and content preservation, in that order.
// Later stages only see survivors of earlier ones; scorer failures drop the
// variant and are counted.
inline PipelineResult run_pipeline(const std::vector<corpus::Comment>& seeds,
                                   const PipelineBackends& backends,
                                   const PipelineConfig& config, const LexicalRules& rules) {
    if (!backends.generator || !backends.perplexity || !backends.similarity) {
        throw config_error("run_pipeline: generator, perplexity, and similarity backends required");
    }
    if (!dimension_info(config.dimension).rewritable) {
        throw std::invalid_argument("run_pipeline: dimension " +
                                    dimension_name(config.dimension) +
                                    " is measured, not rewritten");
    }
    if (config.content_threshold < 0.0 || config.content_threshold > 1.0) {
        throw config_error("run_pipeline: content threshold must lie in [0, 1]");
    }
    if (!config.train_partition.empty()) {
        for (const auto& s : seeds) {
            if (s.partition == config.train_partition) {
                throw config_error("run_pipeline: seed " + s.comment_id +
                                   " belongs to the preference training partition '" +
                                   config.train_partition + "'");
            }
        }
    }

    std::map<std::string, const corpus::Comment*> by_id;
    std::map<std::string, std::vector<corpus::Comment>> by_community;
    for (const auto& s : seeds) {
        by_id[s.comment_id] = &s;
        by_community[config.pooled_fluency ? std::string() : s.community].push_back(s);
    }

    PipelineResult result;
    for (const auto& [community, members] : by_community) {
        result.fluency[community] =
            fluency_stats(members, *backends.perplexity, config.max_scorer_failure_rate);
    }

    const std::size_t attempts = seeds.size() * 5;
    std::size_t generated = 0;
    for (const auto& s : seeds) {
        auto gen = generate_rewrites(s, config.dimension, *backends.generator);
        result.report.generation_failures += gen.failed_levels.size();
        generated += gen.variants.size();
        for (auto& v : gen.variants) result.all.push_back(std::move(v));
    }

    std::size_t lexical_pass = 0;
    for (auto& synth : result.all) {
        if (!synth.kept()) continue;
        if (lexical_filter(synth, by_id.at(synth.origin_id)->body, rules)) ++lexical_pass;
    }

    std::size_t fluency_pass = 0;
    for (auto& synth : result.all) {
        if (!synth.kept()) continue;
        const auto& origin = *by_id.at(synth.origin_id);
        const auto& stats =
            result.fluency.at(config.pooled_fluency ? std::string() : origin.community);
        try {
            synth.perplexity = backends.perplexity->perplexity(synth.text);
        } catch (const transport_error&) {
            ++result.report.scorer_failures;
            synth.verdicts.push_back({"fluency", false});
            continue;
        }
        if (fluency_filter(synth, stats)) ++fluency_pass;
    }

    std::size_t content_pass = 0;
    for (auto& synth : result.all) {
        if (!synth.kept()) continue;
        const auto& origin = *by_id.at(synth.origin_id);
        try {
            if (content_filter(origin.body, synth, *backends.similarity,
                               config.content_threshold)) {
                ++content_pass;
            }
        } catch (const transport_error&) {
            ++result.report.scorer_failures;
            synth.verdicts.push_back({"content", false});
        }
    }

    for (const auto& synth : result.all) {
        if (synth.kept()) result.kept.push_back(synth);
    }
    result.report.stages = {
        {"generation", attempts, generated},
        {"lexical", generated, lexical_pass},
        {"fluency", lexical_pass, fluency_pass},
        {"content", fluency_pass, content_pass},
    };
    result.report.retention =
        attempts == 0 ? 0.0 : static_cast<double>(content_pass) / static_cast<double>(attempts);
    return result;
}

// --- Serialization ----------------------------------------------------------------

inline nlohmann::json synthetic_to_json(const SyntheticComment& s) {
    nlohmann::json verdicts = nlohmann::json::array();
    for (const auto& v : s.verdicts) verdicts.push_back({{"stage", v.stage}, {"pass", v.pass}});
    nlohmann::json j{{"origin_id", s.origin_id},
                     {"id", s.id},
                     {"dimension", dimension_name(s.dimension)},
                     {"target_level", s.target_level},
                     {"text", s.text},
                     {"verdicts", verdicts}};
    if (s.perplexity) j["perplexity"] = *s.perplexity;
    if (s.similarity) j["similarity"] = *s.similarity;
    return j;
}

inline SyntheticComment synthetic_from_json(const nlohmann::json& j) {
    SyntheticComment s;
    s.origin_id = j.at("origin_id").get<std::string>();
    s.id = j.at("id").get<std::string>();
    s.dimension = parse_dimension(j.at("dimension").get<std::string>());
    s.target_level = j.at("target_level").get<int>();
    s.text = j.at("text").get<std::string>();
    if (j.contains("perplexity")) s.perplexity = j.at("perplexity").get<double>();
    if (j.contains("similarity")) s.similarity = j.at("similarity").get<double>();
    for (const auto& v : j.at("verdicts")) {
        s.verdicts.push_back({v.at("stage").get<std::string>(), v.at("pass").get<bool>()});
    }
    return s;
}

}  // namespace valuescope::simulation

#endif  // VALUESCOPE_SIMULATION_HPP_
