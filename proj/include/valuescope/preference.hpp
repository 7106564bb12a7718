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
// Community preference harness: vote-label transform, input-variant
// construction, pairwise binary accuracy, z-scoring, and distilled
// preference deltas between originals and their controlled rewrites.

#ifndef VALUESCOPE_PREFERENCE_HPP_
#define VALUESCOPE_PREFERENCE_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "valuescope/corpus.hpp"
#include "valuescope/dimensions.hpp"
#include "valuescope/gateway.hpp"
#include "valuescope/simulation.hpp"
#include "valuescope/stats.hpp"
#include "valuescope/util.hpp"

namespace valuescope::preference {

// Net votes can be zero or negative, so the training label is the signed
// log1p rather than a raw logarithm.
inline double label_transform(std::int64_t net_votes) {
    const double x = static_cast<double>(net_votes);
    if (x > 0.0) return std::log1p(x);
    if (x < 0.0) return -std::log1p(-x);
    return 0.0;
}

struct PreferenceLabel {
    std::string comment_id;
    std::int64_t net_votes = 0;
    double label = 0.0;
};

inline PreferenceLabel make_label(const corpus::Comment& c) {
    return {c.comment_id, c.net_votes, label_transform(c.net_votes)};
}

enum class InputVariant { comment, comment_post, comment_post_time, comment_post_time_author };

inline std::string variant_name(InputVariant v) {
    switch (v) {
        case InputVariant::comment: return "comment";
        case InputVariant::comment_post: return "comment+post";
        case InputVariant::comment_post_time: return "comment+post+time";
        case InputVariant::comment_post_time_author: return "comment+post+time+author";
    }
    throw std::invalid_argument("variant_name: unknown variant");
}

inline InputVariant parse_variant(const std::string& name) {
    if (name == "comment") return InputVariant::comment;
    if (name == "comment+post") return InputVariant::comment_post;
    if (name == "comment+post+time") return InputVariant::comment_post_time;
    if (name == "comment+post+time+author") return InputVariant::comment_post_time_author;
    throw config_error("unknown input variant '" + name + "'");
}

inline constexpr const char* kFieldSeparator = " [SEP] ";

// Concatenates the fields demanded by the variant, in declared order, with
// the timestamp rendered as ISO-8601 UTC. Missing demanded fields are errors.
inline std::string build_input(InputVariant variant, const std::string& body,
                               const std::string& post_title, std::int64_t created_at,
                               const std::string& author) {
    if (body.empty()) throw input_error("build_input: comment body missing");
    std::string out = body;
    if (variant == InputVariant::comment) return out;
    if (post_title.empty()) throw input_error("build_input: post title missing");
    out += kFieldSeparator;
    out += post_title;
    if (variant == InputVariant::comment_post) return out;
    if (created_at <= 0) throw input_error("build_input: creation time missing");
    out += kFieldSeparator;
    out += iso8601_utc(created_at);
    if (variant == InputVariant::comment_post_time) return out;
    if (author.empty()) throw input_error("build_input: author missing");
    out += kFieldSeparator;
    out += author;
    return out;
}

inline std::string build_input(InputVariant variant, const corpus::Comment& c) {
    return build_input(variant, c.body, c.post_title, c.created_at, c.author);
}

struct PreferenceScore {
    std::string id;
    double value = 0.0;
    InputVariant variant = InputVariant::comment;
};

// --- Pairwise binary accuracy -----------------------------------------------------

struct BinaryAccuracy {
    double value = std::numeric_limits<double>::quiet_NaN();
    std::size_t used = 0;           // pairs entering the denominator
    std::size_t tied_excluded = 0;  // pairs with tied truths
    bool defined = false;
};

// Fraction of pairs whose predicted ordering matches the true ordering.
// Pairs with tied truths carry no ordering information and are excluded; a
// tied prediction on an untied truth counts as wrong.
inline BinaryAccuracy binary_accuracy(const std::map<std::string, double>& scores,
                                      const std::map<std::string, double>& truths,
                                      const std::vector<std::pair<std::string, std::string>>& pairs) {
    auto fetch = [](const std::map<std::string, double>& m, const std::string& id) {
        auto it = m.find(id);
        if (it == m.end()) {
            throw std::invalid_argument("binary_accuracy: id '" + id + "' not present");
        }
        return it->second;
    };
    BinaryAccuracy out;
    std::size_t correct = 0;
    for (const auto& [i, j] : pairs) {
        const double truth_gap = fetch(truths, i) - fetch(truths, j);
        if (truth_gap == 0.0) {
            ++out.tied_excluded;
            continue;
        }
        const double score_gap = fetch(scores, i) - fetch(scores, j);
        ++out.used;
        if ((truth_gap > 0.0 && score_gap > 0.0) || (truth_gap < 0.0 && score_gap < 0.0)) {
            ++correct;
        }
    }
    if (out.used > 0) {
        out.defined = true;
        out.value = static_cast<double>(correct) / static_cast<double>(out.used);
    }
    return out;
}

// --- z-scoring --------------------------------------------------------------------

struct ZscoreResult {
    std::vector<PreferenceScore> scores;
    bool degenerate = false;  // zero sample sd; all outputs forced to 0
    double mean = 0.0;
    double sd = 0.0;
};

// Standardizes with the sample sd over the given population (one community
// and run). Constant populations are degenerate: outputs are zeroed.
inline ZscoreResult zscore(const std::vector<PreferenceScore>& scores) {
    if (scores.size() < 2) throw std::invalid_argument("zscore: need at least 2 scores");
    std::vector<double> values;
    values.reserve(scores.size());
    for (const auto& s : scores) values.push_back(s.value);
    ZscoreResult out;
    out.mean = stats::mean(values);
    out.sd = stats::stddev(values);
    out.scores = scores;
    if (out.sd == 0.0) {
        out.degenerate = true;
        for (auto& s : out.scores) s.value = 0.0;
        return out;
    }
    for (auto& s : out.scores) s.value = (s.value - out.mean) / out.sd;
    return out;
}

// --- Distilled deltas ---------------------------------------------------------------

struct PreferenceDelta {
    std::string origin_id;
    std::string synthetic_id;
    Dimension dimension = Dimension::formality;
    double d_phi = 0.0;  // normness delta, in [-1, 1]
    double d_psi = 0.0;  // preference delta, standardized when batch-built
};

// Standardization applied to a preference delta: the difference of z-scores
// reduces to the raw difference over the population sd.
struct Standardization {
    double sd = 1.0;
};

// Scores origin and rewrite with identical context (the origin's title,
// timestamp, and author) and takes the deltas. The rewrite must have passed
// the full filter pipeline.
inline PreferenceDelta preference_delta(const corpus::Comment& origin,
                                        const simulation::SyntheticComment& rewrite,
                                        double phi_origin, double phi_rewrite,
                                        gateway::PreferenceBackend& backend, InputVariant variant,
                                        const Standardization& standardization = {}) {
    if (!rewrite.kept()) {
        throw std::invalid_argument("preference_delta: rewrite " + rewrite.id +
                                    " did not pass all filters");
    }
    if (rewrite.origin_id != origin.comment_id) {
        throw std::invalid_argument("preference_delta: rewrite " + rewrite.id +
                                    " does not originate from " + origin.comment_id);
    }
    const std::string origin_input = build_input(variant, origin);
    const std::string rewrite_input =
        build_input(variant, rewrite.text, origin.post_title, origin.created_at, origin.author);
    const double psi_origin = backend.score(origin_input);
    const double psi_rewrite = backend.score(rewrite_input);
    PreferenceDelta d;
    d.origin_id = origin.comment_id;
    d.synthetic_id = rewrite.id;
    d.dimension = rewrite.dimension;
    d.d_phi = phi_rewrite - phi_origin;
    d.d_psi = (psi_rewrite - psi_origin) / standardization.sd;
    return d;
}

struct BatchDeltas {
    std::vector<PreferenceDelta> deltas;  // sorted by synthetic id
    std::size_t skipped = 0;              // rewrites without origin, phi, or filter pass
    bool degenerate = false;              // constant score population
};

// Builds deltas for every eligible rewrite, z-scoring preferences over the
// pooled population of this call (originals plus eligible rewrites). Callers
// group inputs per community before calling.
inline BatchDeltas build_deltas(const std::vector<corpus::Comment>& origins,
                                const std::vector<simulation::SyntheticComment>& rewrites,
                                const std::map<std::string, double>& phi,
                                gateway::PreferenceBackend& backend, InputVariant variant) {
    std::map<std::string, const corpus::Comment*> by_id;
    for (const auto& o : origins) by_id[o.comment_id] = &o;

    BatchDeltas out;
    std::vector<const simulation::SyntheticComment*> eligible;
    for (const auto& r : rewrites) {
        if (!r.kept() || by_id.find(r.origin_id) == by_id.end() ||
            phi.find(r.id) == phi.end() || phi.find(r.origin_id) == phi.end()) {
            ++out.skipped;
            continue;
        }
        eligible.push_back(&r);
    }
    if (eligible.empty()) return out;

    // Score the pooled population once.
    std::map<std::string, double> psi;
    for (const auto& [id, origin] : by_id) psi[id] = backend.score(build_input(variant, *origin));
    for (const auto* r : eligible) {
        const auto& origin = *by_id.at(r->origin_id);
        psi[r->id] = backend.score(
            build_input(variant, r->text, origin.post_title, origin.created_at, origin.author));
    }
    std::vector<double> population;
    population.reserve(psi.size());
    for (const auto& [id, value] : psi) population.push_back(value);
    const double sd = population.size() >= 2 ? stats::stddev(population) : 0.0;
    out.degenerate = sd == 0.0;

    std::sort(eligible.begin(), eligible.end(),
              [](const auto* a, const auto* b) { return a->id < b->id; });
    for (const auto* r : eligible) {
        PreferenceDelta d;
        d.origin_id = r->origin_id;
        d.synthetic_id = r->id;
        d.dimension = r->dimension;
        d.d_phi = phi.at(r->id) - phi.at(r->origin_id);
        d.d_psi = out.degenerate ? 0.0 : (psi.at(r->id) - psi.at(r->origin_id)) / sd;
        out.deltas.push_back(std::move(d));
    }
    return out;
}

// --- Serialization ----------------------------------------------------------------

inline nlohmann::json delta_to_json(const PreferenceDelta& d) {
    return nlohmann::json{{"origin_id", d.origin_id},
                          {"synthetic_id", d.synthetic_id},
                          {"dimension", dimension_name(d.dimension)},
                          {"d_phi", d.d_phi},
                          {"d_psi", d.d_psi}};
}

inline PreferenceDelta delta_from_json(const nlohmann::json& j) {
    PreferenceDelta d;
    d.origin_id = j.at("origin_id").get<std::string>();
    d.synthetic_id = j.at("synthetic_id").get<std::string>();
    d.dimension = parse_dimension(j.at("dimension").get<std::string>());
    d.d_phi = j.at("d_phi").get<double>();
    d.d_psi = j.at("d_psi").get<double>();
    return d;
}

}  // namespace valuescope::preference

#endif  // VALUESCOPE_PREFERENCE_HPP_
