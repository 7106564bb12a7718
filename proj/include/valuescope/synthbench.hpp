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
// Planted-truth synthetic communities with oracle backends, so the whole
// pipeline (labeling, win rates, rewriting, filtering, preference deltas,
// return-potential curves) can be verified offline against known ground truth.

#ifndef VALUESCOPE_SYNTHBENCH_HPP_
#define VALUESCOPE_SYNTHBENCH_HPP_

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "valuescope/corpus.hpp"
#include "valuescope/dimensions.hpp"
#include "valuescope/gateway.hpp"
#include "valuescope/normness.hpp"
#include "valuescope/preference.hpp"
#include "valuescope/rpm.hpp"
#include "valuescope/simulation.hpp"
#include "valuescope/stats.hpp"
#include "valuescope/util.hpp"

namespace valuescope::synthbench {

// --- Response curves ----------------------------------------------------------------

enum class ResponseKind { linear, unimodal };

// Parametric community response to a normness delta on [-1, 1]. Linear is
// slope * d; unimodal is a Gaussian bump centered at `peak` with scale `width`.
struct ResponseCurve {
    ResponseKind kind = ResponseKind::linear;
    double slope = 1.0;
    double peak = 0.0;
    double width = 0.2;

    double operator()(double d) const {
        if (kind == ResponseKind::linear) return slope * d;
        double z = (d - peak) / width;
        return std::exp(-0.5 * z * z);
    }
};

// Midpoint rule over [lo, hi]; enough resolution for a sign.
inline double response_integral(const ResponseCurve& g, double lo, double hi,
                                std::size_t steps = 1000) {
    if (!(hi > lo)) throw std::invalid_argument("response_integral: empty range");
    double w = (hi - lo) / static_cast<double>(steps);
    double acc = 0.0;
    for (std::size_t i = 0; i < steps; ++i) acc += g(lo + (static_cast<double>(i) + 0.5) * w);
    return acc * w;
}

// --- World configuration ----------------------------------------------------------------

struct WorldConfig {
    std::size_t n_comments = 500;
    ResponseCurve response;
    double sigma = 0.0;    // preference vote noise sd
    double epsilon = 0.0;  // judge error rate, must stay below chance
    std::string community = "synthetic";
    Dimension dimension = Dimension::supportiveness;
};

struct PlantedWorld {
    std::uint64_t seed = 0;
    WorldConfig config;
    std::vector<corpus::Comment> comments;
    std::map<std::string, double> phi_star;  // id -> true normness in [0, 1]
};

// Target normness planted by the oracle generator for each rewrite level.
inline double level_midpoint(int level) {
    if (level < 1 || level > 5) throw std::invalid_argument("level_midpoint: level must be 1..5");
    return (2.0 * level - 1.0) / 10.0;
}

namespace detail {

// Whitespace-separated token starting with `prefix`; the remainder parses as a
// double. `id=` never collides with `d=` because matching is per token.
inline std::optional<double> parse_tagged(const std::string& text, std::string_view prefix) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j - i > prefix.size() && text.compare(i, prefix.size(), prefix) == 0) {
            try {
                return std::stod(text.substr(i + prefix.size(), j - i - prefix.size()));
            } catch (const std::exception&) {
                return std::nullopt;
            }
        }
        i = j;
    }
    return std::nullopt;
}

inline std::string parse_tagged_string(const std::string& text, std::string_view prefix) {
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t j = i;
        while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
        if (j - i > prefix.size() && text.compare(i, prefix.size(), prefix) == 0) {
            return text.substr(i + prefix.size(), j - i - prefix.size());
        }
        i = j;
    }
    return {};
}

inline std::string fixed9(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9f", v);
    return buf;
}

}  // namespace detail

// --- Oracle backends ----------------------------------------------------------------

// Reads the planted phi token from each presented text and answers correctly
// with probability 1 - epsilon. The flip draw is keyed by the unordered text
// pair, so presentation order and scheduling cannot change the verdict, and
// raising epsilon only adds flips on top of those drawn at a lower epsilon.
class OraclePairwiseJudge final : public gateway::PairwiseJudge {
public:
    OraclePairwiseJudge(std::uint64_t seed, double epsilon) : seed_(seed), epsilon_(epsilon) {}

    gateway::PairwiseChoice judge(const gateway::JudgeContext& ctx) override {
        auto p1 = detail::parse_tagged(ctx.comment1, "phi=");
        auto p2 = detail::parse_tagged(ctx.comment2, "phi=");
        if (!p1 || !p2) throw parse_error("planted phi token missing");
        gateway::PairwiseChoice correct = *p1 > *p2 ? gateway::PairwiseChoice::first
                                                    : gateway::PairwiseChoice::second;
        const std::string& lo = std::min(ctx.comment1, ctx.comment2);
        const std::string& hi = std::max(ctx.comment1, ctx.comment2);
        double u = Rng(derive_seed(seed_, "flip|" + lo + "|" + hi)).uniform01();
        if (u < epsilon_) {
            ++flips;
            return correct == gateway::PairwiseChoice::first ? gateway::PairwiseChoice::second
                                                             : gateway::PairwiseChoice::first;
        }
        return correct;
    }

    std::atomic<std::size_t> flips{0};

private:
    std::uint64_t seed_;
    double epsilon_;
};

// Emits a structured rewrite whose planted normness is the level midpoint and
// which carries the delta from its origin for the preference oracle.
class OracleRewriteGenerator final : public gateway::RewriteGenerator {
public:
    std::string rewrite(const gateway::RewriteContext& ctx) override {
        auto phi = detail::parse_tagged(ctx.comment, "phi=");
        if (!phi) throw parse_error("planted phi token missing");
        std::string id = detail::parse_tagged_string(ctx.comment, "id=");
        double m = level_midpoint(ctx.level);
        return "synth-rewrite of=" + id + " lvl=" + std::to_string(ctx.level) +
               " phi=" + detail::fixed9(m) + " d=" + detail::fixed9(m - *phi);
    }
};

// Scores g(planted delta) plus deterministic noise keyed by the text; origin
// texts carry no delta token and score zero, so a rewrite-minus-origin
// difference recovers g(delta) + N(0, sigma^2) exactly.
class OraclePreferenceBackend final : public gateway::PreferenceBackend {
public:
    OraclePreferenceBackend(ResponseCurve curve, double sigma, std::uint64_t seed)
        : curve_(curve), sigma_(sigma), seed_(seed) {}

    double score(const std::string& input) override {
        auto d = detail::parse_tagged(input, "d=");
        if (!d) return 0.0;
        double noise =
            sigma_ > 0.0 ? Rng(derive_seed(seed_, "psi|" + input)).normal(0.0, sigma_) : 0.0;
        return curve_(*d) + noise;
    }

private:
    ResponseCurve curve_;
    double sigma_;
    std::uint64_t seed_;
};

class ConstantPerplexity final : public gateway::PerplexityScorer {
public:
    explicit ConstantPerplexity(double value = 100.0) : value_(value) {}
    double perplexity(const std::string&) override { return value_; }

private:
    double value_;
};

class ConstantSimilarity final : public gateway::SimilarityScorer {
public:
    explicit ConstantSimilarity(double value = 1.0) : value_(value) {}
    double similarity(const std::string&, const std::string&) override { return value_; }

private:
    double value_;
};

struct PlantedBundle {
    PlantedWorld world;
    std::unique_ptr<OraclePairwiseJudge> judge;
    std::unique_ptr<OracleRewriteGenerator> generator;
    std::unique_ptr<OraclePreferenceBackend> preference;
    std::unique_ptr<ConstantPerplexity> perplexity;
    std::unique_ptr<ConstantSimilarity> similarity;
};

// --- World construction ----------------------------------------------------------------

inline PlantedBundle plant_world(const WorldConfig& config, std::uint64_t seed) {
    if (config.n_comments < 2) throw std::invalid_argument("plant_world: need at least 2 comments");
    if (config.epsilon < 0.0 || config.epsilon >= 0.5) {
        throw std::invalid_argument("plant_world: epsilon must lie in [0, 0.5)");
    }
    if (config.sigma < 0.0) throw std::invalid_argument("plant_world: sigma must be non-negative");
    if (config.response.kind == ResponseKind::unimodal && config.response.width <= 0.0) {
        throw std::invalid_argument("plant_world: unimodal response needs positive width");
    }
    if (!dimension_info(config.dimension).rewritable) {
        throw std::invalid_argument("plant_world: dimension " +
                                    dimension_name(config.dimension) +
                                    " is measured, not rewritten");
    }

    PlantedBundle bundle;
    bundle.world.seed = seed;
    bundle.world.config = config;

    Rng phi_rng(derive_seed(seed, "phi-star"));
    Rng meta_rng(derive_seed(seed, "metadata"));
    int width = 1;
    for (std::size_t v = config.n_comments; v >= 10; v /= 10) ++width;

    for (std::size_t i = 0; i < config.n_comments; ++i) {
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "s%0*zu", width, i);
        // Round through the serialized form so the text and the map agree.
        double phi = std::stod(detail::fixed9(phi_rng.uniform01()));

        corpus::Comment c;
        c.comment_id = idbuf;
        c.post_id = "p" + std::to_string(i / 50);
        c.community = config.community;
        c.author = "voice-" + std::to_string(meta_rng.uniform_index(97));
        c.post_title = "planted thread " + std::to_string(i / 50);
        c.created_at = 1577836800 + static_cast<std::int64_t>(i) * 3600;
        c.retrieved_at = c.created_at + 86400;
        c.net_votes = static_cast<std::int64_t>(meta_rng.uniform_index(56)) - 5;
        c.body = std::string("synth id=") + idbuf + " phi=" + detail::fixed9(phi) + " tok" +
                 std::to_string(meta_rng.uniform_index(1000));

        bundle.world.phi_star[c.comment_id] = phi;
        bundle.world.comments.push_back(std::move(c));
    }

    bundle.judge = std::make_unique<OraclePairwiseJudge>(seed, config.epsilon);
    bundle.generator = std::make_unique<OracleRewriteGenerator>();
    bundle.preference =
        std::make_unique<OraclePreferenceBackend>(config.response, config.sigma, seed);
    bundle.perplexity = std::make_unique<ConstantPerplexity>();
    bundle.similarity = std::make_unique<ConstantSimilarity>();
    return bundle;
}

// --- Comparison schedule ----------------------------------------------------------------

// `rounds` shuffles, adjacent comments paired within each round, so every
// comment collects exactly `rounds` comparisons when the world is even-sized
// (the odd comment out of a round sits that round out).
inline std::vector<std::pair<std::string, std::string>> comparison_schedule(
    const PlantedWorld& world, std::size_t rounds) {
    if (rounds == 0) throw std::invalid_argument("comparison_schedule: rounds must be positive");
    std::vector<std::string> ids;
    for (const auto& c : world.comments) ids.push_back(c.comment_id);
    std::sort(ids.begin(), ids.end());

    std::vector<std::pair<std::string, std::string>> pairs;
    pairs.reserve(rounds * (ids.size() / 2));
    for (std::size_t r = 0; r < rounds; ++r) {
        Rng rng(derive_seed(world.seed, "round#" + std::to_string(r)));
        rng.shuffle(ids);
        for (std::size_t i = 0; i + 1 < ids.size(); i += 2) {
            const std::string& a = ids[i];
            const std::string& b = ids[i + 1];
            pairs.emplace_back(std::min(a, b), std::max(a, b));
        }
    }
    return pairs;
}

// --- Spearman rank correlation ----------------------------------------------------------------

inline std::vector<double> average_ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size(), 0.0);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

struct SpearmanResult {
    double value = std::numeric_limits<double>::quiet_NaN();
    bool defined = false;  // false when either vector is constant
};

// Pearson correlation of rank vectors, average ranks on ties.
inline SpearmanResult spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("spearman: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("spearman: need at least 2 observations");
    std::vector<double> rx = average_ranks(x);
    std::vector<double> ry = average_ranks(y);
    double mx = stats::mean(rx);
    double my = stats::mean(ry);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    SpearmanResult out;
    if (sxx == 0.0 || syy == 0.0) return out;
    out.value = sxy / std::sqrt(sxx * syy);
    out.defined = true;
    return out;
}

// --- Recovery evaluation ----------------------------------------------------------------

struct RecoveryOptions {
    std::size_t rounds = 30;
    std::size_t min_comparisons = 30;
    int n_bins = 10;
    std::size_t min_bin_count = 50;
    preference::InputVariant variant = preference::InputVariant::comment;
    std::size_t threads = 1;
};

struct RecoveryReport {
    double spearman = std::numeric_limits<double>::quiet_NaN();
    bool spearman_defined = false;
    int pmr_bin_error = 0;
    bool prd_sign_match = false;
    double prd = 0.0;
    int pmr_bin = -1;
    int expected_bin = -1;
    std::size_t reliable_scores = 0;
    std::size_t delta_count = 0;
    double contradiction_rate = 0.0;
    std::size_t judge_flips = 0;
};

// Compares pipeline outputs against the planted truth. Both stage outputs are
// required; a missing one names the stage that has not run.
inline RecoveryReport recovery_report(
    const PlantedWorld& world,
    const std::optional<std::map<std::string, normness::NormnessScore>>& scores,
    const std::optional<rpm::RpmCurve>& curve) {
    if (!scores) throw input_error("recovery_report: winrate stage output missing");
    if (!curve) throw input_error("recovery_report: rpm stage output missing");

    RecoveryReport out;

    std::vector<double> recovered;
    std::vector<double> truth;
    for (const auto& [id, score] : *scores) {
        if (!score.reliable) continue;
        auto it = world.phi_star.find(id);
        if (it == world.phi_star.end()) continue;
        recovered.push_back(score.value);
        truth.push_back(it->second);
    }
    out.reliable_scores = recovered.size();
    SpearmanResult sp = spearman(recovered, truth);
    out.spearman = sp.value;
    out.spearman_defined = sp.defined;

    const ResponseCurve& g = world.config.response;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < curve->bins.size(); ++i) {
        const auto& b = curve->bins[i];
        double v = g((b.lo + b.hi) / 2.0);
        if (v > best) {
            best = v;
            out.expected_bin = static_cast<int>(i);
        }
    }
    rpm::RpmBin peak = rpm::pmr(*curve);
    for (std::size_t i = 0; i < curve->bins.size(); ++i) {
        if (curve->bins[i].lo == peak.lo && curve->bins[i].hi == peak.hi) {
            out.pmr_bin = static_cast<int>(i);
        }
    }
    out.pmr_bin_error = std::abs(out.pmr_bin - out.expected_bin);

    out.prd = rpm::prd(*curve);
    double reference = 0.0;
    for (const auto& b : curve->bins) {
        if (b.reliable) reference += response_integral(g, b.lo, b.hi, 100);
    }
    double tol = 1e-12;
    out.prd_sign_match = (out.prd > tol && reference > tol) ||
                         (out.prd < -tol && reference < -tol) ||
                         (std::abs(out.prd) <= tol && std::abs(reference) <= tol);
    return out;
}

// Full offline pass: schedule, label, score, rewrite, filter, delta, curve,
// then the recovery comparison. Origin normness is the recovered win rate;
// rewrite normness is the planted level midpoint.
inline RecoveryReport run_recovery(const PlantedBundle& bundle, const RecoveryOptions& options) {
    const PlantedWorld& world = bundle.world;
    auto schedule = comparison_schedule(world, options.rounds);

    std::map<std::string, const corpus::Comment*> by_id;
    for (const auto& c : world.comments) by_id[c.comment_id] = &c;
    auto lookup = [&](const std::string& a, const std::string& b) {
        gateway::JudgeContext ctx;
        ctx.dimension = world.config.dimension;
        const corpus::Comment* ca = by_id.at(a);
        const corpus::Comment* cb = by_id.at(b);
        ctx.title1 = ca->post_title;
        ctx.comment1 = ca->body;
        ctx.title2 = cb->post_title;
        ctx.comment2 = cb->body;
        return ctx;
    };

    normness::LabelingReport label_report;
    normness::ComparisonGraph graph =
        normness::label_pairs(schedule, world.config.dimension, *bundle.judge, lookup,
                              derive_seed(world.seed, "labeling"), &label_report, options.threads);
    normness::WinRateResult wr = normness::win_rate(graph, options.min_comparisons);

    simulation::PipelineBackends backends;
    backends.generator = bundle.generator.get();
    backends.perplexity = bundle.perplexity.get();
    backends.similarity = bundle.similarity.get();
    simulation::PipelineConfig pipe_config;
    pipe_config.dimension = world.config.dimension;
    simulation::PipelineResult pipeline =
        simulation::run_pipeline(world.comments, backends, pipe_config, simulation::LexicalRules{});

    std::map<std::string, double> phi;
    std::map<std::string, normness::NormnessScore> score_map;
    for (const auto& s : wr.scores) {
        score_map[s.comment_id] = s;
        if (s.reliable) phi[s.comment_id] = s.value;
    }
    for (const auto& rw : pipeline.kept) phi[rw.id] = level_midpoint(rw.target_level);

    preference::BatchDeltas batch = preference::build_deltas(world.comments, pipeline.kept, phi,
                                                             *bundle.preference, options.variant);
    rpm::RpmCurve curve = rpm::build_curve(batch.deltas, options.n_bins, options.min_bin_count,
                                           world.config.community);

    RecoveryReport report = recovery_report(world, score_map, curve);
    report.delta_count = batch.deltas.size();
    report.contradiction_rate = label_report.contradiction_rate;
    report.judge_flips = bundle.judge->flips.load();
    return report;
}

// --- Serialization ----------------------------------------------------------------

inline nlohmann::json report_to_json(const RecoveryReport& r) {
    return nlohmann::json{{"spearman", r.spearman},
                          {"spearman_defined", r.spearman_defined},
                          {"pmr_bin_error", r.pmr_bin_error},
                          {"prd_sign_match", r.prd_sign_match},
                          {"prd", r.prd},
                          {"pmr_bin", r.pmr_bin},
                          {"expected_bin", r.expected_bin},
                          {"reliable_scores", r.reliable_scores},
                          {"delta_count", r.delta_count},
                          {"contradiction_rate", r.contradiction_rate},
                          {"judge_flips", r.judge_flips}};
}

inline RecoveryReport report_from_json(const nlohmann::json& j) {
    RecoveryReport r;
    // NaN serializes as null.
    if (!j.at("spearman").is_null()) r.spearman = j.at("spearman").get<double>();
    r.spearman_defined = j.at("spearman_defined").get<bool>();
    r.pmr_bin_error = j.at("pmr_bin_error").get<int>();
    r.prd_sign_match = j.at("prd_sign_match").get<bool>();
    r.prd = j.at("prd").get<double>();
    r.pmr_bin = j.at("pmr_bin").get<int>();
    r.expected_bin = j.at("expected_bin").get<int>();
    r.reliable_scores = j.at("reliable_scores").get<std::size_t>();
    r.delta_count = j.at("delta_count").get<std::size_t>();
    r.contradiction_rate = j.at("contradiction_rate").get<double>();
    r.judge_flips = j.at("judge_flips").get<std::size_t>();
    return r;
}

}  // namespace valuescope::synthbench

#endif  // VALUESCOPE_SYNTHBENCH_HPP_
