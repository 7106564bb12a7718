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
// Continuous normness scales: stratified Likert sampling, pair sampling,
// pairwise labeling, win-rate aggregation, the verbosity scale, and
// annotation-agreement statistics.

#ifndef VALUESCOPE_NORMNESS_HPP_
#define VALUESCOPE_NORMNESS_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "valuescope/corpus.hpp"
#include "valuescope/dimensions.hpp"
#include "valuescope/gateway.hpp"
#include "valuescope/stats.hpp"
#include "valuescope/util.hpp"

namespace valuescope::normness {

struct LikertRating {
    std::string comment_id;
    std::string community;
    Dimension dimension = Dimension::formality;
    int rating = 0;  // 1..5
};

// beta = 1 means the second comment was judged higher on the dimension.
// Labels are stored with ids in canonical (first < second) order; one label
// per judged pair instance, duplicates form a multiset.
struct PairwiseLabel {
    std::string first;
    std::string second;
    Dimension dimension = Dimension::formality;
    int beta = 0;
};

struct ComparisonGraph {
    Dimension dimension = Dimension::formality;
    std::vector<std::string> comments;  // sorted, unique
    std::vector<PairwiseLabel> labels;
    std::map<std::string, std::size_t> comparisons;
};

struct NormnessScore {
    std::string comment_id;
    Dimension dimension = Dimension::formality;
    double value = 0.0;  // win rate in [0, 1]
    std::size_t comparisons = 0;
    bool reliable = false;
};

struct StratumShortfall {
    std::string community;
    int scale = 0;
    std::size_t requested = 0;
    std::size_t available = 0;
};

struct StratifiedSample {
    std::vector<std::string> ids;
    std::vector<StratumShortfall> shortfalls;
};

// Draws at most k comment ids per (community, scale point) stratum, without
// replacement, deterministically for a given seed and independent of the
// input ordering.
inline StratifiedSample stratified_sample(const std::vector<LikertRating>& ratings,
                                          std::size_t k_per_scale, std::uint64_t seed) {
    if (k_per_scale == 0) {
        throw std::invalid_argument("stratified_sample: k_per_scale must be positive");
    }
    std::map<std::pair<std::string, int>, std::set<std::string>> strata;
    for (const auto& r : ratings) {
        if (r.rating < 1 || r.rating > 5) {
            throw std::invalid_argument("stratified_sample: rating outside 1..5 for comment " +
                                        r.comment_id);
        }
        strata[{r.community, r.rating}].insert(r.comment_id);
    }
    StratifiedSample out;
    for (const auto& [key, members] : strata) {
        std::vector<std::string> pool(members.begin(), members.end());
        if (pool.size() <= k_per_scale) {
            if (pool.size() < k_per_scale) {
                out.shortfalls.push_back({key.first, key.second, k_per_scale, pool.size()});
            }
            out.ids.insert(out.ids.end(), pool.begin(), pool.end());
            continue;
        }
        Rng rng(derive_seed(seed, key.first + "#" + std::to_string(key.second)));
        auto chosen = rng.sample_without_replacement(pool, k_per_scale);
        std::sort(chosen.begin(), chosen.end());
        out.ids.insert(out.ids.end(), chosen.begin(), chosen.end());
    }
    return out;
}

// m distinct unordered pairs over the given comments, each stored with
// lexicographically smaller id first. Rejection sampling while the budget is
// sparse, full enumeration otherwise.
inline std::vector<std::pair<std::string, std::string>> sample_pairs(
    const std::vector<std::string>& comments, std::size_t m, std::uint64_t seed) {
    std::vector<std::string> ids(comments);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const std::size_t n = ids.size();
    const std::size_t total = n < 2 ? 0 : n * (n - 1) / 2;
    if (m > total) {
        throw std::invalid_argument("sample_pairs: requested " + std::to_string(m) +
                                    " pairs but only " + std::to_string(total) + " exist");
    }
    std::vector<std::pair<std::string, std::string>> out;
    if (m == 0) return out;
    Rng rng(seed);
    if (m * 2 > total) {
        std::vector<std::pair<std::string, std::string>> all;
        all.reserve(total);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a + 1; b < n; ++b) all.push_back({ids[a], ids[b]});
        }
        return rng.sample_without_replacement(all, m);
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    out.reserve(m);
    while (out.size() < m) {
        std::size_t a = rng.uniform_index(n);
        std::size_t b = rng.uniform_index(n);
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        if (seen.insert({a, b}).second) out.push_back({ids[a], ids[b]});
    }
    return out;
}

// Builds the judge context for a pair of comment ids, in presentation order.
using ContextLookup =
    std::function<gateway::JudgeContext(const std::string&, const std::string&)>;

struct LabelingReport {
    std::size_t judged = 0;
    std::size_t dropped = 0;
    // Fraction of distinct judged pairs whose duplicate labels disagree.
    double contradiction_rate = 0.0;
};

namespace detail {

inline double contradiction_rate(const std::vector<PairwiseLabel>& labels) {
    std::map<std::pair<std::string, std::string>, std::pair<bool, bool>> seen;
    for (const auto& l : labels) {
        auto& flags = seen[{l.first, l.second}];
        (l.beta == 1 ? flags.second : flags.first) = true;
    }
    if (seen.empty()) return 0.0;
    std::size_t contradictory = 0;
    for (const auto& [pair, flags] : seen) {
        if (flags.first && flags.second) ++contradictory;
    }
    return static_cast<double>(contradictory) / static_cast<double>(seen.size());
}

}  // namespace detail

// Judges each pair once, with the presentation order coin-flipped per pair to
// cancel position bias. Judges that fail to produce a parsable choice (their
// internal re-ask budget included) drop the pair; drops are counted, not
// fatal. Coin flips are drawn up front so results do not depend on thread
// scheduling.
inline ComparisonGraph label_pairs(
    const std::vector<std::pair<std::string, std::string>>& pairs, Dimension dimension,
    gateway::PairwiseJudge& judge, const ContextLookup& lookup, std::uint64_t seed,
    LabelingReport* report = nullptr, std::size_t threads = 1) {
    std::vector<bool> flipped(pairs.size());
    {
        Rng rng(derive_seed(seed, "pair-orientation"));
        for (std::size_t i = 0; i < pairs.size(); ++i) flipped[i] = rng.bernoulli(0.5);
    }
    std::vector<std::optional<PairwiseLabel>> results(pairs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> dropped{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= pairs.size()) return;
            std::string lo = pairs[i].first;
            std::string hi = pairs[i].second;
            if (hi < lo) std::swap(lo, hi);
            const std::string& shown_first = flipped[i] ? hi : lo;
            const std::string& shown_second = flipped[i] ? lo : hi;
            try {
                auto choice = judge.judge(lookup(shown_first, shown_second));
                const std::string& winner =
                    choice == gateway::PairwiseChoice::first ? shown_first : shown_second;
                results[i] = PairwiseLabel{lo, hi, dimension, winner == hi ? 1 : 0};
            } catch (const parse_error&) {
                dropped.fetch_add(1);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    ComparisonGraph graph;
    graph.dimension = dimension;
    std::set<std::string> members;
    for (const auto& [a, b] : pairs) {
        members.insert(a);
        members.insert(b);
    }
    graph.comments.assign(members.begin(), members.end());
    for (auto& slot : results) {
        if (!slot.has_value()) continue;
        graph.comparisons[slot->first] += 1;
        graph.comparisons[slot->second] += 1;
        graph.labels.push_back(std::move(*slot));
    }
    if (report) {
        report->judged = graph.labels.size();
        report->dropped = dropped.load();
        report->contradiction_rate = detail::contradiction_rate(graph.labels);
    }
    return graph;
}

struct WinRateResult {
    std::vector<NormnessScore> scores;        // sorted by comment id
    std::vector<std::string> excluded;        // members with zero comparisons
};

// Win rate per comment: wins / comparisons over the label multiset. With a
// complete noiseless label set this reduces to rank / (n - 1). Comments with
// fewer than min_comparisons labels keep their score but are not reliable.
inline WinRateResult win_rate(const ComparisonGraph& graph, std::size_t min_comparisons = 30) {
    std::set<std::string> members(graph.comments.begin(), graph.comments.end());
    std::map<std::string, std::size_t> wins;
    std::map<std::string, std::size_t> comps;
    for (const auto& l : graph.labels) {
        if (members.count(l.first) == 0 || members.count(l.second) == 0) {
            throw std::invalid_argument("win_rate: label references non-member comment");
        }
        comps[l.first] += 1;
        comps[l.second] += 1;
        wins[l.beta == 1 ? l.second : l.first] += 1;
    }
    WinRateResult out;
    for (const auto& id : members) {
        auto it = comps.find(id);
        if (it == comps.end()) {
            out.excluded.push_back(id);
            continue;
        }
        NormnessScore s;
        s.comment_id = id;
        s.dimension = graph.dimension;
        s.comparisons = it->second;
        s.value = static_cast<double>(wins[id]) / static_cast<double>(it->second);
        s.reliable = it->second >= min_comparisons;
        out.scores.push_back(std::move(s));
    }
    return out;
}

// Verbosity is scaled directly from character counts: each comment's win rate
// against every other comment, with ties credited half a win.
inline std::vector<NormnessScore> verbosity_scale(const std::vector<corpus::Comment>& comments) {
    std::vector<std::pair<std::string, std::size_t>> lengths;
    lengths.reserve(comments.size());
    for (const auto& c : comments) lengths.push_back({c.comment_id, c.body.size()});
    std::sort(lengths.begin(), lengths.end());
    const std::size_t n = lengths.size();
    std::vector<NormnessScore> out;
    out.reserve(n);
    for (const auto& [id, len] : lengths) {
        double credit = 0.0;
        for (const auto& [other_id, other_len] : lengths) {
            if (other_id == id) continue;
            if (other_len < len) {
                credit += 1.0;
            } else if (other_len == len) {
                credit += 0.5;
            }
        }
        NormnessScore s;
        s.comment_id = id;
        s.dimension = Dimension::verbosity;
        s.comparisons = n - 1;
        s.value = n > 1 ? credit / static_cast<double>(n - 1) : 0.5;
        s.reliable = n > 1;
        out.push_back(std::move(s));
    }
    return out;
}

// Majority vote over an odd number of categorical annotations. Items whose
// majority is "hard-to-tell" or "media-needed", or that have no strict
// majority, are discarded (nullopt).
inline std::optional<std::string> majority_label(const std::vector<std::string>& votes) {
    if (votes.empty() || votes.size() % 2 == 0) {
        throw std::invalid_argument("majority_label: vote count must be odd");
    }
    std::map<std::string, std::size_t> counts;
    for (const auto& v : votes) counts[v] += 1;
    for (const auto& [category, count] : counts) {
        if (2 * count > votes.size()) {
            if (category == "hard-to-tell" || category == "media-needed") return std::nullopt;
            return category;
        }
    }
    return std::nullopt;
}

struct KappaResult {
    double kappa = 0.0;
    bool degenerate = false;
};

// Fleiss's kappa with the degenerate case flagged: when every vote in the
// table lands in one category, expected agreement is 1 and kappa is
// undefined.
inline KappaResult agreement_kappa(const std::vector<std::vector<double>>& rows) {
    std::size_t nonzero_categories = 0;
    if (!rows.empty()) {
        for (std::size_t cat = 0; cat < rows.front().size(); ++cat) {
            double total = 0.0;
            for (const auto& row : rows) {
                if (cat < row.size()) total += row[cat];
            }
            if (total > 0.0) ++nonzero_categories;
        }
    }
    if (nonzero_categories <= 1) {
        return {std::numeric_limits<double>::quiet_NaN(), true};
    }
    return {stats::fleiss_kappa(rows), false};
}

// Line-object serialization for graphs and scores.

inline nlohmann::json score_to_json(const NormnessScore& s) {
    return nlohmann::json{{"comment_id", s.comment_id},
                          {"dimension", dimension_name(s.dimension)},
                          {"value", s.value},
                          {"comparisons", s.comparisons},
                          {"reliable", s.reliable}};
}

inline NormnessScore score_from_json(const nlohmann::json& j) {
    NormnessScore s;
    s.comment_id = j.at("comment_id").get<std::string>();
    s.dimension = parse_dimension(j.at("dimension").get<std::string>());
    s.value = j.at("value").get<double>();
    s.comparisons = j.at("comparisons").get<std::size_t>();
    s.reliable = j.at("reliable").get<bool>();
    return s;
}

inline nlohmann::json graph_to_json(const ComparisonGraph& g) {
    nlohmann::json labels = nlohmann::json::array();
    for (const auto& l : g.labels) {
        labels.push_back({{"first", l.first}, {"second", l.second}, {"beta", l.beta}});
    }
    return nlohmann::json{{"dimension", dimension_name(g.dimension)},
                          {"comments", g.comments},
                          {"labels", labels}};
}

inline ComparisonGraph graph_from_json(const nlohmann::json& j) {
    ComparisonGraph g;
    g.dimension = parse_dimension(j.at("dimension").get<std::string>());
    g.comments = j.at("comments").get<std::vector<std::string>>();
    for (const auto& l : j.at("labels")) {
        PairwiseLabel label;
        label.first = l.at("first").get<std::string>();
        label.second = l.at("second").get<std::string>();
        label.dimension = g.dimension;
        label.beta = l.at("beta").get<int>();
        g.labels.push_back(std::move(label));
        g.comparisons[g.labels.back().first] += 1;
        g.comparisons[g.labels.back().second] += 1;
    }
    return g;
}

}  // namespace valuescope::normness

#endif  // VALUESCOPE_NORMNESS_HPP_
