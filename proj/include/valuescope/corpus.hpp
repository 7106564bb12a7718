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
// Community dump ingestion: line-object parsing, preprocessing exclusions,
// first-level comment extraction, and calendar time binning.

#ifndef VALUESCOPE_CORPUS_HPP
#define VALUESCOPE_CORPUS_HPP

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "valuescope/util.hpp"

namespace valuescope::corpus {

constexpr std::int64_t kSecondsPerDay = 86400;

struct RawPost {
    std::string post_id;
    std::string community;
    std::string author;
    std::string title;
    std::string body;
    std::int64_t created_at = 0;  // unix seconds, > 0
    bool has_media = false;
};

struct RawComment {
    std::string comment_id;
    std::string parent_id;
    std::string post_id;
    std::string community;
    std::string author;
    std::string body;
    std::int64_t created_at = 0;
    std::int64_t retrieved_at = 0;  // 0 = unknown; falls back to scrape time
    std::int64_t net_votes = 0;     // upvotes minus downvotes
    bool edited = false;
    bool deleted = false;
};

// A comment that survived every preprocessing exclusion. parent_id always
// equals post_id (first-level only).
struct Comment {
    std::string comment_id;
    std::string parent_id;
    std::string post_id;
    std::string community;
    std::string author;
    std::string body;
    std::int64_t created_at = 0;
    std::int64_t retrieved_at = 0;
    std::int64_t net_votes = 0;
    std::string post_title;
    // Data-partition tag ("" = unassigned). Simulation seeds must come from
    // the partition not used to train the preference backend.
    std::string partition;
};

struct TimeBin {
    std::int64_t start = 0;  // inclusive, unix seconds
    std::int64_t end = 0;    // exclusive
    // Decimal-year midpoint tag: Jan-Jun 2020 -> 2020.25, Jul-Dec -> 2020.75.
    double label = 0.0;

    bool operator<(const TimeBin& o) const { return start < o.start; }
    bool operator==(const TimeBin& o) const { return start == o.start && end == o.end; }
};

struct ParseResult {
    std::vector<RawPost> posts;
    std::vector<RawComment> comments;
    std::size_t skipped = 0;
};

struct PreprocessReport {
    std::size_t input = 0;
    std::size_t kept = 0;
    std::size_t dropped_deleted = 0;
    std::size_t dropped_edited = 0;
    std::size_t dropped_late_reply = 0;      // created > 1 day after the post
    std::size_t dropped_fresh_retrieval = 0; // retrieved/scraped < 1 day after creation
    std::size_t dropped_url_only = 0;
    std::size_t dropped_media_post = 0;
    std::size_t dropped_not_first_level = 0;
    std::size_t dropped_unresolved_post = 0;
};

namespace detail {

// Dump ids carry type prefixes (t1_ comment, t3_ post); strip them so
// first-level comments satisfy parent_id == post_id.
inline std::string strip_thing_prefix(std::string id) {
    if (id.size() > 3 && id[0] == 't' && id[2] == '_' && (id[1] == '1' || id[1] == '3')) {
        return id.substr(3);
    }
    return id;
}

inline std::string get_string(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) return {};
    return it->get<std::string>();
}

inline std::int64_t get_int(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return 0;
    if (it->is_number()) return it->get<std::int64_t>();
    if (it->is_string()) {
        try {
            return std::stoll(it->get<std::string>());
        } catch (...) {
            return 0;
        }
    }
    return 0;
}

inline bool get_bool(const nlohmann::json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return false;
    if (it->is_boolean()) return it->get<bool>();
    // Dumps encode "edited" as false or an edit timestamp.
    if (it->is_number()) return it->get<double>() != 0.0;
    return false;
}

inline bool is_deleted_sentinel(const std::string& body) {
    return body == "[deleted]" || body == "[removed]";
}

// Single URL token after trimming, nothing else.
inline bool is_url_only(const std::string& body) {
    static const std::regex kUrl(R"(^(https?://|www\.)\S+$)", std::regex::icase);
    return std::regex_match(trim(body), kUrl);
}

inline bool post_has_media(const nlohmann::json& j) {
    if (get_bool(j, "is_video")) return true;
    auto media = j.find("media");
    if (media != j.end() && !media->is_null() &&
        !(media->is_boolean() && !media->get<bool>()))
        return true;
    std::string hint = get_string(j, "post_hint");
    return hint == "image" || hint == "rich:video" || hint == "hosted:video";
}

}  // namespace detail

// Decides whether one dump record is a post or a comment from its fields:
// submissions carry "title", comments carry "parent_id"/"body".
inline ParseResult parse_dump(std::istream& lines) {
    if (!lines.good() && !lines.eof()) throw input_error("unreadable dump stream");
    ParseResult out;
    std::string line;
    while (std::getline(lines, line)) {
        if (trim(line).empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            ++out.skipped;
            continue;
        }
        std::string id = detail::get_string(j, "id");
        std::int64_t created = detail::get_int(j, "created_utc");
        if (j.contains("title")) {
            RawPost p;
            p.post_id = detail::strip_thing_prefix(id);
            p.community = detail::get_string(j, "subreddit");
            p.author = detail::get_string(j, "author");
            p.title = detail::get_string(j, "title");
            p.body = detail::get_string(j, "selftext");
            p.created_at = created;
            p.has_media = detail::post_has_media(j);
            if (p.post_id.empty() || p.created_at <= 0) {
                ++out.skipped;
                continue;
            }
            out.posts.push_back(std::move(p));
        } else if (j.contains("parent_id") || j.contains("body")) {
            RawComment c;
            c.comment_id = detail::strip_thing_prefix(id);
            c.parent_id = detail::strip_thing_prefix(detail::get_string(j, "parent_id"));
            c.post_id = detail::strip_thing_prefix(detail::get_string(j, "link_id"));
            c.community = detail::get_string(j, "subreddit");
            c.author = detail::get_string(j, "author");
            c.body = detail::get_string(j, "body");
            c.created_at = created;
            c.retrieved_at = detail::get_int(j, "retrieved_on");
            if (c.retrieved_at == 0) c.retrieved_at = detail::get_int(j, "retrieved_utc");
            c.net_votes = detail::get_int(j, "score");
            c.edited = detail::get_bool(j, "edited");
            c.deleted = detail::is_deleted_sentinel(c.body);
            if (c.comment_id.empty()) {
                ++out.skipped;
                continue;
            }
            out.comments.push_back(std::move(c));
        } else {
            ++out.skipped;
        }
    }
    return out;
}

// Applies every exclusion predicate and keeps first-level comments only.
// scrape_time substitutes for a missing per-comment retrieval timestamp.
inline std::vector<Comment> preprocess(const std::vector<RawComment>& comments,
                                       const std::vector<RawPost>& posts,
                                       std::int64_t scrape_time,
                                       PreprocessReport* report = nullptr) {
    PreprocessReport local;
    PreprocessReport& rep = report ? *report : local;
    rep = PreprocessReport{};
    rep.input = comments.size();

    if (!comments.empty()) {
        std::int64_t min_created = comments.front().created_at;
        for (const auto& c : comments) min_created = std::min(min_created, c.created_at);
        if (scrape_time < min_created) {
            throw config_error("scrape_time precedes every comment creation time");
        }
    }

    std::unordered_map<std::string, const RawPost*> post_index;
    post_index.reserve(posts.size());
    for (const auto& p : posts) post_index[p.post_id] = &p;

    std::vector<Comment> kept;
    kept.reserve(comments.size());
    for (const auto& c : comments) {
        auto it = post_index.find(c.post_id);
        if (it == post_index.end()) {
            ++rep.dropped_unresolved_post;
            continue;
        }
        const RawPost& post = *it->second;
        if (c.deleted) {
            ++rep.dropped_deleted;
            continue;
        }
        if (c.edited) {
            ++rep.dropped_edited;
            continue;
        }
        if (c.parent_id != c.post_id) {
            ++rep.dropped_not_first_level;
            continue;
        }
        if (c.created_at - post.created_at > kSecondsPerDay) {
            ++rep.dropped_late_reply;
            continue;
        }
        std::int64_t retrieval = c.retrieved_at > 0 ? c.retrieved_at : scrape_time;
        if (retrieval - c.created_at < kSecondsPerDay) {
            ++rep.dropped_fresh_retrieval;
            continue;
        }
        if (detail::is_url_only(c.body)) {
            ++rep.dropped_url_only;
            continue;
        }
        if (post.has_media) {
            ++rep.dropped_media_post;
            continue;
        }
        Comment out;
        out.comment_id = c.comment_id;
        out.parent_id = c.parent_id;
        out.post_id = c.post_id;
        out.community = c.community;
        out.author = c.author;
        out.body = c.body;
        out.created_at = c.created_at;
        out.retrieved_at = c.retrieved_at;
        out.net_votes = c.net_votes;
        out.post_title = post.title;
        kept.push_back(std::move(out));
    }
    std::sort(kept.begin(), kept.end(),
              [](const Comment& a, const Comment& b) { return a.comment_id < b.comment_id; });
    rep.kept = kept.size();
    return kept;
}

// Second pass over already-clean comments is the identity; lets pipelines
// re-validate inputs arriving from files.
inline std::vector<Comment> preprocess(const std::vector<Comment>& comments,
                                       std::int64_t scrape_time,
                                       PreprocessReport* report = nullptr) {
    std::vector<RawComment> raw;
    std::vector<RawPost> posts;
    raw.reserve(comments.size());
    std::unordered_map<std::string, bool> seen_post;
    for (const auto& c : comments) {
        RawComment rc;
        rc.comment_id = c.comment_id;
        rc.parent_id = c.parent_id;
        rc.post_id = c.post_id;
        rc.community = c.community;
        rc.author = c.author;
        rc.body = c.body;
        rc.created_at = c.created_at;
        rc.retrieved_at = c.retrieved_at;
        rc.net_votes = c.net_votes;
        raw.push_back(std::move(rc));
        if (!seen_post[c.post_id]) {
            seen_post[c.post_id] = true;
            RawPost p;
            p.post_id = c.post_id;
            p.community = c.community;
            p.title = c.post_title;
            p.created_at = c.created_at > 0 ? c.created_at : 1;  // comment is never older
            posts.push_back(std::move(p));
        }
    }
    auto kept = preprocess(raw, posts, scrape_time, report);
    // Restore fields the round trip cannot carry.
    std::unordered_map<std::string, const Comment*> by_id;
    for (const auto& c : comments) by_id[c.comment_id] = &c;
    for (auto& k : kept) {
        auto it = by_id.find(k.comment_id);
        if (it != by_id.end()) {
            k.post_title = it->second->post_title;
            k.partition = it->second->partition;
        }
    }
    return kept;
}

namespace detail {

inline int month_index(const CivilDate& cd) { return cd.year * 12 + (cd.month - 1); }

}  // namespace detail

// Calendar bins of width_months, aligned to the origin date. With the
// default width 6 and a January origin, boundaries sit on half-year edges.
inline std::map<TimeBin, std::vector<Comment>> time_bin(const std::vector<Comment>& comments,
                                                        int width_months,
                                                        const CivilDate& origin) {
    if (width_months <= 0 || 12 % width_months != 0) {
        throw config_error("bin width must divide 12 months");
    }
    std::map<TimeBin, std::vector<Comment>> bins;
    if (comments.empty()) return bins;

    const int origin_index = origin.year * 12 + (origin.month - 1);
    int lo_bin = 0;
    int hi_bin = 0;
    bool first = true;
    std::vector<int> bin_of(comments.size());
    for (std::size_t i = 0; i < comments.size(); ++i) {
        CivilDate cd = civil_from_unix(comments[i].created_at);
        int delta = detail::month_index(cd) - origin_index;
        if (delta < 0) throw config_error("origin must precede the earliest comment");
        int b = delta / width_months;
        bin_of[i] = b;
        if (first || b < lo_bin) lo_bin = b;
        if (first || b > hi_bin) hi_bin = b;
        first = false;
    }

    auto make_bin = [&](int b) {
        int start_months = origin_index + b * width_months;
        int end_months = start_months + width_months;
        int sy = start_months / 12;
        int sm = start_months % 12;
        int ey = end_months / 12;
        int em = end_months % 12;
        TimeBin bin;
        bin.start = unix_seconds_from_civil(sy, sm + 1, 1);
        bin.end = unix_seconds_from_civil(ey, em + 1, 1);
        bin.label = sy + (sm + width_months / 2.0) / 12.0;
        return bin;
    };

    // Cover the corpus range contiguously, including empty interior bins.
    for (int b = lo_bin; b <= hi_bin; ++b) bins[make_bin(b)] = {};
    for (std::size_t i = 0; i < comments.size(); ++i) {
        bins[make_bin(bin_of[i])].push_back(comments[i]);
    }
    for (auto& [bin, list] : bins) {
        std::sort(list.begin(), list.end(),
                  [](const Comment& a, const Comment& b) { return a.comment_id < b.comment_id; });
    }
    return bins;
}

inline std::map<TimeBin, std::vector<Comment>> time_bin(const std::vector<Comment>& comments) {
    CivilDate origin{1970, 1, 1};
    return time_bin(comments, 6, origin);
}

}  // namespace valuescope::corpus

#endif  // VALUESCOPE_CORPUS_HPP
