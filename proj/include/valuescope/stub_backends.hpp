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
// Deterministic offline backends. Every pipeline stage can run without a
// network using these; they are intentionally simple but order- and
// seed-stable so full runs reproduce byte-for-byte.

#ifndef VALUESCOPE_STUB_BACKENDS_HPP
#define VALUESCOPE_STUB_BACKENDS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "valuescope/dimensions.hpp"
#include "valuescope/gateway.hpp"
#include "valuescope/util.hpp"

namespace valuescope::stubs {

// Character-count rater: longer comments land higher on the scale. Crude,
// but monotone and deterministic, which is what offline tests need.
class LengthLikertRater : public gateway::LikertRater {
public:
    int rate(const gateway::RatingContext& ctx) override {
        std::size_t n = ctx.comment.size();
        if (n < 20) return 1;
        if (n < 40) return 2;
        if (n < 80) return 3;
        if (n < 160) return 4;
        return 5;
    }
};

namespace detail {

inline std::vector<std::string> tokens_lower(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'') {
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

struct Lexicon {
    std::vector<std::string> high;  // markers of the high pole
    std::vector<std::string> low;   // markers of the low pole
};

inline const Lexicon& lexicon_for(Dimension dim) {
    static const Lexicon kFormality{
        {"please", "thank", "appreciate", "regards", "sincerely", "furthermore", "however",
         "therefore", "would", "kindly"},
        {"lol", "lmao", "tbh", "gonna", "wanna", "ty", "u", "r", "idk", "omg", "btw", "dude"}};
    static const Lexicon kPoliteness{
        {"please", "thank", "thanks", "appreciate", "sorry", "welcome", "kindly", "perhaps",
         "maybe", "suggest"},
        {"shut", "stupid", "idiot", "dumb", "fuck", "hate", "worst", "garbage", "trash",
         "loser"}};
    static const Lexicon kSupportiveness{
        {"great", "love", "helpful", "support", "encourage", "proud", "wonderful", "glad",
         "congrats", "awesome"},
        {"hate", "awful", "terrible", "pathetic", "worthless", "ugly", "failure", "stupid",
         "wrong", "inferior"}};
    static const Lexicon kSarcasm{
        {"obviously", "surely", "genius", "brilliant", "totally", "riiight", "wow", "shocker",
         "clearly", "congratulations"},
        {"honestly", "sincerely", "truly", "genuinely", "earnest", "really", "heartfelt",
         "frankly", "candidly", "straightforward"}};
    static const Lexicon kHumor{
        {"haha", "lol", "lmao", "joke", "funny", "hilarious", "pun", "rofl", "kidding",
         "giggle"},
        {"serious", "seriously", "gravely", "important", "urgent", "concern", "warning",
         "careful", "risk", "danger"}};
    switch (dim) {
        case Dimension::politeness:
            return kPoliteness;
        case Dimension::supportiveness:
            return kSupportiveness;
        case Dimension::sarcasm:
            return kSarcasm;
        case Dimension::humor:
            return kHumor;
        case Dimension::formality:
        case Dimension::verbosity:
            return kFormality;
    }
    return kFormality;
}

}  // namespace detail

// Marker balance of a text along one dimension; verbosity scores by length.
inline double lexicon_score(Dimension dim, const std::string& text) {
    if (dim == Dimension::verbosity) return static_cast<double>(text.size());
    const auto& lex = detail::lexicon_for(dim);
    auto toks = detail::tokens_lower(text);
    double score = 0.0;
    for (const auto& t : toks) {
        if (std::find(lex.high.begin(), lex.high.end(), t) != lex.high.end()) score += 1.0;
        if (std::find(lex.low.begin(), lex.low.end(), t) != lex.low.end()) score -= 1.0;
    }
    return score;
}

// Lexicon-based judge. Ties break on (length, text) so the verdict never
// depends on presentation order.
class LexiconPairwiseJudge : public gateway::PairwiseJudge {
public:
    gateway::PairwiseChoice judge(const gateway::JudgeContext& ctx) override {
        double s1 = lexicon_score(ctx.dimension, ctx.comment1);
        double s2 = lexicon_score(ctx.dimension, ctx.comment2);
        if (s1 != s2) {
            return s1 > s2 ? gateway::PairwiseChoice::first : gateway::PairwiseChoice::second;
        }
        if (ctx.comment1.size() != ctx.comment2.size()) {
            return ctx.comment1.size() > ctx.comment2.size() ? gateway::PairwiseChoice::first
                                                             : gateway::PairwiseChoice::second;
        }
        return ctx.comment1 >= ctx.comment2 ? gateway::PairwiseChoice::first
                                            : gateway::PairwiseChoice::second;
    }
};

// Tags the original with its target level: "[L3] original text". Keeps the
// body intact so content filters see high overlap.
class EchoRewriteGenerator : public gateway::RewriteGenerator {
public:
    std::string rewrite(const gateway::RewriteContext& ctx) override {
        const auto& info = dimension_info(ctx.dimension);
        if (!info.rewritable) {
            throw std::invalid_argument("dimension " + dimension_name(ctx.dimension) +
                                        " is measured, not rewritten");
        }
        if (ctx.level < 1 || ctx.level > 5) {
            throw std::invalid_argument("rewrite level outside 1..5");
        }
        return "[L" + std::to_string(ctx.level) + "] " + ctx.comment;
    }
};

// Pseudo-random but text-pure perplexity: the same text always scores the
// same value, regardless of call order. Values spread uniformly over
// [mean - spread, mean + spread), floored at a small positive number.
class HashNoisePerplexity : public gateway::PerplexityScorer {
public:
    HashNoisePerplexity(std::uint64_t seed, double mean, double spread)
        : seed_(seed), mean_(mean), spread_(spread) {}

    double perplexity(const std::string& text) override {
        std::uint64_t h = fnv1a64(text, seed_ ^ 0x9e3779b97f4a7c15ull);
        double u = static_cast<double>(h >> 11) * 0x1.0p-53;  // [0, 1)
        double ppl = mean_ + spread_ * (2.0 * u - 1.0);
        return std::max(ppl, 1e-6);
    }

private:
    std::uint64_t seed_;
    double mean_;
    double spread_;
};

// Jaccard overlap of lowercase token sets; identical texts score 1.
class TokenOverlapSimilarity : public gateway::SimilarityScorer {
public:
    double similarity(const std::string& a, const std::string& b) override {
        auto ta = detail::tokens_lower(a);
        auto tb = detail::tokens_lower(b);
        std::set<std::string> sa(ta.begin(), ta.end());
        std::set<std::string> sb(tb.begin(), tb.end());
        if (sa.empty() && sb.empty()) return 1.0;
        std::size_t inter = 0;
        for (const auto& t : sa) inter += sb.count(t);
        std::size_t uni = sa.size() + sb.size() - inter;
        return static_cast<double>(inter) / static_cast<double>(uni);
    }
};

// Length-log preference: score = scale * ln(1 + |input|). Monotone in
// length, which makes closed-form delta checks trivial.
class LengthPreferenceBackend : public gateway::PreferenceBackend {
public:
    explicit LengthPreferenceBackend(double scale = 1.0) : scale_(scale) {}

    double score(const std::string& input) override {
        return scale_ * std::log1p(static_cast<double>(input.size()));
    }

private:
    double scale_;
};

}  // namespace valuescope::stubs

#endif  // VALUESCOPE_STUB_BACKENDS_HPP
