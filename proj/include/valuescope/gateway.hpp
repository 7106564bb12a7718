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
// Model gateway: every external model interaction sits behind the narrow
// backend interfaces here. Prompt templates render from text assets, model
// replies go through strict parsers, transient failures retry with
// exponential backoff, and spend is estimated from per-token prices.

#ifndef VALUESCOPE_GATEWAY_HPP
#define VALUESCOPE_GATEWAY_HPP

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "valuescope/dimensions.hpp"
#include "valuescope/io.hpp"
#include "valuescope/util.hpp"

namespace valuescope::gateway {

// --- Prompt templates -------------------------------------------------------

// Slots appear in template bodies as [NAME] (uppercase, may contain digits,
// '_' or '-') or as {{NAME}} (uppercase words). Bare "[]" or "{1}" literals
// in instruction text are not slots.
struct PromptTemplate {
    std::string name;
    std::string body;
    std::vector<std::string> slots;  // slot names without marker syntax
    std::optional<Dimension> dimension;

    static PromptTemplate from_text(std::string name, std::string body) {
        PromptTemplate t;
        t.name = std::move(name);
        t.body = std::move(body);
        static const std::regex kBracket(R"(\[([A-Z][A-Z0-9_-]*)\])");
        static const std::regex kBrace(R"(\{\{([A-Z][A-Z ]*[A-Z])\}\})");
        for (auto it = std::sregex_iterator(t.body.begin(), t.body.end(), kBracket);
             it != std::sregex_iterator(); ++it) {
            std::string slot = (*it)[1].str();
            if (std::find(t.slots.begin(), t.slots.end(), slot) == t.slots.end()) {
                t.slots.push_back(slot);
            }
        }
        for (auto it = std::sregex_iterator(t.body.begin(), t.body.end(), kBrace);
             it != std::sregex_iterator(); ++it) {
            std::string slot = (*it)[1].str();
            if (std::find(t.slots.begin(), t.slots.end(), slot) == t.slots.end()) {
                t.slots.push_back(slot);
            }
        }
        return t;
    }

    static PromptTemplate load(const std::filesystem::path& path) {
        return from_text(path.stem().string(), io::read_file(path));
    }
};

inline std::string render_prompt(const PromptTemplate& tmpl,
                                 const std::map<std::string, std::string>& bindings) {
    for (const auto& slot : tmpl.slots) {
        if (bindings.find(slot) == bindings.end()) {
            throw config_error("missing slot " + slot + " for template " + tmpl.name);
        }
    }
    std::string out = tmpl.body;
    for (const auto& slot : tmpl.slots) {
        const std::string& value = bindings.at(slot);
        for (const std::string& marker : {"[" + slot + "]", "{{" + slot + "}}"}) {
            std::size_t pos = 0;
            while ((pos = out.find(marker, pos)) != std::string::npos) {
                out.replace(pos, marker.size(), value);
                pos += value.size();
            }
        }
    }
    return out;
}

// --- Exchange bookkeeping ----------------------------------------------------

struct ChatExchange {
    std::string request;
    double temperature = 0.2;
    std::string response;
    double input_tokens = 0.0;
    double output_tokens = 0.0;
    bool tokens_estimated = false;  // endpoint did not report usage
    int attempts = 1;
};

struct PriceSheet {
    double input_price = 0.0;   // USD per 1,000,000 input tokens
    double output_price = 0.0;  // USD per 1,000,000 output tokens
};

inline double estimate_cost(double input_tokens, double output_tokens, const PriceSheet& price) {
    if (input_tokens < 0 || output_tokens < 0) {
        throw std::invalid_argument("token counts must be non-negative");
    }
    if (price.input_price < 0 || price.output_price < 0) {
        throw std::invalid_argument("prices must be non-negative");
    }
    return input_tokens * price.input_price / 1e6 + output_tokens * price.output_price / 1e6;
}

// --- Retry -------------------------------------------------------------------

struct BackoffSchedule {
    std::chrono::milliseconds initial{200};
    double multiplier = 2.0;
    std::chrono::milliseconds cap{10000};
};

// Calls attempt() until it succeeds or retries are exhausted. Only retryable
// transport errors are retried; auth failures and malformed-request errors
// surface immediately. sleep is injectable so tests run without waiting.
template <typename F>
ChatExchange complete_with_retry(
    F&& attempt, int max_retries, const BackoffSchedule& backoff = {},
    const std::function<void(std::chrono::milliseconds)>& sleep =
        [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (max_retries < 0) throw std::invalid_argument("max_retries must be >= 0");
    std::chrono::milliseconds delay = backoff.initial;
    for (int attempt_no = 1;; ++attempt_no) {
        try {
            ChatExchange ex = attempt();
            ex.attempts = attempt_no;
            return ex;
        } catch (const transport_error& e) {
            if (!e.retryable || attempt_no > max_retries) {
                throw transport_error(std::string("retries exhausted: ") + e.what(),
                                      e.retryable);
            }
            sleep(delay);
            auto next = std::chrono::milliseconds(
                static_cast<std::int64_t>(static_cast<double>(delay.count()) *
                                          backoff.multiplier));
            delay = std::min(next, backoff.cap);
        }
    }
}

// --- Response parsers ----------------------------------------------------------

// First bracketed integer in the reply; the rating convention puts it in
// square brackets anywhere in the text.
inline int parse_likert(const std::string& response) {
    static const std::regex kRating(R"(\[\s*([0-9]+)\s*\])");
    std::smatch m;
    if (!std::regex_search(response, m, kRating)) {
        throw parse_error("no bracketed rating in reply");
    }
    int rating = std::stoi(m[1].str());
    if (rating < 1 || rating > 5) {
        throw parse_error("rating " + m[1].str() + " outside 1..5");
    }
    return rating;
}

enum class PairwiseChoice { first, second };

// The judging convention asks for "{1}" or "{2}" at the very start of the
// reply (leading whitespace tolerated).
inline PairwiseChoice parse_pairwise(const std::string& response) {
    std::size_t i = response.find_first_not_of(" \t\r\n");
    if (i == std::string::npos || i + 2 >= response.size() || response[i] != '{' ||
        response[i + 2] != '}') {
        throw parse_error("reply does not start with {1} or {2}");
    }
    char c = response[i + 1];
    if (c == '1') return PairwiseChoice::first;
    if (c == '2') return PairwiseChoice::second;
    throw parse_error("reply does not start with {1} or {2}");
}

// --- Backend contracts ----------------------------------------------------------

struct RatingContext {
    Dimension dimension = Dimension::formality;
    std::string post_title;
    std::string post_description;
    std::string comment;
};

struct JudgeContext {
    Dimension dimension = Dimension::formality;
    std::string title1, description1, comment1;
    std::string title2, description2, comment2;
};

struct RewriteContext {
    Dimension dimension = Dimension::formality;
    int level = 3;  // 1..5
    std::string post_title;
    std::string comment;
};

class LikertRater {
public:
    virtual ~LikertRater() = default;
    virtual int rate(const RatingContext& ctx) = 0;
};

class PairwiseJudge {
public:
    virtual ~PairwiseJudge() = default;
    virtual PairwiseChoice judge(const JudgeContext& ctx) = 0;
};

class RewriteGenerator {
public:
    virtual ~RewriteGenerator() = default;
    virtual std::string rewrite(const RewriteContext& ctx) = 0;
};

class PerplexityScorer {
public:
    virtual ~PerplexityScorer() = default;
    virtual double perplexity(const std::string& text) = 0;
};

class SimilarityScorer {
public:
    virtual ~SimilarityScorer() = default;
    virtual double similarity(const std::string& a, const std::string& b) = 0;
};

class PreferenceBackend {
public:
    virtual ~PreferenceBackend() = default;
    virtual double score(const std::string& input) = 0;
};

// --- Self-consistency voting -----------------------------------------------------

// k-sample majority vote over a categorical sampler; first-reached count wins
// ties so the result is deterministic for deterministic samplers. k = 1
// disables voting (the default configuration).
template <typename T, typename F>
T self_consistent_vote(int k, F&& sample) {
    if (k < 1) throw std::invalid_argument("vote count must be >= 1");
    std::vector<std::pair<T, int>> counts;
    for (int i = 0; i < k; ++i) {
        T v = sample();
        bool found = false;
        for (auto& [value, n] : counts) {
            if (value == v) {
                ++n;
                found = true;
                break;
            }
        }
        if (!found) counts.emplace_back(std::move(v), 1);
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < counts.size(); ++i) {
        if (counts[i].second > counts[best].second) best = i;
    }
    return counts[best].first;
}

// --- Remote chat backend ----------------------------------------------------------

struct RemoteConfig {
    std::string endpoint;  // e.g. "http://localhost:8080/v1/chat/completions"
    std::string model;
    double temperature = 0.2;
    std::string api_key_env = "VALUESCOPE_API_KEY";
    int max_retries = 3;
    int max_in_flight = 4;
    BackoffSchedule backoff;
};

// Whitespace-token fallback when the endpoint omits usage accounting.
inline double approximate_tokens(const std::string& text) {
    std::istringstream in(text);
    std::string tok;
    double n = 0;
    while (in >> tok) ++n;
    return n;
}

namespace detail {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // /v1/...
};

inline SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw config_error("endpoint missing scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace detail

// Chat-completion HTTP client. The concrete HTTP call is injected so unit
// tests can exercise retry/parse logic without sockets; the default
// implementation lives in gateway_http.hpp to keep this header light.
class ChatClient {
public:
    // Transport maps a JSON request body plus credential to
    // (HTTP status, response body).
    using Transport = std::function<std::pair<int, std::string>(const std::string& body,
                                                                const std::string& api_key)>;

    ChatClient(RemoteConfig config, Transport transport)
        : config_(std::move(config)),
          transport_(std::move(transport)),
          in_flight_(std::min(config_.max_in_flight, 64)) {
        if (config_.max_in_flight <= 0 || config_.max_in_flight > 64) {
            throw config_error("max_in_flight must be in 1..64");
        }
        const char* key = std::getenv(config_.api_key_env.c_str());
        api_key_ = key ? key : "";
    }

    bool has_credential() const { return !api_key_.empty(); }
    const RemoteConfig& config() const { return config_; }

    ChatExchange complete(const std::string& system_prompt, const std::string& user_prompt) {
        if (api_key_.empty()) {
            throw auth_error("credential not set; export " + config_.api_key_env);
        }
        nlohmann::json payload;
        payload["model"] = config_.model;
        payload["temperature"] = config_.temperature;
        payload["messages"] = nlohmann::json::array();
        if (!system_prompt.empty()) {
            payload["messages"].push_back({{"role", "system"}, {"content", system_prompt}});
        }
        payload["messages"].push_back({{"role", "user"}, {"content", user_prompt}});
        const std::string body = payload.dump();

        auto attempt = [&]() -> ChatExchange {
            in_flight_.acquire();
            std::pair<int, std::string> reply;
            try {
                reply = transport_(body, api_key_);
            } catch (...) {
                in_flight_.release();
                throw;
            }
            in_flight_.release();
            return parse_reply(body, reply.first, reply.second);
        };
        return complete_with_retry(attempt, config_.max_retries, config_.backoff);
    }

    // Cumulative usage across all completed exchanges, for spend reports.
    std::pair<double, double> token_totals() const {
        std::lock_guard<std::mutex> lock(usage_mutex_);
        return {total_input_tokens_, total_output_tokens_};
    }

    double total_cost(const PriceSheet& price) const {
        auto [in, out] = token_totals();
        return estimate_cost(in, out, price);
    }

private:
    ChatExchange parse_reply(const std::string& request, int status, const std::string& body) {
        if (status == 401 || status == 403) {
            throw auth_error("endpoint rejected credential (HTTP " + std::to_string(status) +
                             ")");
        }
        if (status == 429 || status >= 500) {
            throw transport_error("transient HTTP " + std::to_string(status), true);
        }
        if (status != 200) {
            throw transport_error("HTTP " + std::to_string(status) + ": " + body, false);
        }
        nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
        if (j.is_discarded()) throw transport_error("malformed JSON reply", false);
        ChatExchange ex;
        ex.request = request;
        ex.temperature = config_.temperature;
        try {
            ex.response = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw transport_error("reply missing choices[0].message.content", false);
        }
        if (j.contains("usage")) {
            ex.input_tokens = j["usage"].value("prompt_tokens", 0.0);
            ex.output_tokens = j["usage"].value("completion_tokens", 0.0);
        } else {
            ex.input_tokens = approximate_tokens(request);
            ex.output_tokens = approximate_tokens(ex.response);
            ex.tokens_estimated = true;
        }
        {
            std::lock_guard<std::mutex> lock(usage_mutex_);
            total_input_tokens_ += ex.input_tokens;
            total_output_tokens_ += ex.output_tokens;
        }
        return ex;
    }

    RemoteConfig config_;
    Transport transport_;
    std::counting_semaphore<64> in_flight_;
    std::string api_key_;
    mutable std::mutex usage_mutex_;
    double total_input_tokens_ = 0.0;
    double total_output_tokens_ = 0.0;
};

// --- Prompt assets and chat-backed adapters -----------------------------------

inline std::filesystem::path default_asset_dir() {
#ifdef VALUESCOPE_ASSET_DIR
    return VALUESCOPE_ASSET_DIR;
#else
    return "assets";
#endif
}

inline std::string to_upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

// Five-level rating definition block shipped per rewritable dimension.
inline std::string rating_definitions_text(
    Dimension dim, const std::filesystem::path& asset_dir = default_asset_dir()) {
    const auto& info = dimension_info(dim);
    const std::string name = dimension_name(dim);
    if (!info.rewritable) {
        throw config_error("no rating definitions for dimension " + name);
    }
    return io::read_file(asset_dir / "prompts" / "rating_definitions" / (name + ".txt"));
}

// "MORE FORMAL or (LESS CASUAL)" style comparative phrase.
inline std::string pairwise_phrase(Dimension dim) {
    const auto& info = dimension_info(dim);
    return "MORE " + to_upper(std::string(info.pole_high)) + " or (LESS " +
           to_upper(std::string(info.pole_low)) + ")";
}

// Placeholder few-shot bindings derived from the dimension poles. Production
// configurations override these with curated examples; the structure (three
// worked examples with answers) is what the template requires.
inline std::map<std::string, std::string> default_pairwise_examples(Dimension dim) {
    const auto& info = dimension_info(dim);
    const std::string high(info.pole_high);
    const std::string low(info.pole_low);
    std::map<std::string, std::string> b;
    for (int k = 1; k <= 3; ++k) {
        std::string p = "EXAMPLE" + std::to_string(k) + "_";
        b[p + "TITLE1"] = "Example post " + std::to_string(k);
        b[p + "DESCRIPTION1"] = "Example description " + std::to_string(k);
        b[p + "TITLE2"] = "Example post " + std::to_string(k);
        b[p + "DESCRIPTION2"] = "Example description " + std::to_string(k);
        bool first_higher = (k % 2 == 1);
        b[p + "COMMENT1"] =
            "A comment that reads as distinctly " + (first_higher ? high : low) + ".";
        b[p + "COMMENT2"] =
            "A comment that reads as distinctly " + (first_higher ? low : high) + ".";
        b[p + "ANSWER"] = std::string(first_higher ? "\"{1}\"." : "\"{2}\".") + " COMMENT" +
                          (first_higher ? "1" : "2") + " is more " + high +
                          " than the other comment.";
    }
    return b;
}

class ChatLikertRater : public LikertRater {
public:
    ChatLikertRater(ChatClient& client, std::filesystem::path asset_dir = default_asset_dir(),
                    int ask_budget = 2)
        : client_(client), asset_dir_(std::move(asset_dir)), ask_budget_(ask_budget) {
        template_ = PromptTemplate::load(asset_dir_ / "prompts" / "likert_rating.txt");
    }

    int rate(const RatingContext& ctx) override {
        const auto& info = dimension_info(ctx.dimension);
        std::map<std::string, std::string> b;
        b["DIMENSION"] = to_upper(dimension_name(ctx.dimension));
        b["DIMENSION-5POINT-LIKERT-SCALE"] = rating_definitions_text(ctx.dimension, asset_dir_);
        b["TITLE"] = ctx.post_title;
        b["DESCRIPTION"] = ctx.post_description;
        b["COMMENT"] = ctx.comment;
        const std::string prompt = render_prompt(template_, b);
        return ask_with_budget<int>(ask_budget_, [&] {
            return parse_likert(client_.complete("", prompt).response);
        });
    }

private:
    template <typename T, typename F>
    static T ask_with_budget(int budget, F&& ask) {
        for (int attempt = 1;; ++attempt) {
            try {
                return ask();
            } catch (const parse_error&) {
                if (attempt >= budget) throw;
            }
        }
    }

    ChatClient& client_;
    std::filesystem::path asset_dir_;
    int ask_budget_;
    PromptTemplate template_;
};

class ChatPairwiseJudge : public PairwiseJudge {
public:
    ChatPairwiseJudge(ChatClient& client, std::filesystem::path asset_dir = default_asset_dir(),
                      int ask_budget = 2, int vote_k = 1)
        : client_(client),
          asset_dir_(std::move(asset_dir)),
          ask_budget_(ask_budget),
          vote_k_(vote_k) {
        template_ = PromptTemplate::load(asset_dir_ / "prompts" / "pairwise_judge.txt");
    }

    // Curated few-shot examples override the pole-derived defaults.
    void set_examples(std::map<std::string, std::string> bindings) {
        examples_ = std::move(bindings);
    }

    PairwiseChoice judge(const JudgeContext& ctx) override {
        const auto& info = dimension_info(ctx.dimension);
        std::map<std::string, std::string> b =
            examples_.empty() ? default_pairwise_examples(ctx.dimension) : examples_;
        b["DIMENSION"] = to_upper(dimension_name(ctx.dimension));
        b["DIMENSION_PAIRWISE"] = pairwise_phrase(ctx.dimension);
        b["DIMENSION_DEFINITION"] = rating_definitions_text(ctx.dimension, asset_dir_);
        b["TITLE1"] = ctx.title1;
        b["DESCRIPTION1"] = ctx.description1;
        b["COMMENT1"] = ctx.comment1;
        b["TITLE2"] = ctx.title2;
        b["DESCRIPTION2"] = ctx.description2;
        b["COMMENT2"] = ctx.comment2;
        const std::string prompt = render_prompt(template_, b);
        auto one_vote = [&]() -> PairwiseChoice {
            for (int attempt = 1;; ++attempt) {
                try {
                    return parse_pairwise(client_.complete("", prompt).response);
                } catch (const parse_error&) {
                    if (attempt >= ask_budget_) throw;
                }
            }
        };
        return self_consistent_vote<PairwiseChoice>(vote_k_, one_vote);
    }

private:
    ChatClient& client_;
    std::filesystem::path asset_dir_;
    int ask_budget_;
    int vote_k_;  // 1 = self-consistency off
    PromptTemplate template_;
    std::map<std::string, std::string> examples_;
};

class ChatRewriteGenerator : public RewriteGenerator {
public:
    explicit ChatRewriteGenerator(ChatClient& client,
                                  std::filesystem::path asset_dir = default_asset_dir())
        : client_(client), asset_dir_(std::move(asset_dir)) {
        template_ = PromptTemplate::load(asset_dir_ / "prompts" / "rewrite.txt");
    }

    std::string rewrite(const RewriteContext& ctx) override {
        const auto& info = dimension_info(ctx.dimension);
        if (!info.rewritable) {
            throw std::invalid_argument("dimension " + dimension_name(ctx.dimension) +
                                        " is measured, not rewritten");
        }
        if (ctx.level < 1 || ctx.level > 5) {
            throw std::invalid_argument("rewrite level outside 1..5");
        }
        std::map<std::string, std::string> b;
        b["RATING DEFINITION"] = rating_definitions_text(ctx.dimension, asset_dir_);
        b["LIKERT SCALE NORMNESS"] = std::string(info.level_phrases[ctx.level - 1]);
        b["NORM DIMENSION"] = dimension_name(ctx.dimension);
        b["POST TITLE"] = ctx.post_title;
        b["COMMENT BODY"] = ctx.comment;
        return client_.complete("", render_prompt(template_, b)).response;
    }

private:
    ChatClient& client_;
    std::filesystem::path asset_dir_;
    PromptTemplate template_;
};

}  // namespace valuescope::gateway

#endif  // VALUESCOPE_GATEWAY_HPP
