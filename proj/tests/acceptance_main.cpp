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
// Release gate: every check below must hold before the library ships. Each
// check prints exactly one PASS/FAIL line; the binary exits nonzero if any
// check fails. Checks with runtime budgets fail when they run over.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "valuescope/cli.hpp"
#include "valuescope/gateway.hpp"
#include "valuescope/normness.hpp"
#include "valuescope/preference.hpp"
#include "valuescope/simulation.hpp"
#include "valuescope/stats.hpp"
#include "valuescope/synthbench.hpp"
#include "valuescope/util.hpp"

namespace vs = valuescope;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail = "") {
    std::printf("%s  check %d: %s%s%s\n", pass ? "PASS" : "FAIL", id, name.c_str(),
                detail.empty() ? "" : " -- ", detail.c_str());
    if (!pass) ++g_failures;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// --- 1: scale ordering matches every planted total order -------------------

bool scale_monotonic_for(const std::vector<int>& latent_rank) {
    const std::size_t n = latent_rank.size();
    vs::normness::ComparisonGraph graph;
    graph.dimension = vs::Dimension::formality;
    for (std::size_t i = 0; i < n; ++i) graph.comments.push_back("c" + std::to_string(i));
    std::sort(graph.comments.begin(), graph.comments.end());
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            vs::normness::PairwiseLabel l;
            l.first = "c" + std::to_string(i);
            l.second = "c" + std::to_string(j);
            if (l.second < l.first) std::swap(l.first, l.second);
            l.dimension = graph.dimension;
            l.beta = latent_rank[j] > latent_rank[i] ? 1 : 0;
            graph.labels.push_back(std::move(l));
        }
    }
    auto result = vs::normness::win_rate(graph, 1);
    // Sort by score; the id sequence must reproduce the latent order.
    std::vector<std::pair<double, std::string>> by_score;
    for (const auto& s : result.scores) by_score.push_back({s.value, s.comment_id});
    std::sort(by_score.begin(), by_score.end());
    for (std::size_t pos = 0; pos < by_score.size(); ++pos) {
        std::size_t idx = std::stoul(by_score[pos].second.substr(1));
        if (latent_rank[idx] != static_cast<int>(pos)) return false;
    }
    return true;
}

void check_monotonicity() {
    auto start = std::chrono::steady_clock::now();
    std::size_t orders = 0;
    bool all_ok = true;
    for (std::size_t n = 2; n <= 8 && all_ok; ++n) {
        std::vector<int> rank(n);
        for (std::size_t i = 0; i < n; ++i) rank[i] = static_cast<int>(i);
        do {
            ++orders;
            if (!scale_monotonic_for(rank)) {
                all_ok = false;
                break;
            }
        } while (std::next_permutation(rank.begin(), rank.end()));
    }
    double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << orders << " total orders in " << elapsed << " s";
    report(1, "win-rate ordering matches every total order (n <= 8)",
           all_ok && elapsed < 5.0, detail.str());
}

// --- 2: win rates equal an independent recount ------------------------------

void check_winrate_oracle() {
    auto start = std::chrono::steady_clock::now();
    vs::Rng rng(vs::derive_seed(20240817, "winrate-oracle"));
    bool all_ok = true;
    for (int trial = 0; trial < 1000 && all_ok; ++trial) {
        std::size_t n = 2 + rng.uniform_index(19);  // 2..20
        vs::normness::ComparisonGraph graph;
        for (std::size_t i = 0; i < n; ++i) graph.comments.push_back("m" + std::to_string(i));
        std::sort(graph.comments.begin(), graph.comments.end());
        std::size_t m = 1 + rng.uniform_index(3 * n);
        std::map<std::string, std::size_t> wins, comps;
        for (std::size_t k = 0; k < m; ++k) {
            std::size_t i = rng.uniform_index(n);
            std::size_t j = rng.uniform_index(n);
            if (i == j) j = (j + 1) % n;
            vs::normness::PairwiseLabel l;
            l.first = "m" + std::to_string(std::min(i, j));
            l.second = "m" + std::to_string(std::max(i, j));
            if (l.second < l.first) std::swap(l.first, l.second);
            l.beta = rng.bernoulli(0.5) ? 1 : 0;
            comps[l.first] += 1;
            comps[l.second] += 1;
            wins[l.beta == 1 ? l.second : l.first] += 1;
            graph.labels.push_back(std::move(l));
        }
        const std::size_t floor = 1 + rng.uniform_index(5);
        auto result = vs::normness::win_rate(graph, floor);
        for (const auto& s : result.scores) {
            const std::size_t c = comps[s.comment_id];
            const double expected =
                static_cast<double>(wins[s.comment_id]) / static_cast<double>(c);
            if (s.value != expected || s.comparisons != c || s.reliable != (c >= floor)) {
                all_ok = false;
                break;
            }
        }
        std::size_t zero_comp = 0;
        for (const auto& id : graph.comments) {
            if (comps.find(id) == comps.end()) ++zero_comp;
        }
        if (result.excluded.size() != zero_comp) all_ok = false;
        if (result.scores.size() + zero_comp != n) all_ok = false;
    }
    double elapsed = seconds_since(start);
    std::ostringstream detail;
    detail << "1000 random partial graphs in " << elapsed << " s";
    report(2, "win rates equal the brute-force recount exactly", all_ok && elapsed < 10.0,
           detail.str());
}

// --- 3: cost estimator -------------------------------------------------------

void check_cost_estimator() {
    double low = vs::gateway::estimate_cost(1349.35, 80.0, {0.50, 1.50});
    double high = vs::gateway::estimate_cost(1088.71, 80.0, {30.0, 60.0});
    bool ok = std::fabs(low - 0.000795) <= 1e-6 && std::fabs(high - 0.0375) <= 1e-4;
    std::ostringstream detail;
    detail << "per-comment estimates $" << low << " and $" << high;
    report(3, "cost estimator reproduces the pinned per-item prices", ok, detail.str());
}

// --- 4: filter pipeline keeps exactly the hand-enumerated set ----------------

void check_filter_determinism() {
    const vs::simulation::FluencyStats stats{2747.0, 6860.0, 60};
    auto rules = vs::simulation::load_lexical_rules(vs::gateway::default_asset_dir());
    const std::string origin = "the archive notes cover the toll registers in careful detail";

    struct TablePerplexity final : vs::gateway::PerplexityScorer {
        std::map<std::string, double> table;
        double perplexity(const std::string& text) override { return table.at(text); }
    } ppl;
    struct TableSimilarity final : vs::gateway::SimilarityScorer {
        std::map<std::string, double> table;
        double similarity(const std::string&, const std::string& b) override {
            return table.at(b);
        }
    } sim;

    std::vector<vs::simulation::SyntheticComment> items;
    for (int i = 0; i < 60; ++i) {
        vs::simulation::SyntheticComment s;
        s.origin_id = "o";
        s.id = "o#L" + std::to_string(i);
        s.target_level = 3;
        s.text = "variant " + std::to_string(i) + " of the archive notes on toll registers";
        if (i == 45) s.text = "As an AI language model I cannot rank toll registers.";
        ppl.table[s.text] = -5000.0 + 250.0 * i;
        sim.table[s.text] = static_cast<double>(i) / 59.0;
        items.push_back(std::move(s));
    }
    // Closed-interval edges: mean - sd and mean + sd both pass.
    ppl.table[items[50].text] = 2747.0 - 6860.0;
    ppl.table[items[51].text] = 2747.0 + 6860.0;
    // Inclusive content threshold: exactly 0.5 passes.
    sim.table[items[29].text] = 0.5;

    std::set<int> kept;
    for (auto& s : items) {
        if (!vs::simulation::lexical_filter(s, origin, rules)) continue;
        s.perplexity = ppl.perplexity(s.text);
        if (!vs::simulation::fluency_filter(s, stats)) continue;
        if (!vs::simulation::content_filter(origin, s, sim, 0.5)) continue;
        kept.insert(std::stoi(s.id.substr(3)));
    }

    // Hand enumeration: fluency admits perplexities in [-4113, 9607], i.e.
    // indices 4..58 plus the two pinned edges; content requires
    // similarity >= 0.5, i.e. indices 30..59 plus pinned index 29; index 45
    // abstains and falls to the lexical stage. Intersection:
    std::set<int> expected;
    for (int i = 29; i <= 58; ++i) {
        if (i != 45) expected.insert(i);
    }
    bool ok = kept == expected;
    std::ostringstream detail;
    detail << kept.size() << " of 60 kept";
    report(4, "filter pipeline keeps exactly the enumerated set", ok, detail.str());
}

// --- 5: synthetic end-to-end recovery ----------------------------------------

void check_synthetic_recovery() {
    auto start = std::chrono::steady_clock::now();
    vs::synthbench::WorldConfig config;
    config.n_comments = 5000;
    config.response = {vs::synthbench::ResponseKind::unimodal, 1.0, 0.7, 0.2};
    config.sigma = 0.5;
    config.epsilon = 0.1;
    auto bundle = vs::synthbench::plant_world(config, 42);

    vs::synthbench::RecoveryOptions options;
    options.rounds = 30;
    options.min_comparisons = 30;
    options.n_bins = 10;
    options.min_bin_count = 50;
    options.threads = std::max(1u, std::thread::hardware_concurrency());
    auto r = vs::synthbench::run_recovery(bundle, options);
    double elapsed = seconds_since(start);

    bool ok = r.spearman_defined && r.spearman >= 0.9 && r.pmr_bin_error <= 1 &&
              r.prd_sign_match && elapsed < 60.0;
    std::ostringstream detail;
    detail << "spearman " << r.spearman << ", peak bin off by " << r.pmr_bin_error << ", prd "
           << r.prd << ", " << elapsed << " s";
    report(5, "planted world recovered end to end (n=5000)", ok, detail.str());
}

// --- 6: statistics oracles ----------------------------------------------------

void check_stats_oracles() {
    bool ok = true;
    std::ostringstream detail;

    auto t = vs::stats::paired_t_test(std::vector<double>{1.0, 2.0, 3.0});
    ok = ok && std::fabs(t.t - 3.4641) <= 1e-4 && t.df == 2.0 &&
         std::fabs(t.p_two_tailed - 0.0742) <= 1e-4;
    detail << "t " << t.t << " p " << t.p_two_tailed;

    std::vector<double> ni, y;
    for (int i = 0; i < 50; ++i) {
        ni.push_back(0.02 * i);
        y.push_back(0.3 * ni.back() + 1.0);
    }
    auto clean = vs::stats::ols({ni}, y);
    ok = ok && std::fabs(clean.coefficients[0] - 1.0) <= 1e-9 &&
         std::fabs(clean.coefficients[1] - 0.3) <= 1e-9 &&
         std::fabs(clean.r_squared - 1.0) <= 1e-9;

    vs::Rng rng(vs::derive_seed(42, "stats-oracle"));
    std::vector<double> ni2, cr2, y2;
    for (int i = 0; i < 200; ++i) {
        ni2.push_back(rng.uniform01());
        cr2.push_back(0.5 + 1.5 * rng.uniform01());
        y2.push_back(0.3 * ni2.back() - 0.1 * cr2.back() + rng.normal(0.0, 0.01));
    }
    auto planted = vs::stats::ols({ni2, cr2}, y2);
    ok = ok && std::fabs(planted.coefficients[1] - 0.3) <= 3.0 * planted.std_errors[1] &&
         std::fabs(planted.coefficients[2] + 0.1) <= 3.0 * planted.std_errors[2];
    detail << "; planted b1 " << planted.coefficients[1] << " b2 " << planted.coefficients[2];

    report(6, "statistics oracles (paired t, clean and planted OLS)", ok, detail.str());
}

// --- 7: binary accuracy is rank-invariant -------------------------------------

void check_rank_invariance() {
    vs::Rng rng(vs::derive_seed(20240817, "rank-invariance"));
    bool all_ok = true;
    for (int trial = 0; trial < 500 && all_ok; ++trial) {
        std::size_t n = 3 + rng.uniform_index(20);
        std::map<std::string, double> scores, truths;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < n; ++i) {
            std::string id = "u" + std::to_string(i);
            ids.push_back(id);
            scores[id] = rng.uniform(-5.0, 5.0);
            // Coarse truths so tied pairs appear regularly.
            truths[id] = std::floor(rng.uniform(0.0, 4.0));
        }
        std::vector<std::pair<std::string, std::string>> pairs;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) pairs.push_back({ids[i], ids[j]});
        }
        auto base = vs::preference::binary_accuracy(scores, truths, pairs);

        const int kind = trial % 3;
        std::map<std::string, double> transformed;
        for (const auto& [id, v] : scores) {
            transformed[id] = kind == 0 ? 3.0 * v + 7.0 : kind == 1 ? std::exp(v)
                                                                    : std::atan(v);
        }
        auto mapped = vs::preference::binary_accuracy(transformed, truths, pairs);
        if (mapped.defined != base.defined || mapped.used != base.used ||
            mapped.tied_excluded != base.tied_excluded) {
            all_ok = false;
        } else if (base.defined && mapped.value != base.value) {
            all_ok = false;
        }
    }
    report(7, "binary accuracy invariant under increasing transforms", all_ok,
           "500 random score maps");
}

// --- 8 and 9: reproducibility and report shape --------------------------------

nlohmann::json desk_config(const fs::path& run_dir) {
    nlohmann::json j;
    j["run_dir"] = run_dir.generic_string();
    j["input_dump"] = std::string(VALUESCOPE_FIXTURE_DIR) + "/desk_dump.jsonl";
    j["communities"] = {"historychat", "gamerlounge"};
    j["dimensions"] = {"formality", "verbosity"};
    j["seed"] = 11;
    j["offline"] = true;
    j["threads"] = 2;
    j["sample"] = {{"per_scale", 2}, {"pairs", 0}};
    j["label"] = {{"min_comparisons", 3}};
    j["rpm"] = {{"bins", 5}, {"min_bin_count", 1}};
    j["dynamics"] = {{"s1", "2019-2020"}, {"s2", "2021-2023"},
                     {"min_user_comments", 2}, {"phi_bins", 5}};
    j["synthbench"] = {{"n", 100}, {"epsilon", 0.05}, {"sigma", 0.1},
                       {"rounds", 10}, {"min_comparisons", 10},
                       {"bins", 5}, {"min_bin_count", 5},
                       {"response", {{"kind", "unimodal"}, {"peak", 0.7}, {"width", 0.2}}}};
    return j;
}

bool run_pipeline_into(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    fs::path config_path = dir.parent_path() / (dir.filename().string() + "-config.json");
    std::ofstream(config_path) << desk_config(dir).dump(2);
    static const std::vector<std::string> kStages = {
        "ingest",   "sample", "label",    "winrate",    "simulate", "filter",
        "score-preference", "rpm", "dynamics", "synthbench", "report"};
    for (const auto& stage : kStages) {
        std::ostringstream out, err;
        if (vs::cli::run({stage, "--config", config_path.generic_string()}, out, err) != 0) {
            return false;
        }
    }
    return true;
}

void check_reproducibility_and_reports() {
    fs::path dir_a = fs::temp_directory_path() / "valuescope-accept-a";
    fs::path dir_b = fs::temp_directory_path() / "valuescope-accept-b";
    bool ran = run_pipeline_into(dir_a) && run_pipeline_into(dir_b);

    bool identical = ran;
    std::size_t compared = 0;
    if (ran) {
        for (const auto& entry : fs::recursive_directory_iterator(dir_a)) {
            if (!entry.is_regular_file()) continue;
            fs::path rel = fs::relative(entry.path(), dir_a);
            if (rel == "manifest.json") continue;
            if (vs::io::read_file(entry.path()) != vs::io::read_file(dir_b / rel)) {
                identical = false;
            }
            ++compared;
        }
        auto ma = nlohmann::json::parse(vs::io::read_file(dir_a / "manifest.json"));
        auto mb = nlohmann::json::parse(vs::io::read_file(dir_b / "manifest.json"));
        identical = identical && ma.at("manifest_digest") == mb.at("manifest_digest");
    }
    std::ostringstream detail8;
    detail8 << compared << " artifacts compared";
    report(8, "identical runs are byte-identical with equal manifest digests", identical,
           detail8.str());

    // Full-scale numbers need the production dump and tuned model backends;
    // the gate verifies the report tables exist in the drop-in shape instead.
    bool shaped = ran;
    if (ran) {
        std::string reg = vs::io::read_file(dir_a / "report/regression_table.csv");
        std::string shift = vs::io::read_file(dir_a / "report/user_shift_table.csv");
        shaped = reg.rfind("dimension,ni_only_c_ni", 0) == 0 &&
                 shift.rfind("community_a,community_b,dimension,shared_users", 0) == 0 &&
                 fs::exists(dir_a / "report/curve_historychat_formality.csv");
    }
    report(9, "desk-scale reports ship in the full-scale table shapes", shaped,
           "full-scale magnitudes are out of scope by design");
}

}  // namespace

int main() {
    check_monotonicity();
    check_winrate_oracle();
    check_cost_estimator();
    check_filter_determinism();
    check_synthetic_recovery();
    check_stats_oracles();
    check_rank_invariance();
    check_reproducibility_and_reports();
    if (g_failures > 0) {
        std::printf("%d check(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all checks passed\n");
    return 0;
}
