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
// Norm dynamics: intensity, crystallization, temporal change, the two
// intensity regressions, and user-level shift t-tests.

#ifndef VALUESCOPE_DYNAMICS_HPP_
#define VALUESCOPE_DYNAMICS_HPP_

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
#include "valuescope/io.hpp"
#include "valuescope/stats.hpp"
#include "valuescope/util.hpp"

namespace valuescope::dynamics {

struct BinKey {
    std::string community;
    Dimension dimension = Dimension::formality;
    double bin_lo = 0.0;
    double bin_hi = 0.0;

    bool operator==(const BinKey& o) const {
        return community == o.community && dimension == o.dimension && bin_lo == o.bin_lo &&
               bin_hi == o.bin_hi;
    }
};

// Whole calendar years [y_lo, y_hi], end-exclusive at Jan 1 of y_hi + 1.
inline corpus::TimeBin period_from_years(int y_lo, int y_hi) {
    if (y_hi < y_lo) throw std::invalid_argument("period_from_years: inverted year range");
    corpus::TimeBin bin;
    bin.start = unix_seconds_from_civil(y_lo, 1, 1);
    bin.end = unix_seconds_from_civil(y_hi + 1, 1, 1);
    bin.label = (static_cast<double>(y_lo) + static_cast<double>(y_hi) + 1.0) / 2.0;
    return bin;
}

// --- Norm intensity ---------------------------------------------------------------

struct NormIntensityRecord {
    BinKey key;
    corpus::TimeBin period;
    double ni = 0.0;
    std::size_t n = 0;
    bool low_n = false;  // fewer than 2 comments
};

inline NormIntensityRecord norm_intensity(const BinKey& key, const corpus::TimeBin& period,
                                          const std::vector<double>& preferences) {
    if (preferences.empty()) {
        throw std::invalid_argument("norm_intensity: empty bin for community " + key.community);
    }
    NormIntensityRecord r;
    r.key = key;
    r.period = period;
    r.ni = stats::mean(preferences);
    r.n = preferences.size();
    r.low_n = preferences.size() < 2;
    return r;
}

// --- Crystallization --------------------------------------------------------------

struct CrystallizationInput {
    BinKey key;
    corpus::TimeBin period;
    std::vector<double> preferences;
};

struct CrystallizationRecord {
    BinKey key;
    corpus::TimeBin period;
    double cr = 0.0;  // 1 / sample variance of the subsample
    std::size_t subsample_n = 0;
    std::uint64_t seed = 0;
    bool degenerate = false;  // constant subsample, CR undefined
};

// Every bin is subsampled without replacement down to the smallest bin's
// population so variances are comparable across bins. CR is the inverse
// sample variance of the subsample.
inline std::vector<CrystallizationRecord> crystallization(
    const std::vector<CrystallizationInput>& bins, std::uint64_t seed) {
    if (bins.empty()) throw std::invalid_argument("crystallization: no bins");
    std::size_t min_size = std::numeric_limits<std::size_t>::max();
    for (const auto& b : bins) min_size = std::min(min_size, b.preferences.size());
    if (min_size < 2) {
        throw std::invalid_argument("crystallization: smallest bin has fewer than 2 comments");
    }
    std::vector<CrystallizationRecord> out;
    for (std::size_t i = 0; i < bins.size(); ++i) {
        std::vector<double> sample = bins[i].preferences;
        if (sample.size() > min_size) {
            Rng rng(derive_seed(seed, "crystallization#" + std::to_string(i)));
            sample = rng.sample_without_replacement(sample, min_size);
        }
        CrystallizationRecord r;
        r.key = bins[i].key;
        r.period = bins[i].period;
        r.subsample_n = min_size;
        r.seed = seed;
        const double variance = stats::variance(sample);
        if (variance == 0.0) {
            r.degenerate = true;
        } else {
            r.cr = 1.0 / variance;
        }
        out.push_back(std::move(r));
    }
    return out;
}

// --- Temporal change --------------------------------------------------------------

struct TemporalChangeRecord {
    BinKey key;
    corpus::TimeBin s1, s2;
    double tc = 0.0;  // NI(s1) - NI(s2)
};

inline TemporalChangeRecord temporal_change(const NormIntensityRecord& ni_s1,
                                            const NormIntensityRecord& ni_s2) {
    if (!(ni_s1.key == ni_s2.key)) {
        throw std::invalid_argument("temporal_change: records belong to different bins");
    }
    TemporalChangeRecord r;
    r.key = ni_s1.key;
    r.s1 = ni_s1.period;
    r.s2 = ni_s2.period;
    r.tc = ni_s1.ni - ni_s2.ni;
    return r;
}

// --- Regressions ------------------------------------------------------------------

enum class RegressionModel { ni_only, ni_cr };

struct RegressionRow {
    double ni = 0.0;
    double cr = 0.0;
    double tc = 0.0;
};

struct RegressionFit {
    RegressionModel model = RegressionModel::ni_only;
    std::vector<double> coefficients;  // [intercept, c_ni, (c_cr)]
    std::vector<double> std_errors;
    std::vector<double> p_values;
    double r_squared = 0.0;
    bool r_squared_defined = true;  // false when the target is constant
    std::size_t n = 0;
};

inline RegressionFit ols_fit(const std::vector<RegressionRow>& rows, RegressionModel model) {
    const std::size_t k = model == RegressionModel::ni_only ? 2 : 3;
    if (rows.size() <= k) {
        throw std::invalid_argument("ols_fit: need more rows than coefficients");
    }
    std::vector<std::vector<double>> predictors(k - 1);
    std::vector<double> target;
    for (const auto& r : rows) {
        predictors[0].push_back(r.ni);
        if (model == RegressionModel::ni_cr) predictors[1].push_back(r.cr);
        target.push_back(r.tc);
    }
    auto ols = stats::ols(predictors, target);
    RegressionFit fit;
    fit.model = model;
    fit.coefficients = ols.coefficients;
    fit.std_errors = ols.std_errors;
    fit.p_values = ols.p_values;
    fit.n = rows.size();
    if (stats::variance(target) == 0.0) {
        fit.r_squared_defined = false;
        fit.r_squared = std::numeric_limits<double>::quiet_NaN();
    } else {
        fit.r_squared = ols.r_squared;
    }
    return fit;
}

// --- Paired t-test ----------------------------------------------------------------

struct PairedTTest {
    double t = 0.0;
    double df = 0.0;
    double p = std::numeric_limits<double>::quiet_NaN();
    bool p_defined = false;
    bool degenerate = false;  // zero sample sd
    double mean_delta = 0.0;
    std::size_t n = 0;
};

inline PairedTTest paired_ttest(const std::vector<double>& deltas) {
    if (deltas.size() < 2) throw std::invalid_argument("paired_ttest: need at least 2 deltas");
    PairedTTest out;
    out.n = deltas.size();
    out.df = static_cast<double>(deltas.size() - 1);
    out.mean_delta = stats::mean(deltas);
    const double sd = stats::stddev(deltas);
    if (sd == 0.0) {
        out.degenerate = true;
        return out;
    }
    out.t = out.mean_delta / (sd / std::sqrt(static_cast<double>(deltas.size())));
    out.p = stats::student_t_two_tailed(out.t, out.df);
    out.p_defined = true;
    return out;
}

// --- User shift -------------------------------------------------------------------

struct UserShiftRecord {
    std::string community_a;
    std::string community_b;
    Dimension dimension = Dimension::formality;
    std::size_t shared_users = 0;
    double mean_delta = 0.0;
    double t = 0.0;
    double p = std::numeric_limits<double>::quiet_NaN();
    bool p_defined = false;
    bool degenerate = false;
    std::string significance = "ns";  // {neg, pos, ns}
};

// Per shared user with at least min_comments scored comments on each side,
// delta = mean normness on side B minus side A; a paired t-test over those
// deltas decides significance at 0.05.
inline UserShiftRecord user_shift(const std::vector<corpus::Comment>& comments_a,
                                  const std::vector<corpus::Comment>& comments_b,
                                  const std::map<std::string, double>& normness,
                                  Dimension dimension, std::size_t min_comments = 2) {
    if (min_comments < 1) throw std::invalid_argument("user_shift: min_comments must be >= 1");
    auto per_user_values = [&](const std::vector<corpus::Comment>& side) {
        std::map<std::string, std::vector<double>> by_user;
        for (const auto& c : side) {
            auto it = normness.find(c.comment_id);
            if (it == normness.end()) continue;  // unscored comments do not count
            by_user[c.author].push_back(it->second);
        }
        return by_user;
    };
    auto side_a = per_user_values(comments_a);
    auto side_b = per_user_values(comments_b);

    std::vector<double> deltas;
    for (const auto& [user, a_values] : side_a) {
        if (a_values.size() < min_comments) continue;
        auto it = side_b.find(user);
        if (it == side_b.end() || it->second.size() < min_comments) continue;
        deltas.push_back(stats::mean(it->second) - stats::mean(a_values));
    }
    if (deltas.size() < 2) {
        throw input_error("user_shift: fewer than 2 users meet the " +
                          std::to_string(min_comments) + "-comment minimum on both sides");
    }

    UserShiftRecord r;
    r.community_a = comments_a.empty() ? std::string() : comments_a.front().community;
    r.community_b = comments_b.empty() ? std::string() : comments_b.front().community;
    r.dimension = dimension;
    r.shared_users = deltas.size();
    auto test = paired_ttest(deltas);
    r.mean_delta = test.mean_delta;
    r.t = test.t;
    r.p = test.p;
    r.p_defined = test.p_defined;
    r.degenerate = test.degenerate;
    if (test.p_defined && test.p <= 0.05 && test.mean_delta != 0.0) {
        r.significance = test.mean_delta > 0.0 ? "pos" : "neg";
    }
    return r;
}

// --- Emission ---------------------------------------------------------------------

struct DimensionRegression {
    Dimension dimension = Dimension::formality;
    RegressionFit ni_only;
    RegressionFit ni_cr;
};

// One row per dimension: both models' coefficients and fit quality, with the
// coefficient p-values appended.
inline io::CsvTable regression_table_csv(const std::vector<DimensionRegression>& fits) {
    io::CsvTable table;
    table.header = {"dimension", "ni_only_c_ni", "ni_only_r2", "ni_cr_c_ni",
                    "ni_cr_c_cr", "ni_cr_r2",   "ni_only_p_ni", "ni_cr_p_ni", "ni_cr_p_cr"};
    for (const auto& f : fits) {
        table.rows.push_back({dimension_name(f.dimension),
                              io::format_double(f.ni_only.coefficients.at(1)),
                              io::format_double(f.ni_only.r_squared),
                              io::format_double(f.ni_cr.coefficients.at(1)),
                              io::format_double(f.ni_cr.coefficients.at(2)),
                              io::format_double(f.ni_cr.r_squared),
                              io::format_double(f.ni_only.p_values.at(1)),
                              io::format_double(f.ni_cr.p_values.at(1)),
                              io::format_double(f.ni_cr.p_values.at(2))});
    }
    return table;
}

inline io::CsvTable user_shift_table_csv(const std::vector<UserShiftRecord>& records) {
    io::CsvTable table;
    table.header = {"community_a", "community_b", "dimension", "shared_users",
                    "mean_delta",  "t",           "p",         "significance"};
    for (const auto& r : records) {
        table.rows.push_back({r.community_a, r.community_b, dimension_name(r.dimension),
                              std::to_string(r.shared_users), io::format_double(r.mean_delta),
                              io::format_double(r.t),
                              r.p_defined ? io::format_double(r.p) : "nan", r.significance});
    }
    return table;
}

// --- Serialization ----------------------------------------------------------------

inline nlohmann::json ni_to_json(const NormIntensityRecord& r) {
    return nlohmann::json{{"community", r.key.community},
                          {"dimension", dimension_name(r.key.dimension)},
                          {"bin_lo", r.key.bin_lo},
                          {"bin_hi", r.key.bin_hi},
                          {"period_start", r.period.start},
                          {"period_end", r.period.end},
                          {"period_label", r.period.label},
                          {"ni", r.ni},
                          {"n", r.n},
                          {"low_n", r.low_n}};
}

inline NormIntensityRecord ni_from_json(const nlohmann::json& j) {
    NormIntensityRecord r;
    r.key.community = j.at("community").get<std::string>();
    r.key.dimension = parse_dimension(j.at("dimension").get<std::string>());
    r.key.bin_lo = j.at("bin_lo").get<double>();
    r.key.bin_hi = j.at("bin_hi").get<double>();
    r.period.start = j.at("period_start").get<std::int64_t>();
    r.period.end = j.at("period_end").get<std::int64_t>();
    r.period.label = j.at("period_label").get<double>();
    r.ni = j.at("ni").get<double>();
    r.n = j.at("n").get<std::size_t>();
    r.low_n = j.at("low_n").get<bool>();
    return r;
}

}  // namespace valuescope::dynamics

#endif  // VALUESCOPE_DYNAMICS_HPP_
