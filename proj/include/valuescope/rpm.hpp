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
// Return Potential curves over preference deltas: binning, the Point of
// Maximum Return, and the Potential Return Difference.

#ifndef VALUESCOPE_RPM_HPP_
#define VALUESCOPE_RPM_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "valuescope/dimensions.hpp"
#include "valuescope/io.hpp"
#include "valuescope/preference.hpp"
#include "valuescope/stats.hpp"
#include "valuescope/util.hpp"

namespace valuescope::rpm {

struct RpmBin {
    double lo = 0.0;   // inclusive
    double hi = 0.0;   // exclusive, except the last bin which closes the range
    double mean = 0.0;
    std::size_t count = 0;
    double std_error = 0.0;  // sd / sqrt(count); 0 when count < 2
    bool reliable = false;   // count >= configured minimum
};

struct RpmCurve {
    std::string community;
    Dimension dimension = Dimension::formality;
    std::vector<RpmBin> bins;  // contiguous, ascending
    double bin_width = 0.0;
    bool delta_mode = true;  // x-axis is the normness delta, not raw normness
    std::size_t min_count = 0;
    std::size_t out_of_range = 0;
};

// Equal-width bins over [lo, hi]; each bin holds the mean preference delta of
// the normness deltas falling in it. Bins under min_count are kept for
// inspection but marked unreliable.
inline RpmCurve build_curve(const std::vector<preference::PreferenceDelta>& deltas,
                            std::size_t n_bins = 10, std::size_t min_count = 50,
                            const std::string& community = std::string(), double lo = -1.0,
                            double hi = 1.0) {
    if (n_bins < 2) throw std::invalid_argument("build_curve: need at least 2 bins");
    if (deltas.empty()) throw std::invalid_argument("build_curve: no deltas");
    if (!(lo < hi)) throw std::invalid_argument("build_curve: empty range");

    RpmCurve curve;
    curve.community = community;
    curve.dimension = deltas.front().dimension;
    curve.bin_width = (hi - lo) / static_cast<double>(n_bins);
    curve.min_count = min_count;

    std::vector<std::vector<double>> values(n_bins);
    for (const auto& d : deltas) {
        if (d.d_phi < lo || d.d_phi > hi) {
            ++curve.out_of_range;
            continue;
        }
        auto index = static_cast<std::size_t>((d.d_phi - lo) / curve.bin_width);
        if (index >= n_bins) index = n_bins - 1;  // d_phi == hi closes the last bin
        values[index].push_back(d.d_psi);
    }

    bool any_reliable = false;
    for (std::size_t i = 0; i < n_bins; ++i) {
        RpmBin bin;
        bin.lo = lo + curve.bin_width * static_cast<double>(i);
        bin.hi = i + 1 == n_bins ? hi : lo + curve.bin_width * static_cast<double>(i + 1);
        bin.count = values[i].size();
        if (bin.count > 0) bin.mean = stats::mean(values[i]);
        if (bin.count > 1) {
            bin.std_error = stats::stddev(values[i]) / std::sqrt(static_cast<double>(bin.count));
        }
        bin.reliable = bin.count >= min_count && bin.count > 0;
        any_reliable = any_reliable || bin.reliable;
        curve.bins.push_back(bin);
    }
    if (!any_reliable) {
        throw input_error("build_curve: every bin falls below the minimum of " +
                          std::to_string(min_count) + " deltas");
    }
    return curve;
}

namespace detail {

inline std::vector<const RpmBin*> reliable_bins(const RpmCurve& curve) {
    std::vector<const RpmBin*> out;
    for (const auto& b : curve.bins) {
        if (b.reliable) out.push_back(&b);
    }
    if (out.empty()) throw input_error("curve has no reliable bins");
    return out;
}

}  // namespace detail

// Point of Maximum Return: the reliable bin with the highest mean preference.
// Ties break toward the bin whose center is nearest zero delta; among
// equidistant centers, the lower bin wins.
inline RpmBin pmr(const RpmCurve& curve) {
    auto bins = detail::reliable_bins(curve);
    const RpmBin* best = bins.front();
    auto center_distance = [](const RpmBin& b) { return std::fabs((b.lo + b.hi) / 2.0); };
    for (const auto* b : bins) {
        if (b->mean > best->mean) {
            best = b;
        } else if (b->mean == best->mean && center_distance(*b) < center_distance(*best)) {
            best = b;
        }
    }
    return *best;
}

// Potential Return Difference: total positive feedback minus the magnitude of
// total negative feedback, which is the plain sum of reliable bin means.
inline double prd(const RpmCurve& curve) {
    double sum = 0.0;
    for (const auto* b : detail::reliable_bins(curve)) sum += b->mean;
    return sum;
}

// --- Emission ---------------------------------------------------------------------

inline io::CsvTable curve_to_csv(const RpmCurve& curve) {
    io::CsvTable table;
    table.header = {"bin_lo", "bin_hi", "mean", "count", "stderr", "reliable"};
    for (const auto& b : curve.bins) {
        table.rows.push_back({io::format_double(b.lo), io::format_double(b.hi),
                              io::format_double(b.mean), std::to_string(b.count),
                              io::format_double(b.std_error), b.reliable ? "1" : "0"});
    }
    return table;
}

inline nlohmann::json curve_summary(const RpmCurve& curve) {
    const RpmBin peak = pmr(curve);
    int reliable = 0;
    for (const auto& b : curve.bins) reliable += b.reliable ? 1 : 0;
    return nlohmann::json{{"community", curve.community},
                          {"dimension", dimension_name(curve.dimension)},
                          {"bins", curve.bins.size()},
                          {"reliable_bins", reliable},
                          {"bin_width", curve.bin_width},
                          {"min_count", curve.min_count},
                          {"out_of_range", curve.out_of_range},
                          {"pmr_lo", peak.lo},
                          {"pmr_hi", peak.hi},
                          {"pmr_mean", peak.mean},
                          {"prd", prd(curve)}};
}

inline nlohmann::json curve_to_json(const RpmCurve& curve) {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : curve.bins) {
        bins.push_back({{"lo", b.lo},
                        {"hi", b.hi},
                        {"mean", b.mean},
                        {"count", b.count},
                        {"stderr", b.std_error},
                        {"reliable", b.reliable}});
    }
    return nlohmann::json{{"community", curve.community},
                          {"dimension", dimension_name(curve.dimension)},
                          {"bin_width", curve.bin_width},
                          {"delta_mode", curve.delta_mode},
                          {"min_count", curve.min_count},
                          {"out_of_range", curve.out_of_range},
                          {"bins", bins}};
}

inline RpmCurve curve_from_json(const nlohmann::json& j) {
    RpmCurve curve;
    curve.community = j.at("community").get<std::string>();
    curve.dimension = parse_dimension(j.at("dimension").get<std::string>());
    curve.bin_width = j.at("bin_width").get<double>();
    curve.delta_mode = j.at("delta_mode").get<bool>();
    curve.min_count = j.at("min_count").get<std::size_t>();
    curve.out_of_range = j.at("out_of_range").get<std::size_t>();
    for (const auto& b : j.at("bins")) {
        RpmBin bin;
        bin.lo = b.at("lo").get<double>();
        bin.hi = b.at("hi").get<double>();
        bin.mean = b.at("mean").get<double>();
        bin.count = b.at("count").get<std::size_t>();
        bin.std_error = b.at("stderr").get<double>();
        bin.reliable = b.at("reliable").get<bool>();
        curve.bins.push_back(bin);
    }
    return curve;
}

}  // namespace valuescope::rpm

#endif  // VALUESCOPE_RPM_HPP_
