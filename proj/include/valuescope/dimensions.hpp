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

#ifndef VALUESCOPE_DIMENSIONS_HPP
#define VALUESCOPE_DIMENSIONS_HPP

#include <array>
#include <stdexcept>
#include <string>
#include <string_view>

namespace valuescope {

// Bidirectional behavioral axes. Every dimension names both poles so that
// low scores are as meaningful as high ones (toxic vs supportive rather
// than "not supportive").
enum class Dimension {
    politeness,
    supportiveness,
    sarcasm,
    humor,
    formality,
    verbosity,
};

struct DimensionInfo {
    Dimension dim;
    std::string_view name;
    std::string_view pole_low;
    std::string_view pole_high;
    // Five-point level phrases used for rating scales and rewrite targets,
    // index 0 = level 1. Verbosity is measured from character counts and
    // has no rewrite levels.
    std::array<std::string_view, 5> level_phrases;
    bool rewritable;
};

inline const DimensionInfo& dimension_info(Dimension d) {
    static const std::array<DimensionInfo, 6> kTable = {{
        {Dimension::politeness, "politeness", "rude", "polite",
         {"Very Rude", "Somewhat Rude", "Neutral", "Somewhat Polite", "Very Polite"},
         true},
        {Dimension::supportiveness, "supportiveness", "toxic", "supportive",
         {"Very Unsupportive", "Somewhat Unsupportive", "Neutral", "Somewhat Supportive",
          "Very Supportive"},
         true},
        {Dimension::sarcasm, "sarcasm", "genuine", "sarcastic",
         {"Very Genuine", "Somewhat Genuine", "Neutral", "Somewhat Sarcastic", "Very Sarcastic"},
         true},
        {Dimension::humor, "humor", "serious", "humorous",
         {"Very Serious", "Somewhat Serious", "Neutral", "Somewhat Humorous", "Very Humorous"},
         true},
        {Dimension::formality, "formality", "casual", "formal",
         {"Very Casual", "Somewhat Casual", "Neutral", "Somewhat Formal", "Very Formal"},
         true},
        {Dimension::verbosity, "verbosity", "concise", "verbose", {"", "", "", "", ""}, false},
    }};
    return kTable[static_cast<std::size_t>(d)];
}

inline std::string dimension_name(Dimension d) {
    return std::string(dimension_info(d).name);
}

inline Dimension parse_dimension(std::string_view name) {
    for (int i = 0; i < 6; ++i) {
        Dimension d = static_cast<Dimension>(i);
        if (dimension_info(d).name == name) return d;
    }
    throw std::invalid_argument("unknown norm dimension: " + std::string(name));
}

inline constexpr std::array<Dimension, 6> kAllDimensions = {
    Dimension::politeness, Dimension::supportiveness, Dimension::sarcasm,
    Dimension::humor,      Dimension::formality,      Dimension::verbosity,
};

}  // namespace valuescope

#endif  // VALUESCOPE_DIMENSIONS_HPP
