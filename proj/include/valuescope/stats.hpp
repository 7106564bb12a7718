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
// Statistics kernel: descriptive moments, Student-t tail probabilities via
// the regularized incomplete beta function, paired t-tests, ordinary least
// squares with coefficient inference, rank correlation, and Fleiss's kappa.
// Everything here is deterministic and dependency-free by design so results
// reproduce bit-for-bit across platforms.

#ifndef VALUESCOPE_STATS_HPP
#define VALUESCOPE_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "valuescope/util.hpp"

namespace valuescope::stats {

inline double mean(const std::vector<double>& xs) {
    if (xs.empty()) throw std::invalid_argument("mean of empty vector");
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Sample variance, n-1 denominator.
inline double variance(const std::vector<double>& xs) {
    if (xs.size() < 2) throw std::invalid_argument("variance needs at least two values");
    double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return ss / static_cast<double>(xs.size() - 1);
}

inline double stddev(const std::vector<double>& xs) { return std::sqrt(variance(xs)); }

// --- Regularized incomplete beta -------------------------------------------

namespace detail {

// Continued fraction for I_x(a,b), modified Lentz method.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 500;
    constexpr double kEps = 1e-8;
    constexpr double kTiny = 1e-300;

    double qab = a + b;
    double qap = a + 1.0;
    double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) return h;
    }
    throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace detail

// I_x(a, b) to within 1e-8.
inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw std::invalid_argument("beta parameters must be positive");
    if (x < 0.0 || x > 1.0) throw std::invalid_argument("beta argument outside [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                      a * std::log(x) + b * std::log1p(-x);
    double front = std::exp(ln_front);
    // The continued fraction converges fast for x < (a+1)/(a+b+2); use the
    // symmetry I_x(a,b) = 1 - I_{1-x}(b,a) otherwise.
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * detail::betacf(a, b, x) / a;
    }
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// P(T <= t) for Student's t with df degrees of freedom.
inline double student_t_cdf(double t, double df) {
    if (!(df > 0.0)) throw std::invalid_argument("degrees of freedom must be positive");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    double x = df / (df + t * t);
    double p = 0.5 * regularized_incomplete_beta(df / 2.0, 0.5, x);
    return t > 0.0 ? 1.0 - p : p;
}

// Two-tailed p-value for an observed t statistic.
inline double student_t_two_tailed(double t, double df) {
    double x = df / (df + t * t);
    return regularized_incomplete_beta(df / 2.0, 0.5, x);
}

// --- Paired t-test ----------------------------------------------------------

struct TTestResult {
    double t = 0.0;
    double df = 0.0;
    double p_two_tailed = 1.0;
    double mean_diff = 0.0;
    std::size_t n = 0;
};

// Paired two-tailed t-test on per-subject differences.
inline TTestResult paired_t_test(const std::vector<double>& diffs) {
    if (diffs.size() < 2) throw std::invalid_argument("paired t-test needs at least two pairs");
    TTestResult r;
    r.n = diffs.size();
    r.df = static_cast<double>(diffs.size() - 1);
    r.mean_diff = mean(diffs);
    double sd = stddev(diffs);
    if (sd == 0.0) {
        r.t = r.mean_diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity() *
                                             (r.mean_diff > 0 ? 1.0 : -1.0);
        r.p_two_tailed = r.mean_diff == 0.0 ? 1.0 : 0.0;
        return r;
    }
    r.t = r.mean_diff / (sd / std::sqrt(static_cast<double>(diffs.size())));
    r.p_two_tailed = student_t_two_tailed(r.t, r.df);
    return r;
}

inline TTestResult paired_t_test(const std::vector<double>& before,
                                 const std::vector<double>& after) {
    if (before.size() != after.size()) {
        throw std::invalid_argument("paired t-test requires equal-length samples");
    }
    std::vector<double> diffs(before.size());
    for (std::size_t i = 0; i < before.size(); ++i) diffs[i] = after[i] - before[i];
    return paired_t_test(diffs);
}

// --- Ordinary least squares --------------------------------------------------

struct OlsResult {
    std::vector<double> coefficients;  // [intercept, b1, b2, ...]
    std::vector<double> std_errors;
    std::vector<double> t_values;
    std::vector<double> p_values;  // two-tailed, t distribution, df = n - k
    double r_squared = 0.0;
    double residual_variance = 0.0;
    std::size_t n = 0;
    std::size_t df = 0;
};

namespace detail {

// Solves the symmetric positive definite system A x = b via Cholesky.
inline std::vector<double> solve_spd(std::vector<std::vector<double>> a, std::vector<double> b) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double sum = a[i][j];
            for (std::size_t k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
            if (i == j) {
                if (sum <= 0.0) throw std::runtime_error("design matrix is rank deficient");
                l[i][i] = std::sqrt(sum);
            } else {
                l[i][j] = sum / l[j][j];
            }
        }
    }
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = b[i];
        for (std::size_t k = 0; k < i; ++k) sum -= l[i][k] * y[k];
        y[i] = sum / l[i][i];
    }
    std::vector<double> x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double sum = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) sum -= l[k][ii] * x[k];
        x[ii] = sum / l[ii][ii];
    }
    return x;
}

// Inverse of a symmetric positive definite matrix, column by column.
inline std::vector<std::vector<double>> invert_spd(const std::vector<std::vector<double>>& a) {
    const std::size_t n = a.size();
    std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
    for (std::size_t col = 0; col < n; ++col) {
        std::vector<double> e(n, 0.0);
        e[col] = 1.0;
        std::vector<double> x = solve_spd(a, e);
        for (std::size_t row = 0; row < n; ++row) inv[row][col] = x[row];
    }
    return inv;
}

}  // namespace detail

// OLS with an intercept prepended to the supplied predictor columns.
inline OlsResult ols(const std::vector<std::vector<double>>& predictors,
                     const std::vector<double>& y) {
    const std::size_t n = y.size();
    const std::size_t k = predictors.size() + 1;  // + intercept
    if (n == 0) throw std::invalid_argument("ols requires observations");
    for (const auto& col : predictors) {
        if (col.size() != n) throw std::invalid_argument("predictor column length mismatch");
    }
    if (n <= k) throw std::invalid_argument("ols requires more observations than parameters");

    // Build X'X and X'y directly; k is tiny here.
    auto x_at = [&](std::size_t row, std::size_t col) -> double {
        return col == 0 ? 1.0 : predictors[col - 1][row];
    };
    std::vector<std::vector<double>> xtx(k, std::vector<double>(k, 0.0));
    std::vector<double> xty(k, 0.0);
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t i = 0; i < k; ++i) {
            double xi = x_at(row, i);
            xty[i] += xi * y[row];
            for (std::size_t j = 0; j <= i; ++j) xtx[i][j] += xi * x_at(row, j);
        }
    }
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) xtx[i][j] = xtx[j][i];
    }

    OlsResult r;
    r.n = n;
    r.df = n - k;
    r.coefficients = detail::solve_spd(xtx, xty);

    double y_mean = mean(y);
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t row = 0; row < n; ++row) {
        double fit = 0.0;
        for (std::size_t i = 0; i < k; ++i) fit += r.coefficients[i] * x_at(row, i);
        double res = y[row] - fit;
        ss_res += res * res;
        ss_tot += (y[row] - y_mean) * (y[row] - y_mean);
    }
    r.r_squared = ss_tot == 0.0 ? 1.0 : 1.0 - ss_res / ss_tot;
    r.residual_variance = ss_res / static_cast<double>(r.df);

    auto xtx_inv = detail::invert_spd(xtx);
    r.std_errors.resize(k);
    r.t_values.resize(k);
    r.p_values.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
        double se = std::sqrt(std::max(0.0, r.residual_variance * xtx_inv[i][i]));
        r.std_errors[i] = se;
        if (se == 0.0) {
            r.t_values[i] = r.coefficients[i] == 0.0
                                ? 0.0
                                : std::numeric_limits<double>::infinity() *
                                      (r.coefficients[i] > 0 ? 1.0 : -1.0);
            r.p_values[i] = r.coefficients[i] == 0.0 ? 1.0 : 0.0;
        } else {
            r.t_values[i] = r.coefficients[i] / se;
            r.p_values[i] = student_t_two_tailed(r.t_values[i], static_cast<double>(r.df));
        }
    }
    return r;
}

// --- Ranks and rank correlation ----------------------------------------------

// Average ranks (1-based); ties share the mean of the ranks they span.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
        double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("pearson requires two equal-length samples, n >= 2");
    }
    double mx = mean(x);
    double my = mean(y);
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw std::invalid_argument("pearson undefined for a constant sample");
    }
    return sxy / std::sqrt(sxx * syy);
}

// Spearman rank correlation: Pearson over average ranks, so ties are exact.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(average_ranks(x), average_ranks(y));
}

// --- Fleiss's kappa -----------------------------------------------------------

// rows[i][c] counts raters assigning item i to category c; every row must
// sum to the same number of raters n >= 2.
inline double fleiss_kappa(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("fleiss kappa requires items");
    const std::size_t categories = rows.front().size();
    if (categories < 2) throw std::invalid_argument("fleiss kappa requires >= 2 categories");
    double raters = std::accumulate(rows.front().begin(), rows.front().end(), 0.0);
    if (raters < 2) throw std::invalid_argument("fleiss kappa requires >= 2 raters");
    const double big_n = static_cast<double>(rows.size());

    std::vector<double> category_share(categories, 0.0);
    double p_bar = 0.0;
    for (const auto& row : rows) {
        if (row.size() != categories) throw std::invalid_argument("ragged kappa table");
        double row_sum = std::accumulate(row.begin(), row.end(), 0.0);
        if (row_sum != raters) throw std::invalid_argument("kappa rows must share rater count");
        double agree = 0.0;
        for (std::size_t c = 0; c < categories; ++c) {
            agree += row[c] * (row[c] - 1.0);
            category_share[c] += row[c];
        }
        p_bar += agree / (raters * (raters - 1.0));
    }
    p_bar /= big_n;
    double pe = 0.0;
    for (double share : category_share) {
        double pj = share / (big_n * raters);
        pe += pj * pj;
    }
    if (pe == 1.0) {
        // All mass in one category: agreement is total but chance-level too.
        return 1.0;
    }
    return (p_bar - pe) / (1.0 - pe);
}

}  // namespace valuescope::stats

#endif  // VALUESCOPE_STATS_HPP
