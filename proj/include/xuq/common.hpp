// Shared basics: error types, a small row-major matrix, and the statistics
// helpers used across the library (quantiles, moments, correlation, special
// functions for the Bayesian explainer).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xuq {

// Invalid user-supplied configuration or arguments.
struct config_error : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Files, parsing, serialization.
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numerical/algorithmic failure at runtime (no boundary found, undefined
// correlation, training diverged, ...).
struct domain_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return data_.empty(); }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace stats {

inline double mean(std::span<const double> v) {
    if (v.empty()) throw config_error("mean: empty input");
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Sample standard deviation (M-1 denominator).
inline double sample_stdev(std::span<const double> v) {
    if (v.size() < 2) throw config_error("sample_stdev: need at least 2 values");
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Population standard deviation (N denominator).
inline double pop_stdev(std::span<const double> v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

// Inclusive linear-interpolation quantile (type 7). p in [0,1].
inline double quantile_type7(std::vector<double> v, double p) {
    if (v.empty()) throw config_error("quantile: empty input");
    if (p < 0.0 || p > 1.0) throw config_error("quantile: p outside [0,1]");
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= v.size()) return v.back();
    const double frac = h - std::floor(h);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

// Pearson correlation; throws domain_error when either side has zero variance.
inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw config_error("pearson: size mismatch or too few points");
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0)
        throw domain_error("pearson: undefined correlation (zero variance)");
    return sab / std::sqrt(saa * sbb);
}

// Regularized incomplete beta I_x(a,b) via the standard continued fraction.
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-14;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

inline double incbeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_bt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                         a * std::log(x) + b * std::log1p(-x);
    const double bt = std::exp(ln_bt);
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

// Student-t CDF with nu degrees of freedom.
inline double student_t_cdf(double t, double nu) {
    const double x = nu / (nu + t * t);
    const double p = 0.5 * incbeta(0.5 * nu, 0.5, x);
    return t >= 0.0 ? 1.0 - p : p;
}

// Student-t quantile by bisection on the CDF.
inline double student_t_quantile(double p, double nu) {
    if (p <= 0.0 || p >= 1.0) throw config_error("student_t_quantile: p outside (0,1)");
    if (p == 0.5) return 0.0;
    double lo = -1.0, hi = 1.0;
    while (student_t_cdf(lo, nu) > p) lo *= 2.0;
    while (student_t_cdf(hi, nu) < p) hi *= 2.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (student_t_cdf(mid, nu) < p)
            lo = mid;
        else
            hi = mid;
        if (hi - lo < 1e-12 * (1.0 + std::fabs(hi))) break;
    }
    return 0.5 * (lo + hi);
}

// Otsu's threshold over scalar samples: the cut that maximizes between-class
// variance of the induced 2-class split. Used to locate the valley of a
// bimodal uncertainty histogram.
inline double otsu_threshold(std::vector<double> v, int bins = 64) {
    if (v.size() < 2) throw config_error("otsu_threshold: too few samples");
    const auto [mn_it, mx_it] = std::minmax_element(v.begin(), v.end());
    const double mn = *mn_it, mx = *mx_it;
    if (mx <= mn) return mn;
    std::vector<double> count(bins, 0.0), sum(bins, 0.0);
    const double width = (mx - mn) / bins;
    for (double x : v) {
        auto b = static_cast<std::size_t>((x - mn) / width);
        if (b >= static_cast<std::size_t>(bins)) b = bins - 1;
        count[b] += 1.0;
        sum[b] += x;
    }
    const double total_n = static_cast<double>(v.size());
    double total_sum = 0.0;
    for (double s : sum) total_sum += s;
    double best = -1.0;
    int best_cut = 0;
    double n0 = 0.0, s0 = 0.0;
    for (int cut = 0; cut < bins - 1; ++cut) {
        n0 += count[cut];
        s0 += sum[cut];
        const double n1 = total_n - n0;
        if (n0 <= 0.0 || n1 <= 0.0) continue;
        const double m0 = s0 / n0, m1 = (total_sum - s0) / n1;
        const double between = n0 * n1 * (m0 - m1) * (m0 - m1);
        if (between > best) {
            best = between;
            best_cut = cut;
        }
    }
    return mn + width * (best_cut + 1);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    const double na = std::sqrt(dot(a, a)), nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) throw domain_error("cosine_similarity: zero vector");
    return dot(a, b) / (na * nb);
}

}  // namespace stats

inline void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw config_error(std::string(what) + ": non-finite value");
}

}  // namespace xuq
