#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace camel {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(x))) over the finite-or-(-inf) entries of x. Returns -inf for an
/// empty range or when every entry is -inf.
inline double log_sum_exp(std::span<const double> x) {
    double top = kNegInf;
    for (double v : x) top = std::max(top, v);
    if (top == kNegInf) return kNegInf;
    double acc = 0.0;
    for (double v : x) acc += std::exp(v - top);
    return top + std::log(acc);
}

/// Normalizes log-weights in place into probabilities; returns log of the
/// normalizer.
inline double normalize_log_weights(std::span<double> x) {
    const double lz = log_sum_exp(x);
    for (double& v : x) v = (v == kNegInf) ? 0.0 : std::exp(v - lz);
    return lz;
}

/// Shannon entropy in nats with 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

inline double inf_norm(std::span<const double> x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Pairwise (tree-order) summation; the reduction order depends only on the
/// length of the input.
inline double pairwise_sum(std::span<const double> x) {
    if (x.size() <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const size_t half = x.size() / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

} // namespace camel
