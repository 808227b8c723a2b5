#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "camel/math.hpp"

namespace camel::opt {

/// Returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(std::span<const double> x, std::span<double> grad)>;

struct IterationRecord {
    int iteration = 0;
    double value = 0.0;
    double gradient_norm = 0.0;
    double step = 0.0;
    int evaluations = 0;
};

enum class Status { Converged, MaxIterations, LineSearchFailed, NonFinite };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::Converged: return "converged";
    case Status::MaxIterations: return "max-iterations";
    case Status::LineSearchFailed: return "line-search-failed";
    case Status::NonFinite: return "non-finite";
    }
    return "unknown";
}

struct LbfgsOptions {
    /// Stop when the scaled projected-gradient infinity norm is at most this.
    double tolerance = 1e-6;
    int max_iterations = 1000;
    int memory = 10;
    /// Optional per-coordinate bounds; empty means unbounded.
    std::vector<double> lower;
    std::vector<double> upper;
    /// Optional per-coordinate multipliers applied to the gradient in the
    /// convergence test only.
    std::vector<double> gradient_scale;
    int max_line_search = 40;
    double c1 = 1e-4;
    double c2 = 0.9;
    /// Relative slack for the approximate-Wolfe acceptance near the optimum,
    /// where function differences fall below rounding.
    double approx_wolfe_eps = 1e-12;
    std::function<void(const IterationRecord&)> on_iteration;
};

struct LbfgsResult {
    std::vector<double> x;
    double value = 0.0;
    std::vector<double> gradient;
    double gradient_norm = 0.0;
    int iterations = 0;
    int evaluations = 0;
    Status status = Status::MaxIterations;

    bool converged() const { return status == Status::Converged; }
};

namespace detail {

struct Point {
    double alpha = 0.0;
    double f = 0.0;
    double df = 0.0;
    std::vector<double> x;
    std::vector<double> g;
};

inline double cubic_minimizer(const Point& a, const Point& b) {
    const double lo = std::min(a.alpha, b.alpha), hi = std::max(a.alpha, b.alpha);
    const double d1 = a.df + b.df - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    const double disc = d1 * d1 - a.df * b.df;
    double t = 0.5 * (lo + hi);
    if (disc >= 0.0) {
        const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
        const double cand = b.alpha - (b.alpha - a.alpha) * (b.df + d2 - d1) / (b.df - a.df + 2.0 * d2);
        if (std::isfinite(cand)) t = cand;
    }
    const double margin = 0.1 * (hi - lo);
    return std::clamp(t, lo + margin, hi - margin);
}

} // namespace detail

/// Limited-memory BFGS minimization with a strong-Wolfe line search. Bounded
/// coordinates are handled by an active set: a coordinate sitting on a bound
/// whose gradient pushes outward is frozen for that iteration, and steps are
/// truncated at the first bound they reach.
inline LbfgsResult minimize(const Objective& fn, std::vector<double> x0, const LbfgsOptions& opt) {
    const size_t n = x0.size();
    const bool bounded = !opt.lower.empty() || !opt.upper.empty();
    auto lo = [&](size_t i) { return opt.lower.empty() ? -std::numeric_limits<double>::infinity() : opt.lower[i]; };
    auto hi = [&](size_t i) { return opt.upper.empty() ? std::numeric_limits<double>::infinity() : opt.upper[i]; };
    auto scale = [&](size_t i) { return opt.gradient_scale.empty() ? 1.0 : opt.gradient_scale[i]; };

    LbfgsResult res;
    for (size_t i = 0; i < n; ++i) x0[i] = std::clamp(x0[i], lo(i), hi(i));
    res.x = std::move(x0);
    res.gradient.assign(n, 0.0);
    res.value = fn(res.x, res.gradient);
    res.evaluations = 1;
    if (!std::isfinite(res.value) || !all_finite(res.gradient)) {
        res.status = Status::NonFinite;
        return res;
    }

    std::deque<std::vector<double>> S, Y;
    std::deque<double> rho;
    std::vector<double> pg(n), d(n), q(n);
    std::vector<double> alpha_buf;

    auto projected = [&](std::span<const double> x, std::span<const double> g) {
        double norm = 0.0;
        for (size_t i = 0; i < n; ++i) {
            const bool pinned = (x[i] <= lo(i) && g[i] > 0.0) || (x[i] >= hi(i) && g[i] < 0.0);
            pg[i] = pinned ? 0.0 : g[i];
            norm = std::max(norm, std::abs(scale(i) * pg[i]));
        }
        return norm;
    };

    res.gradient_norm = projected(res.x, res.gradient);
    bool retried = false;

    for (int iter = 0;; ++iter) {
        if (res.gradient_norm <= opt.tolerance) {
            res.status = Status::Converged;
            return res;
        }
        if (iter >= opt.max_iterations) {
            res.status = Status::MaxIterations;
            return res;
        }

        // Two-loop recursion on the projected gradient.
        q = pg;
        alpha_buf.assign(S.size(), 0.0);
        for (size_t k = S.size(); k-- > 0;) {
            alpha_buf[k] = rho[k] * dot(S[k], q);
            for (size_t i = 0; i < n; ++i) q[i] -= alpha_buf[k] * Y[k][i];
        }
        if (!S.empty()) {
            const double gamma = dot(S.back(), Y.back()) / dot(Y.back(), Y.back());
            for (double& v : q) v *= gamma;
        }
        for (size_t k = 0; k < S.size(); ++k) {
            const double beta = rho[k] * dot(Y[k], q);
            for (size_t i = 0; i < n; ++i) q[i] += S[k][i] * (alpha_buf[k] - beta);
        }
        for (size_t i = 0; i < n; ++i) d[i] = (pg[i] == 0.0 && res.gradient[i] != 0.0) ? 0.0 : -q[i];
        double slope = dot(d, res.gradient);
        if (!(slope < 0.0)) {
            S.clear(), Y.clear(), rho.clear();
            for (size_t i = 0; i < n; ++i) d[i] = -pg[i];
            slope = dot(d, res.gradient);
        }

        double alpha_max = std::numeric_limits<double>::infinity();
        if (bounded)
            for (size_t i = 0; i < n; ++i) {
                if (d[i] < 0.0) alpha_max = std::min(alpha_max, (lo(i) - res.x[i]) / d[i]);
                else if (d[i] > 0.0) alpha_max = std::min(alpha_max, (hi(i) - res.x[i]) / d[i]);
            }
        double alpha0 = 1.0;
        if (S.empty()) alpha0 = std::min(1.0, 1.0 / std::sqrt(dot(pg, pg)));
        alpha0 = std::min(alpha0, alpha_max);

        // Strong-Wolfe search on phi(a) = f(x + a d).
        detail::Point start{0.0, res.value, slope, res.x, res.gradient};
        auto eval = [&](double a) {
            detail::Point p;
            p.alpha = a;
            p.x.resize(n);
            for (size_t i = 0; i < n; ++i) p.x[i] = std::clamp(res.x[i] + a * d[i], lo(i), hi(i));
            p.g.assign(n, 0.0);
            p.f = fn(p.x, p.g);
            ++res.evaluations;
            p.df = dot(p.g, d);
            return p;
        };
        const double f_slack = opt.approx_wolfe_eps * std::abs(start.f);
        auto armijo = [&](const detail::Point& p) { return p.f <= start.f + opt.c1 * p.alpha * slope; };
        auto curvature = [&](const detail::Point& p) { return std::abs(p.df) <= -opt.c2 * slope; };
        auto approx_wolfe = [&](const detail::Point& p) {
            return p.f <= start.f + f_slack && p.df >= opt.c2 * slope && p.df <= (2.0 * opt.c1 - 1.0) * slope;
        };

        std::optional<detail::Point> accepted;
        bool non_finite = false;
        auto zoom = [&](detail::Point low, detail::Point high, int budget) -> std::optional<detail::Point> {
            for (int k = 0; k < budget; ++k) {
                if (std::abs(high.alpha - low.alpha) <= 1e-16 * std::max(1.0, low.alpha)) break;
                detail::Point p = eval(detail::cubic_minimizer(low, high));
                if (!std::isfinite(p.f) || !all_finite(p.g)) {
                    high = p;
                    high.f = std::numeric_limits<double>::infinity();
                    high.df = 0.0;
                    continue;
                }
                if (approx_wolfe(p)) return p;
                if (!armijo(p) || p.f >= low.f) {
                    high = std::move(p);
                } else {
                    if (curvature(p)) return p;
                    if (p.df * (high.alpha - low.alpha) >= 0.0) high = low;
                    low = std::move(p);
                }
            }
            if (low.alpha > 0.0) return low;
            return std::nullopt;
        };

        detail::Point prev = start;
        double a = alpha0;
        for (int k = 0; k < opt.max_line_search; ++k) {
            detail::Point p = eval(a);
            if (!std::isfinite(p.f) || !all_finite(p.g)) {
                non_finite = true;
                a = 0.5 * (prev.alpha + a);
                if (a - prev.alpha <= 1e-20) break;
                continue;
            }
            non_finite = false;
            if (approx_wolfe(p)) {
                accepted = std::move(p);
                break;
            }
            if (!armijo(p) || (k > 0 && p.f >= prev.f)) {
                accepted = zoom(prev, p, opt.max_line_search);
                break;
            }
            if (curvature(p)) {
                accepted = std::move(p);
                break;
            }
            if (p.df >= 0.0) {
                accepted = zoom(p, prev, opt.max_line_search);
                break;
            }
            if (a >= alpha_max) {
                accepted = std::move(p);
                break;
            }
            prev = std::move(p);
            a = std::min(2.0 * a, alpha_max);
        }
        if (!accepted && prev.alpha > 0.0) accepted = prev;

        if (!accepted) {
            if (!retried && !S.empty()) {
                retried = true;
                S.clear(), Y.clear(), rho.clear();
                --iter;
                continue;
            }
            res.status = non_finite ? Status::NonFinite : Status::LineSearchFailed;
            return res;
        }
        retried = false;

        std::vector<double> s(n), y(n);
        for (size_t i = 0; i < n; ++i) {
            s[i] = accepted->x[i] - res.x[i];
            y[i] = accepted->g[i] - res.gradient[i];
        }
        const double sy = dot(s, y);
        if (sy > 1e-12 * std::sqrt(dot(s, s) * dot(y, y))) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opt.memory) S.pop_front(), Y.pop_front(), rho.pop_front();
        }
        res.x = std::move(accepted->x);
        res.gradient = std::move(accepted->g);
        res.value = accepted->f;
        res.gradient_norm = projected(res.x, res.gradient);
        res.iterations = iter + 1;
        if (opt.on_iteration)
            opt.on_iteration({res.iterations, res.value, res.gradient_norm, accepted->alpha, res.evaluations});
    }
}

} // namespace camel::opt
