#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camel/lbfgs.hpp"
#include "camel/math.hpp"
#include "camel/model.hpp"
#include "camel/objective.hpp"

namespace camel {

inline constexpr double kDefaultJointCap = 16777216.0; // 2^24

/// Probabilities over the joint assignments of the free variables, in
/// lexicographic order (lowest variable index most significant).
struct JointTable {
    std::vector<int> free_vars;
    std::vector<double> probabilities;
};

/// Enumerates full assignments that agree with `evidence`, calling visit(x)
/// for each in lexicographic order.
template <class Visit>
void for_each_assignment(const VariableSpace& space, std::span<const int> evidence, double cap, Visit&& visit) {
    std::vector<int> free_vars;
    double log_size = 0.0;
    for (size_t v = 0; v < space.size(); ++v)
        if (evidence[v] == kFree) {
            free_vars.push_back(static_cast<int>(v));
            log_size += std::log(static_cast<double>(space.cardinality(v)));
        }
    if (log_size > std::log(cap) + 1e-9)
        throw ModelError("joint space of " + std::to_string(std::exp(log_size)) + " assignments exceeds the cap of " +
                         std::to_string(static_cast<long long>(cap)));
    Assignment x(evidence.begin(), evidence.end());
    for (int v : free_vars) x[static_cast<size_t>(v)] = 0;
    for (;;) {
        visit(std::as_const(x));
        size_t k = free_vars.size();
        for (; k-- > 0;) {
            auto& s = x[static_cast<size_t>(free_vars[k])];
            if (++s < space.cardinality(static_cast<size_t>(free_vars[k]))) break;
            s = 0;
        }
        if (k == static_cast<size_t>(-1)) return;
    }
}

namespace detail {

/// Streaming log-sum-exp accumulator.
struct LogSum {
    double top = kNegInf;
    double acc = 0.0;
    void add(double v) {
        if (v == kNegInf) return;
        if (v > top) {
            acc = acc * std::exp(top - v) + 1.0;
            top = v;
        } else {
            acc += std::exp(v - top);
        }
    }
    double value() const { return top == kNegInf ? kNegInf : top + std::log(acc); }
};

inline std::vector<std::vector<double>> score_tables(const Model& model, std::span<const double> w) {
    std::vector<std::vector<double>> t;
    for (size_t i = 0; i < model.graph.size(); ++i) t.push_back(model.cluster_scores(i, w));
    return t;
}

inline double joint_score(const Model& model, const std::vector<std::vector<double>>& tables, const Assignment& x) {
    double s = 0.0;
    for (size_t i = 0; i < tables.size(); ++i) s += tables[i][static_cast<size_t>(model.graph.indexer(i).index_of_full(x))];
    return s;
}

inline Assignment no_evidence(const Model& model) { return Assignment(model.space.size(), kFree); }

} // namespace detail

/// log sum_x exp(w.f(x)) over assignments consistent with the evidence.
inline double exact_log_partition(const Model& model, std::span<const double> w, std::span<const int> evidence,
                                  double cap = kDefaultJointCap) {
    const auto tables = detail::score_tables(model, w);
    detail::LogSum ls;
    for_each_assignment(model.space, evidence, cap, [&](const Assignment& x) { ls.add(detail::joint_score(model, tables, x)); });
    return ls.value();
}

inline double exact_log_partition(const Model& model, std::span<const double> w, double cap = kDefaultJointCap) {
    return exact_log_partition(model, w, detail::no_evidence(model), cap);
}

inline JointTable exact_joint(const Model& model, std::span<const double> w, std::span<const int> evidence,
                              double cap = kDefaultJointCap) {
    JointTable jt;
    for (size_t v = 0; v < model.space.size(); ++v)
        if (evidence[v] == kFree) jt.free_vars.push_back(static_cast<int>(v));
    const auto tables = detail::score_tables(model, w);
    for_each_assignment(model.space, evidence, cap,
                        [&](const Assignment& x) { jt.probabilities.push_back(detail::joint_score(model, tables, x)); });
    normalize_log_weights(jt.probabilities);
    return jt;
}

inline JointTable exact_joint(const Model& model, std::span<const double> w, double cap = kDefaultJointCap) {
    return exact_joint(model, w, detail::no_evidence(model), cap);
}

/// True cluster marginals of P_w (conditioned on the evidence).
inline PseudoMarginals exact_marginals(const Model& model, std::span<const double> w, std::span<const int> evidence,
                                       double cap = kDefaultJointCap) {
    const auto tables = detail::score_tables(model, w);
    detail::LogSum ls;
    for_each_assignment(model.space, evidence, cap, [&](const Assignment& x) { ls.add(detail::joint_score(model, tables, x)); });
    const double lz = ls.value();
    PseudoMarginals pm;
    for (size_t i = 0; i < model.graph.size(); ++i) pm.clusters.emplace_back(model.graph.indexer(i).size(), 0.0);
    for_each_assignment(model.space, evidence, cap, [&](const Assignment& x) {
        const double p = std::exp(detail::joint_score(model, tables, x) - lz);
        for (size_t i = 0; i < model.graph.size(); ++i)
            pm[i][static_cast<size_t>(model.graph.indexer(i).index_of_full(x))] += p;
    });
    return pm;
}

inline PseudoMarginals exact_marginals(const Model& model, std::span<const double> w, double cap = kDefaultJointCap) {
    return exact_marginals(model, w, detail::no_evidence(model), cap);
}

/// -sum q log q with 0 log 0 = 0.
inline double exact_entropy(const JointTable& joint) { return entropy(joint.probabilities); }

/// Average (conditional) log-likelihood minus ||w||^2 / (2 sigma2 M). Writes the
/// gradient when `grad` is non-empty.
inline double exact_log_likelihood(const Model& model, const std::vector<Context>& contexts, size_t num_instances,
                                   std::span<const double> w, std::optional<double> sigma2, std::span<double> grad,
                                   double cap = kDefaultJointCap) {
    const size_t L = model.num_features();
    double value = 0.0;
    if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    for (const auto& ctx : contexts) {
        value += ctx.weight * dot(w, ctx.empirical);
        if (grad.empty()) {
            value -= ctx.weight * exact_log_partition(model, w, ctx.evidence, cap);
            continue;
        }
        // Single enumeration for log Z and the expected features.
        const auto tables = detail::score_tables(model, w);
        detail::LogSum ls;
        for_each_assignment(model.space, ctx.evidence, cap,
                            [&](const Assignment& x) { ls.add(detail::joint_score(model, tables, x)); });
        const double lz = ls.value();
        value -= ctx.weight * lz;
        std::vector<double> expect(L, 0.0);
        for_each_assignment(model.space, ctx.evidence, cap, [&](const Assignment& x) {
            const double p = std::exp(detail::joint_score(model, tables, x) - lz);
            for (size_t i = 0; i < model.graph.size(); ++i)
                model.features.accumulate(i, static_cast<size_t>(model.graph.indexer(i).index_of_full(x)), p, expect);
        });
        for (size_t l = 0; l < L; ++l) grad[l] += ctx.weight * (ctx.empirical[l] - expect[l]);
    }
    if (sigma2) {
        const double denom = *sigma2 * static_cast<double>(num_instances);
        value -= dot(w, w) / (2.0 * denom);
        if (!grad.empty())
            for (size_t l = 0; l < L; ++l) grad[l] -= w[l] / denom;
    }
    return value;
}

struct ExactMlConfig {
    std::optional<double> sigma2;
    double tolerance = 1e-7;
    int max_iterations = 2000;
    int memory = 10;
    double cap = kDefaultJointCap;
    std::vector<double> initial_weights;
};

struct ExactMlResult {
    std::vector<double> weights;
    double log_likelihood = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    opt::Status status = opt::Status::MaxIterations;
    bool converged() const { return status == opt::Status::Converged; }
};

/// Maximum (conditional) likelihood with exact inference.
inline ExactMlResult exact_ml_train(const Model& model, const Dataset& data, const ExactMlConfig& config = {}) {
    const auto contexts = make_contexts(model, data);
    for (const auto& ctx : contexts) {
        double log_size = 0.0;
        for (size_t v = 0; v < model.space.size(); ++v)
            if (ctx.evidence[v] == kFree) log_size += std::log(static_cast<double>(model.space.cardinality(v)));
        if (log_size > std::log(config.cap) + 1e-9)
            throw ModelError("joint space exceeds the cap of " + std::to_string(static_cast<long long>(config.cap)));
    }
    const size_t L = model.num_features();
    opt::LbfgsOptions lo;
    lo.tolerance = config.tolerance;
    lo.max_iterations = config.max_iterations;
    lo.memory = config.memory;
    auto fn = [&](std::span<const double> w, std::span<double> g) {
        const double v = exact_log_likelihood(model, contexts, data.size(), w, config.sigma2, g, config.cap);
        for (double& x : g) x = -x;
        return -v;
    };
    std::vector<double> w0 = config.initial_weights.empty() ? std::vector<double>(L, 0.0) : config.initial_weights;
    auto r = opt::minimize(fn, std::move(w0), lo);
    return {std::move(r.x), -r.value, r.gradient_norm, r.iterations, r.status};
}

} // namespace camel
