#pragma once

#include <chrono>
#include <cmath>
#include <ostream>
#include <vector>

#include "camel/dual_solver.hpp"
#include "camel/model.hpp"
#include "camel/objective.hpp"

namespace camel {

enum class LinearizationStyle { SourceOnly, SplitHalf };
enum class InitMode { Zero, Empirical };

struct CccpConfig {
    /// Stop when max |g_new - g_old| falls to this value.
    double tolerance = 1e-4;
    int max_outer = 50;
    LinearizationStyle style = LinearizationStyle::SourceOnly;
    InitMode init = InitMode::Zero;
    SolverConfig inner;
    /// Floor on sepset marginals inside the log.
    double floor = 1e-12;
};

/// Gradient of the sepset entropies at pi, for one context.
inline std::vector<std::vector<double>> relinearize(const Model& model, const PseudoMarginals& pi,
                                                    LinearizationStyle style, double floor = 1e-12) {
    std::vector<std::vector<double>> g;
    for (size_t i = 0; i < model.graph.size(); ++i) g.emplace_back(model.graph.indexer(i).size(), 0.0);
    for (size_t e = 0; e < model.graph.edges().size(); ++e) {
        const Edge& edge = model.graph.edges()[e];
        if (style == LinearizationStyle::SourceOnly) {
            const auto mu = sepset_marginal(model, pi, e, edge.source);
            const auto& proj = edge.source_projection;
            for (size_t a = 0; a < proj.size(); ++a)
                g[edge.source][a] += -1.0 - std::log(std::max(mu[static_cast<size_t>(proj[a])], floor));
        } else {
            auto mu = sepset_marginal(model, pi, e, edge.source);
            const auto mt = sepset_marginal(model, pi, e, edge.target);
            for (size_t s = 0; s < mu.size(); ++s) mu[s] = 0.5 * (mu[s] + mt[s]);
            for (size_t end : {edge.source, edge.target}) {
                const auto& proj = model.graph.projection(e, end);
                for (size_t a = 0; a < proj.size(); ++a)
                    g[end][a] += 0.5 * (-1.0 - std::log(std::max(mu[static_cast<size_t>(proj[a])], floor)));
            }
        }
    }
    return g;
}

inline Linearization relinearize(const Model& model, const std::vector<PseudoMarginals>& pis, LinearizationStyle style,
                                 double floor = 1e-12) {
    Linearization lin;
    for (const auto& p : pis) lin.g.push_back(relinearize(model, p, style, floor));
    return lin;
}

/// Empirical cluster marginals with a pseudo-count of 1/(M*K) added to each
/// allowed cell's frequency (K = allowed cells of the cluster), renormalized.
inline PseudoMarginals smoothed_empirical_marginals(const Model& model, const Dataset& data, const Context& ctx) {
    auto p = empirical_marginals(model, data, ctx);
    const double M = static_cast<double>(data.size());
    for (size_t i = 0; i < p.size(); ++i) {
        const double K = static_cast<double>(ctx.allowed[i].size());
        double total = 0.0;
        for (int a : ctx.allowed[i]) {
            p[i][static_cast<size_t>(a)] += 1.0 / (M * K);
            total += p[i][static_cast<size_t>(a)];
        }
        for (double& v : p[i]) v /= total;
    }
    return p;
}

inline Linearization init_linearization(const Model& model, const Dataset& data, const std::vector<Context>& contexts,
                                        InitMode mode, LinearizationStyle style = LinearizationStyle::SourceOnly,
                                        double floor = 1e-12) {
    if (mode == InitMode::Zero) return Linearization::zero(model, contexts.size());
    std::vector<PseudoMarginals> hat;
    for (const auto& ctx : contexts) hat.push_back(smoothed_empirical_marginals(model, data, ctx));
    return relinearize(model, hat, style, floor);
}

inline Linearization init_linearization(const Model& model, const Dataset& data, InitMode mode,
                                        LinearizationStyle style = LinearizationStyle::SourceOnly) {
    return init_linearization(model, data, make_contexts(model, data), mode, style);
}

struct CccpTraceEntry {
    int outer = 0;
    double objective = 0.0;
    double max_moment_residual = 0.0;
    double max_consistency_residual = 0.0;
    int inner_iterations = 0;
    double wall_seconds = 0.0;
    bool inner_converged = false;
    double g_change = 0.0;
};

struct CccpResult {
    InnerSolution solution;
    /// Linearization the final solution was computed with.
    Linearization g;
    std::vector<CccpTraceEntry> trace;
    int warmup_iterations = 0;
    bool converged = false;
};

/// Context-weighted CAMEL objective.
inline double camel_objective(const Model& model, const std::vector<Context>& contexts,
                              const std::vector<PseudoMarginals>& pis) {
    double v = 0.0;
    for (size_t c = 0; c < contexts.size(); ++c) v += contexts[c].weight * camel_objective(model, pis[c]);
    return v;
}

/// The quantity CCCP ascends: the CAMEL objective, minus the Gaussian-prior
/// penalty (sigma2 M / 2) |r|^2 on the pooled moment residuals when regularized.
inline double camel_objective(const Model& model, const std::vector<Context>& contexts, size_t num_instances,
                              const std::vector<PseudoMarginals>& pis, std::optional<double> sigma2) {
    double v = camel_objective(model, contexts, pis);
    if (sigma2) {
        const auto r = pooled_moment_residuals(model, contexts, pis);
        v -= 0.5 * *sigma2 * static_cast<double>(num_instances) * dot(r, r);
    }
    return v;
}

/// Concave-convex procedure on the CAMEL objective: linearize the sepset
/// entropies, solve the consistency-constrained dual, relinearize at the new
/// pseudo-marginals, until the linearization stops moving.
inline CccpResult cccp_train(const Model& model, const Dataset& data, const CccpConfig& config) {
    using clock = std::chrono::steady_clock;
    const auto contexts = make_contexts(model, data);
    CccpResult out;

    // Same warm-up as CAMEL(0): the zero-init first iterate reproduces it exactly.
    DualProblem pw_problem(model, contexts, data.size(), Linearization::zero(model, contexts.size()), false,
                           config.inner.sigma2, config.inner.threads);
    auto pw = solve_inner(pw_problem, config.inner);
    out.warmup_iterations = pw.diagnostics.iterations;
    DualParams warm{pw.params.w, {}, false, 0};

    Linearization g = init_linearization(model, data, contexts, config.init, config.style, config.floor);
    for (int t = 1; t <= config.max_outer; ++t) {
        const auto start = clock::now();
        DualProblem dp(model, contexts, data.size(), g, true, config.inner.sigma2, config.inner.threads);
        SolverConfig inner = config.inner;
        inner.warm_start = warm;
        auto sol = solve_inner(dp, inner);
        auto next = relinearize(model, sol.marginals, config.style, config.floor);

        CccpTraceEntry entry;
        entry.outer = t;
        entry.objective = camel_objective(model, contexts, data.size(), sol.marginals, config.inner.sigma2);
        entry.max_moment_residual = inf_norm(pooled_moment_residuals(model, contexts, sol.marginals));
        entry.max_consistency_residual = max_consistency_residual(model, sol.marginals);
        entry.inner_iterations = sol.diagnostics.iterations;
        entry.inner_converged = sol.diagnostics.converged();
        entry.g_change = Linearization::max_change(next, g);
        entry.wall_seconds = std::chrono::duration<double>(clock::now() - start).count();
        out.trace.push_back(entry);

        warm = sol.params;
        out.solution = std::move(sol);
        out.g = std::move(g);
        if (entry.g_change <= config.tolerance) {
            out.converged = true;
            break;
        }
        g = std::move(next);
    }
    return out;
}

/// Tab-separated trace: outer, objective, max moment residual, max consistency
/// residual, inner iterations, wall time.
inline void write_trace(std::ostream& os, const std::vector<CccpTraceEntry>& trace) {
    os << "outer\tobjective\tmax_moment_residual\tmax_consistency_residual\tinner_iterations\twall_seconds\n";
    for (const auto& e : trace)
        os << e.outer << '\t' << e.objective << '\t' << e.max_moment_residual << '\t' << e.max_consistency_residual
           << '\t' << e.inner_iterations << '\t' << e.wall_seconds << '\n';
}

} // namespace camel
