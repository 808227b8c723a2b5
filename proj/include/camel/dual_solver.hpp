#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <sstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "camel/lbfgs.hpp"
#include "camel/math.hpp"
#include "camel/model.hpp"
#include "camel/objective.hpp"
#include "camel/parallel.hpp"

namespace camel {

/// Raised when the dual objective becomes non-finite; the message carries a
/// dump of the optimizer state.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dual variables: feature weights w and, when consistency is enforced, one
/// multiplier per (context, edge, sepset assignment), stored context-major.
struct DualParams {
    std::vector<double> w;
    std::vector<double> delta;
    bool consistency = false;
    size_t num_contexts = 0;
};

/// Linear term g subtracted from cluster log-potentials, indexed
/// [context][cluster position][local assignment].
struct Linearization {
    std::vector<std::vector<std::vector<double>>> g;

    static Linearization zero(const Model& model, size_t num_contexts) {
        Linearization lin;
        lin.g.resize(num_contexts);
        for (auto& ctx : lin.g)
            for (size_t i = 0; i < model.graph.size(); ++i) ctx.emplace_back(model.graph.indexer(i).size(), 0.0);
        return lin;
    }

    /// Largest |a - b| over all entries.
    static double max_change(const Linearization& a, const Linearization& b) {
        double m = 0.0;
        for (size_t c = 0; c < a.g.size(); ++c)
            for (size_t i = 0; i < a.g[c].size(); ++i)
                for (size_t k = 0; k < a.g[c][i].size(); ++k) m = std::max(m, std::abs(a.g[c][i][k] - b.g[c][i][k]));
        return m;
    }
};

struct SolverConfig {
    double tolerance = 1e-6;
    int max_iterations = 1000;
    int memory = 10;
    std::optional<double> sigma2;
    std::optional<DualParams> warm_start;
    /// Bound on |w_l|; keeps Z finite when an empirical moment sits on the
    /// boundary of what the features can express.
    double weight_cap = 30.0;
    int threads = 1;
    std::function<void(const opt::IterationRecord&)> on_iteration;
};

struct SolverDiagnostics {
    double value = 0.0;
    int iterations = 0;
    int evaluations = 0;
    /// Iterations spent in a preceding warm-up phase (piecewise before CAMEL(0)).
    int warmup_iterations = 0;
    double gradient_norm = 0.0;
    opt::Status status = opt::Status::MaxIterations;
    std::vector<int> capped_features;

    bool converged() const { return status == opt::Status::Converged; }
};

struct InnerSolution {
    DualParams params;
    std::vector<PseudoMarginals> marginals; ///< one per context
    SolverDiagnostics diagnostics;
};

/// The concave dual of the linearized subproblem: a sum over contexts and
/// clusters of local log-likelihoods with shared w and consistency multipliers.
class DualProblem {
public:
    DualProblem(const Model& model, std::vector<Context> contexts, size_t num_instances, Linearization g,
                bool consistency, std::optional<double> sigma2 = std::nullopt, int threads = 1)
        : model_(&model), contexts_(std::move(contexts)), num_instances_(num_instances), g_(std::move(g)),
          consistency_(consistency), sigma2_(sigma2), threads_(threads), offsets_(sepset_offsets(model)) {
        if (g_.g.size() != contexts_.size()) throw ModelError("linearization does not match the context count");
    }

    const Model& model() const { return *model_; }
    const std::vector<Context>& contexts() const { return contexts_; }
    const Linearization& linearization() const { return g_; }
    bool consistency() const { return consistency_; }
    size_t num_weights() const { return model_->num_features(); }
    size_t delta_block() const { return offsets_.back(); }
    size_t dimension() const { return num_weights() + (consistency_ ? contexts_.size() * delta_block() : 0); }

    std::vector<double> pack(const DualParams& p) const {
        std::vector<double> theta(dimension(), 0.0);
        std::copy(p.w.begin(), p.w.end(), theta.begin());
        if (consistency_ && p.consistency && p.delta.size() == theta.size() - num_weights())
            std::copy(p.delta.begin(), p.delta.end(), theta.begin() + static_cast<std::ptrdiff_t>(num_weights()));
        return theta;
    }

    DualParams unpack(std::span<const double> theta) const {
        DualParams p;
        p.w.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(num_weights()));
        p.consistency = consistency_;
        p.num_contexts = contexts_.size();
        if (consistency_) p.delta.assign(theta.begin() + static_cast<std::ptrdiff_t>(num_weights()), theta.end());
        return p;
    }

    /// Convergence scaling: delta gradients of a context carry its weight, so
    /// they are divided back out to compare residuals on a common scale.
    std::vector<double> gradient_scale() const {
        std::vector<double> s(dimension(), 1.0);
        if (consistency_)
            for (size_t c = 0; c < contexts_.size(); ++c)
                for (size_t k = 0; k < delta_block(); ++k) s[num_weights() + c * delta_block() + k] = 1.0 / contexts_[c].weight;
        return s;
    }

    /// Log-potentials w.f + sum sign * delta - g of one cluster in one context,
    /// for its allowed entries (others are -inf).
    std::vector<double> log_potentials(std::span<const double> theta, size_t ctx, size_t cluster) const {
        const auto& idx = model_->graph.indexer(cluster);
        std::vector<double> s(idx.size(), kNegInf);
        const auto& gi = g_.g[ctx][cluster];
        for (int a : contexts_[ctx].allowed[cluster]) {
            const auto ua = static_cast<size_t>(a);
            s[ua] = model_->features.score(cluster, ua, theta) - gi[ua];
        }
        if (consistency_) {
            const double* delta = theta.data() + num_weights() + ctx * delta_block();
            for (size_t e : model_->graph.incident(cluster)) {
                const double sign = model_->graph.edges()[e].source == cluster ? 1.0 : -1.0;
                const auto& proj = model_->graph.projection(e, cluster);
                for (int a : contexts_[ctx].allowed[cluster]) {
                    const auto ua = static_cast<size_t>(a);
                    s[ua] += sign * delta[offsets_[e] + static_cast<size_t>(proj[ua])];
                }
            }
        }
        return s;
    }

    PseudoMarginals potentials(std::span<const double> theta, size_t ctx) const {
        PseudoMarginals pm;
        for (size_t i = 0; i < model_->graph.size(); ++i) {
            auto s = log_potentials(theta, ctx, i);
            normalize_log_weights(s);
            pm.clusters.push_back(std::move(s));
        }
        return pm;
    }

    std::vector<PseudoMarginals> potentials(std::span<const double> theta) const {
        std::vector<PseudoMarginals> out;
        for (size_t c = 0; c < contexts_.size(); ++c) out.push_back(potentials(theta, c));
        return out;
    }

    /// Dual value (to be maximized) and its gradient.
    double evaluate(std::span<const double> theta, std::span<double> grad) const {
        const size_t L = num_weights();
        const size_t C = contexts_.size();
        std::vector<double> ctx_value(C, 0.0);
        std::vector<std::vector<double>> ctx_wgrad(C);
        std::fill(grad.begin(), grad.end(), 0.0);

        parallel_for(C, threads_, [&](size_t c) {
            const Context& ctx = contexts_[c];
            auto& wg = ctx_wgrad[c];
            wg = ctx.empirical;
            double v = dot(theta.first(L), ctx.empirical);
            double* dgrad = consistency_ ? grad.data() + L + c * delta_block() : nullptr;
            for (size_t i = 0; i < model_->graph.size(); ++i) {
                auto s = log_potentials(theta, c, i);
                v -= normalize_log_weights(s);
                for (int a : ctx.allowed[i]) {
                    const auto ua = static_cast<size_t>(a);
                    if (s[ua] != 0.0) model_->features.accumulate(i, ua, -s[ua], wg);
                }
                if (dgrad)
                    for (size_t e : model_->graph.incident(i)) {
                        const double sign = model_->graph.edges()[e].source == i ? 1.0 : -1.0;
                        const auto& proj = model_->graph.projection(e, i);
                        for (int a : ctx.allowed[i]) {
                            const auto ua = static_cast<size_t>(a);
                            dgrad[offsets_[e] + static_cast<size_t>(proj[ua])] -= ctx.weight * sign * s[ua];
                        }
                    }
            }
            ctx_value[c] = v;
        });

        double value = 0.0;
        for (size_t c = 0; c < C; ++c) {
            value += contexts_[c].weight * ctx_value[c];
            for (size_t l = 0; l < L; ++l) grad[l] += contexts_[c].weight * ctx_wgrad[c][l];
        }
        if (sigma2_) {
            const double denom = *sigma2_ * static_cast<double>(num_instances_);
            for (size_t l = 0; l < L; ++l) {
                value -= theta[l] * theta[l] / (2.0 * denom);
                grad[l] -= theta[l] / denom;
            }
        }
        return value;
    }

    /// Primal objective sum_c weight_c (sum_i H(pi_ci) - g_ci . pi_ci). With a
    /// prior, moment violations r cost (sigma2 M / 2) |r|^2.
    double primal_value(const std::vector<PseudoMarginals>& pis) const {
        double v = 0.0;
        for (size_t c = 0; c < contexts_.size(); ++c) v += contexts_[c].weight * linearized_entropy(pis, c);
        if (sigma2_) {
            const auto r = pooled_moment_residuals(*model_, contexts_, pis);
            v -= 0.5 * *sigma2_ * static_cast<double>(num_instances_) * dot(r, r);
        }
        return v;
    }

    /// Lagrangian at (pi, theta): linearized entropy plus w.(E_pi f - Ê) +
    /// delta.E_pi h, plus |w|^2 / (2 sigma2 M) under a prior.
    double primal_lagrangian(std::span<const double> theta, const std::vector<PseudoMarginals>& pis) const {
        const size_t L = num_weights();
        double v = 0.0;
        for (size_t c = 0; c < contexts_.size(); ++c) v += contexts_[c].weight * linearized_entropy(pis, c);
        if (sigma2_) v += dot(theta.first(L), theta.first(L)) / (2.0 * *sigma2_ * static_cast<double>(num_instances_));
        v += dot(theta.first(L), pooled_moment_residuals(*model_, contexts_, pis));
        if (consistency_)
            for (size_t c = 0; c < contexts_.size(); ++c) {
                auto r = consistency_residuals(*model_, pis[c]);
                v += contexts_[c].weight * dot(theta.subspan(L + c * delta_block(), delta_block()), r);
            }
        return v;
    }

private:
    double linearized_entropy(const std::vector<PseudoMarginals>& pis, size_t c) const {
        double v = 0.0;
        for (size_t i = 0; i < model_->graph.size(); ++i) v += entropy(pis[c][i]) - dot(g_.g[c][i], pis[c][i]);
        return v;
    }

    const Model* model_;
    std::vector<Context> contexts_;
    size_t num_instances_;
    Linearization g_;
    bool consistency_;
    std::optional<double> sigma2_;
    int threads_;
    std::vector<size_t> offsets_;
};

/// pi_i(c_i) proportional to exp(w.f(c_i) + sum_edges sign * delta - g(c_i)), per context.
inline std::vector<PseudoMarginals> cluster_potentials(const DualParams& params, const Linearization& g,
                                                       const Model& model, const std::vector<Context>& contexts) {
    DualProblem dp(model, contexts, 1, g, params.consistency);
    return dp.potentials(dp.pack(params));
}

/// Single-context (generative) form.
inline PseudoMarginals cluster_potentials(const DualParams& params, const Linearization& g, const Model& model) {
    Context ctx;
    ctx.evidence.assign(model.space.size(), kFree);
    ctx.allowed = allowed_entries(model, ctx.evidence);
    ctx.empirical.assign(model.num_features(), 0.0);
    return cluster_potentials(params, g, model, {ctx}).front();
}

struct DualEvaluation {
    double value = 0.0;
    std::vector<double> grad_w;
    std::vector<double> grad_delta;
};

inline DualEvaluation dual_value_and_gradient(const DualParams& params, const Linearization& g, const Model& model,
                                              const Dataset& data, std::optional<double> sigma2 = std::nullopt) {
    DualProblem dp(model, make_contexts(model, data), data.size(), g, params.consistency, sigma2);
    const auto theta = dp.pack(params);
    std::vector<double> grad(theta.size());
    DualEvaluation out;
    out.value = dp.evaluate(theta, grad);
    out.grad_w.assign(grad.begin(), grad.begin() + static_cast<std::ptrdiff_t>(dp.num_weights()));
    out.grad_delta.assign(grad.begin() + static_cast<std::ptrdiff_t>(dp.num_weights()), grad.end());
    return out;
}

/// Maximizes the dual of the linearized subproblem with L-BFGS.
inline InnerSolution solve_inner(const DualProblem& dp, const SolverConfig& config) {
    const size_t L = dp.num_weights();
    opt::LbfgsOptions lo;
    lo.tolerance = config.tolerance;
    lo.max_iterations = config.max_iterations;
    lo.memory = config.memory;
    lo.gradient_scale = dp.gradient_scale();
    lo.lower.assign(dp.dimension(), -std::numeric_limits<double>::infinity());
    lo.upper.assign(dp.dimension(), std::numeric_limits<double>::infinity());
    for (size_t l = 0; l < L; ++l) lo.lower[l] = -config.weight_cap, lo.upper[l] = config.weight_cap;
    lo.on_iteration = config.on_iteration;

    std::vector<double> theta0(dp.dimension(), 0.0);
    if (config.warm_start) {
        if (config.warm_start->w.size() != L) throw ModelError("warm start has the wrong number of weights");
        theta0 = dp.pack(*config.warm_start);
    }
    auto fn = [&](std::span<const double> theta, std::span<double> grad) {
        const double v = dp.evaluate(theta, grad);
        for (double& x : grad) x = -x;
        return -v;
    };
    auto r = opt::minimize(fn, std::move(theta0), lo);
    if (r.status == opt::Status::NonFinite) {
        std::ostringstream os;
        os << "non-finite dual value after " << r.iterations << " iterations; value=" << -r.value
           << " grad_norm=" << r.gradient_norm << " |theta|_inf=" << inf_norm(r.x) << " dimension=" << r.x.size();
        throw NumericalError(os.str());
    }
    InnerSolution sol;
    sol.params = dp.unpack(r.x);
    sol.marginals = dp.potentials(r.x);
    sol.diagnostics.value = -r.value;
    sol.diagnostics.iterations = r.iterations;
    sol.diagnostics.evaluations = r.evaluations;
    sol.diagnostics.gradient_norm = r.gradient_norm;
    sol.diagnostics.status = r.status;
    for (size_t l = 0; l < L; ++l)
        if (std::abs(r.x[l]) >= config.weight_cap - 1e-9) sol.diagnostics.capped_features.push_back(static_cast<int>(l));
    return sol;
}

inline InnerSolution solve_inner(const Model& model, const Dataset& data, const Linearization& g,
                                 const SolverConfig& config, bool consistency) {
    DualProblem dp(model, make_contexts(model, data), data.size(), g, consistency, config.sigma2, config.threads);
    return solve_inner(dp, config);
}

/// Piecewise training: zero linearization, no consistency multipliers.
inline InnerSolution piecewise_train(const Model& model, const Dataset& data, const SolverConfig& config) {
    const size_t contexts = data.mode == DataMode::Generative ? 1 : data.size();
    return solve_inner(model, data, Linearization::zero(model, contexts), config, false);
}

/// Piecewise training followed by the consistency-constrained problem warm
/// started from the piecewise weights with delta = 0.
inline InnerSolution camel0_train(const Model& model, const Dataset& data, const SolverConfig& config) {
    auto pw = piecewise_train(model, data, config);
    SolverConfig second = config;
    second.warm_start = DualParams{pw.params.w, {}, false, 0};
    const size_t contexts = data.mode == DataMode::Generative ? 1 : data.size();
    auto sol = solve_inner(model, data, Linearization::zero(model, contexts), second, true);
    sol.diagnostics.warmup_iterations = pw.diagnostics.iterations;
    return sol;
}

} // namespace camel
