#pragma once

#include <span>
#include <vector>

#include "camel/math.hpp"
#include "camel/model.hpp"

namespace camel {

/// Per-cluster distributions over local assignments (enumeration order).
/// Sepset marginals are always derived, never stored.
struct PseudoMarginals {
    std::vector<std::vector<double>> clusters;

    const std::vector<double>& operator[](size_t pos) const { return clusters[pos]; }
    std::vector<double>& operator[](size_t pos) { return clusters[pos]; }
    size_t size() const { return clusters.size(); }
};

inline PseudoMarginals uniform_marginals(const Model& model) {
    PseudoMarginals p;
    for (size_t i = 0; i < model.graph.size(); ++i) {
        const size_t k = model.graph.indexer(i).size();
        p.clusters.emplace_back(k, 1.0 / static_cast<double>(k));
    }
    return p;
}

/// Marginal of cluster `from` on the sepset of `edge`.
inline std::vector<double> sepset_marginal(const Model& model, const PseudoMarginals& pi, size_t edge, size_t from) {
    const Edge& e = model.graph.edges()[edge];
    const auto& proj = model.graph.projection(edge, from);
    std::vector<double> mu(e.sep_index.size(), 0.0);
    for (size_t a = 0; a < proj.size(); ++a) mu[static_cast<size_t>(proj[a])] += pi[from][a];
    return mu;
}

/// Sepset marginal computed from the edge's source cluster.
inline std::vector<double> sepset_marginal(const Model& model, const PseudoMarginals& pi, size_t edge) {
    return sepset_marginal(model, pi, edge, model.graph.edges()[edge].source);
}

/// Sum of cluster entropies.
inline double cluster_entropy_sum(const PseudoMarginals& pi) {
    double h = 0.0;
    for (const auto& c : pi.clusters) h += entropy(c);
    return h;
}

/// Sum_i H(pi_i) - Sum_edges H(mu_ij), mu from source clusters.
inline double bethe_entropy(const Model& model, const PseudoMarginals& pi) {
    double h = cluster_entropy_sum(pi);
    for (size_t e = 0; e < model.graph.edges().size(); ++e) h -= entropy(sepset_marginal(model, pi, e));
    return h;
}

/// The CAMEL objective value. Feasibility is measured separately.
inline double camel_objective(const Model& model, const PseudoMarginals& pi) { return bethe_entropy(model, pi); }

/// Objective of piecewise training: negative sepset entropies dropped.
inline double piecewise_objective(const PseudoMarginals& pi) { return cluster_entropy_sum(pi); }

/// Offsets of each edge's block in a flat (edge, sepset assignment) vector.
inline std::vector<size_t> sepset_offsets(const Model& model) {
    std::vector<size_t> off;
    size_t n = 0;
    for (const auto& e : model.graph.edges()) {
        off.push_back(n);
        n += e.sep_index.size();
    }
    off.push_back(n);
    return off;
}

/// E_pi[h_ij^s] = mu_source(s) - mu_target(s) for every edge and sepset
/// assignment, flattened edge-major.
inline std::vector<double> consistency_residuals(const Model& model, const PseudoMarginals& pi) {
    std::vector<double> r;
    r.reserve(model.graph.sepset_entries());
    for (size_t e = 0; e < model.graph.edges().size(); ++e) {
        const Edge& edge = model.graph.edges()[e];
        auto ms = sepset_marginal(model, pi, e, edge.source);
        auto mt = sepset_marginal(model, pi, e, edge.target);
        for (size_t s = 0; s < ms.size(); ++s) r.push_back(ms[s] - mt[s]);
    }
    return r;
}

/// Sum_i E_{pi_i}[f] pooled over clusters.
inline std::vector<double> expected_features(const Model& model, const PseudoMarginals& pi) {
    std::vector<double> e(model.num_features(), 0.0);
    for (size_t i = 0; i < model.graph.size(); ++i)
        for (size_t a = 0; a < pi[i].size(); ++a)
            if (pi[i][a] != 0.0) model.features.accumulate(i, a, pi[i][a], e);
    return e;
}

/// Sum_i E_{pi_i}[f_l] - empirical_l.
inline std::vector<double> moment_residuals(const Model& model, const PseudoMarginals& pi,
                                            std::span<const double> empirical) {
    auto e = expected_features(model, pi);
    for (size_t l = 0; l < e.size(); ++l) e[l] -= empirical[l];
    return e;
}

/// Moment residuals pooled across contexts with their weights.
inline std::vector<double> pooled_moment_residuals(const Model& model, const std::vector<Context>& contexts,
                                                   const std::vector<PseudoMarginals>& pis) {
    std::vector<double> r(model.num_features(), 0.0);
    for (size_t c = 0; c < contexts.size(); ++c) {
        auto rc = moment_residuals(model, pis[c], contexts[c].empirical);
        for (size_t l = 0; l < r.size(); ++l) r[l] += contexts[c].weight * rc[l];
    }
    return r;
}

/// Largest |E_pi[h]| over all contexts.
inline double max_consistency_residual(const Model& model, const std::vector<PseudoMarginals>& pis) {
    double m = 0.0;
    for (const auto& p : pis) m = std::max(m, inf_norm(consistency_residuals(model, p)));
    return m;
}

/// Empirical cluster marginals of the instances in a context (unsmoothed).
inline PseudoMarginals empirical_marginals(const Model& model, const Dataset& data, const Context& ctx) {
    PseudoMarginals p;
    const double scale = 1.0 / static_cast<double>(ctx.instances.size());
    for (size_t i = 0; i < model.graph.size(); ++i) {
        const auto& idx = model.graph.indexer(i);
        std::vector<double> t(idx.size(), 0.0);
        for (size_t m : ctx.instances) t[static_cast<size_t>(idx.index_of_full(data.instances[m]))] += scale;
        p.clusters.push_back(std::move(t));
    }
    return p;
}

} // namespace camel
