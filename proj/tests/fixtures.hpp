#pragma once

// Shared builders and independent reference computations for the tests.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <vector>

#include "camel/camel.hpp"

namespace fixtures {

using namespace camel;

/// A, B, C binary; clusters AB, BC, AC; f00 and f11 shared by all three.
inline Model abc_model() {
    std::vector<Variable> vars{{"A", 2}, {"B", 2}, {"C", 2}};
    std::vector<Cluster> clusters{{0, {0, 1}}, {1, {1, 2}}, {2, {0, 2}}};
    std::vector<EdgeSpec> edges{{0, 1, {1}}, {0, 2, {0}}, {1, 2, {2}}};
    std::vector<FeatureModel::Table> tables(3, FeatureModel::Table(4));
    for (auto& t : tables) {
        t[0] = {{0, 1.0}};
        t[3] = {{1, 1.0}};
    }
    return make_model(vars, clusters, edges, {"f00", "f11"}, tables);
}

inline Dataset abc_data() {
    Dataset d;
    d.observed.assign(3, false);
    d.instances = {{0, 0, 1}, {0, 1, 0}, {1, 0, 0}};
    return d;
}

inline Dataset make_data(const Model& m, std::vector<Assignment> xs) {
    Dataset d;
    d.observed.assign(m.space.size(), false);
    d.instances = std::move(xs);
    return d;
}

inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

/// Pairwise model over `pairs` of binary (or `card`-ary) variables with a mix
/// of untied indicators, one tied agreement feature and per-node biases.
inline Model pairwise_model(int n, const std::vector<std::pair<int, int>>& pairs, std::mt19937_64& rng, int card = 2,
                            bool tied = true, EdgeRule rule = EdgeRule::RunningIntersection) {
    std::vector<Variable> vars;
    for (int v = 0; v < n; ++v) vars.push_back({"V" + std::to_string(v), card});
    std::vector<Cluster> clusters;
    for (auto [a, b] : pairs) clusters.push_back({static_cast<int>(clusters.size()), {a, b}});
    std::vector<std::string> names;
    std::vector<FeatureModel::Table> tables(clusters.size(), FeatureModel::Table(static_cast<size_t>(card * card)));
    if (tied) {
        names.push_back("agree");
        for (auto& t : tables)
            for (int s = 0; s < card; ++s) t[static_cast<size_t>(s * card + s)].push_back({0, 1.0});
    }
    for (size_t i = 0; i < clusters.size(); ++i)
        for (int a = 0; a < card * card; ++a)
            if (!tied || unit(rng) < 0.5) {
                names.push_back("u" + std::to_string(i) + "_" + std::to_string(a));
                tables[i][static_cast<size_t>(a)].push_back({static_cast<int>(names.size() - 1), uniform(rng, 0.5, 1.5)});
            }
    for (auto& t : tables)
        for (auto& row : t)
            std::sort(row.begin(), row.end(), [](const FeatureEntry& x, const FeatureEntry& y) { return x.feature < y.feature; });
    auto edges = ClusterGraph::derive_edges(clusters, vars.size(), rule);
    return make_model(vars, clusters, edges, names, tables);
}

/// Random tree over n variables: node k attaches to a uniform earlier node.
inline Model random_tree_model(int n, std::mt19937_64& rng, int card = 2, bool tied = true) {
    std::vector<std::pair<int, int>> pairs;
    for (int k = 1; k < n; ++k) pairs.emplace_back(static_cast<int>(rng() % static_cast<uint64_t>(k)), k);
    return pairwise_model(n, pairs, rng, card, tied);
}

inline Model loop_model(int n, std::mt19937_64& rng, bool tied = true) {
    std::vector<std::pair<int, int>> pairs;
    for (int k = 0; k + 1 < n; ++k) pairs.emplace_back(k, k + 1);
    pairs.emplace_back(0, n - 1);
    return pairwise_model(n, pairs, rng, 2, tied, EdgeRule::AllPairs);
}

inline Model grid_model(int side, std::mt19937_64& rng, bool tied = true) {
    std::vector<std::pair<int, int>> pairs;
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            if (c + 1 < side) pairs.emplace_back(r * side + c, r * side + c + 1);
            if (r + 1 < side) pairs.emplace_back(r * side + c, (r + 1) * side + c);
        }
    return pairwise_model(side * side, pairs, rng, 2, tied);
}

inline std::vector<double> random_vector(size_t n, std::mt19937_64& rng, double scale) {
    std::vector<double> v(n);
    for (double& x : v) x = uniform(rng, -scale, scale);
    return v;
}

/// Samples by brute-force inverse CDF with the test's own enumeration.
inline Dataset sample(const Model& m, std::span<const double> w, size_t M, std::mt19937_64& rng) {
    std::vector<Assignment> xs;
    std::vector<double> logp;
    Assignment x(m.space.size(), 0);
    for (;;) {
        xs.push_back(x);
        logp.push_back(m.total_score(x, w));
        size_t k = x.size();
        while (k-- > 0) {
            if (++x[k] < m.space.cardinality(k)) break;
            x[k] = 0;
        }
        if (k == static_cast<size_t>(-1)) break;
    }
    const double top = *std::max_element(logp.begin(), logp.end());
    std::vector<double> cdf;
    double acc = 0.0;
    for (double l : logp) cdf.push_back(acc += std::exp(l - top));
    Dataset d;
    d.observed.assign(m.space.size(), false);
    for (size_t i = 0; i < M; ++i) {
        const double u = unit(rng) * acc;
        size_t k = static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        d.instances.push_back(xs[std::min(k, xs.size() - 1)]);
    }
    return d;
}

// ---- variable elimination oracle -------------------------------------------

/// Log-space factor over sorted variables; first variable most significant.
struct Factor {
    std::vector<int> vars;
    std::vector<int> cards;
    std::vector<double> logv;

    size_t index(const std::map<int, int>& a) const {
        size_t idx = 0;
        for (size_t k = 0; k < vars.size(); ++k) idx = idx * static_cast<size_t>(cards[k]) + static_cast<size_t>(a.at(vars[k]));
        return idx;
    }
};

inline Factor product(const Factor& f, const Factor& g, const VariableSpace& sp) {
    Factor h;
    std::set_union(f.vars.begin(), f.vars.end(), g.vars.begin(), g.vars.end(), std::back_inserter(h.vars));
    size_t size = 1;
    for (int v : h.vars) {
        h.cards.push_back(sp.cardinality(static_cast<size_t>(v)));
        size *= static_cast<size_t>(h.cards.back());
    }
    h.logv.resize(size);
    std::map<int, int> a;
    for (size_t idx = 0; idx < size; ++idx) {
        size_t r = idx;
        for (size_t k = h.vars.size(); k-- > 0;) {
            a[h.vars[k]] = static_cast<int>(r % static_cast<size_t>(h.cards[k]));
            r /= static_cast<size_t>(h.cards[k]);
        }
        h.logv[idx] = f.logv[f.index(a)] + g.logv[g.index(a)];
    }
    return h;
}

inline Factor sum_out(const Factor& f, int var) {
    Factor h;
    const auto pos = static_cast<size_t>(std::find(f.vars.begin(), f.vars.end(), var) - f.vars.begin());
    for (size_t k = 0; k < f.vars.size(); ++k)
        if (k != pos) h.vars.push_back(f.vars[k]), h.cards.push_back(f.cards[k]);
    size_t size = 1;
    for (int c : h.cards) size *= static_cast<size_t>(c);
    std::vector<std::vector<double>> parts(size);
    for (size_t idx = 0; idx < f.logv.size(); ++idx) {
        size_t r = idx, out = 0, mult = 1;
        for (size_t k = f.vars.size(); k-- > 0;) {
            const size_t s = r % static_cast<size_t>(f.cards[k]);
            r /= static_cast<size_t>(f.cards[k]);
            if (k == pos) continue;
            out += s * mult;
            mult *= static_cast<size_t>(f.cards[k]);
        }
        parts[out].push_back(f.logv[idx]);
    }
    for (auto& p : parts) {
        double top = -INFINITY;
        for (double v : p) top = std::max(top, v);
        double acc = 0.0;
        if (top != -INFINITY)
            for (double v : p) acc += std::exp(v - top);
        h.logv.push_back(top == -INFINITY ? top : top + std::log(acc));
    }
    return h;
}

/// log Z by eliminating variables in index order; evidence clamps states.
inline double ve_log_partition(const Model& m, std::span<const double> w, const Assignment& evidence) {
    std::vector<Factor> fs;
    for (size_t i = 0; i < m.graph.size(); ++i) {
        const auto& idx = m.graph.indexer(i);
        Factor f{idx.scope(), idx.cardinalities(), {}};
        for (size_t a = 0; a < idx.size(); ++a) {
            double s = 0.0;
            for (const auto& e : m.features.table(i)[a]) s += w[static_cast<size_t>(e.feature)] * e.value;
            bool ok = true;
            for (size_t k = 0; k < idx.scope().size(); ++k) {
                const int ev = evidence[static_cast<size_t>(idx.scope()[k])];
                ok = ok && (ev == kFree || ev == idx.state_at(static_cast<int>(a), k));
            }
            f.logv.push_back(ok ? s : -INFINITY);
        }
        fs.push_back(std::move(f));
    }
    for (int v = 0; v < static_cast<int>(m.space.size()); ++v) {
        Factor joined{{}, {}, {0.0}};
        std::vector<Factor> rest;
        for (auto& f : fs) {
            if (std::find(f.vars.begin(), f.vars.end(), v) != f.vars.end()) joined = product(joined, f, m.space);
            else rest.push_back(std::move(f));
        }
        if (std::find(joined.vars.begin(), joined.vars.end(), v) == joined.vars.end()) {
            // Variable in no factor: contributes its cardinality (clamped: 1).
            const int ev = evidence[static_cast<size_t>(v)];
            joined.logv[0] += ev == kFree ? std::log(m.space.cardinality(static_cast<size_t>(v))) : 0.0;
        } else {
            joined = sum_out(joined, v);
        }
        rest.push_back(std::move(joined));
        fs = std::move(rest);
    }
    double total = 0.0;
    for (const auto& f : fs) total += f.logv.at(0);
    return total;
}

inline double ve_log_partition(const Model& m, std::span<const double> w) {
    return ve_log_partition(m, w, Assignment(m.space.size(), kFree));
}

/// Cluster marginals by clamping each cluster assignment in turn.
inline PseudoMarginals ve_marginals(const Model& m, std::span<const double> w, const Assignment& evidence) {
    const double lz = ve_log_partition(m, w, evidence);
    PseudoMarginals pm;
    for (size_t i = 0; i < m.graph.size(); ++i) {
        const auto& idx = m.graph.indexer(i);
        std::vector<double> p;
        for (size_t a = 0; a < idx.size(); ++a) {
            Assignment ev = evidence;
            bool ok = true;
            for (size_t k = 0; k < idx.scope().size(); ++k) {
                auto& slot = ev[static_cast<size_t>(idx.scope()[k])];
                const int s = idx.state_at(static_cast<int>(a), k);
                ok = ok && (slot == kFree || slot == s);
                slot = s;
            }
            p.push_back(ok ? std::exp(ve_log_partition(m, w, ev) - lz) : 0.0);
        }
        pm.clusters.push_back(std::move(p));
    }
    return pm;
}

inline PseudoMarginals ve_marginals(const Model& m, std::span<const double> w) {
    return ve_marginals(m, w, Assignment(m.space.size(), kFree));
}

inline double max_abs_diff(const PseudoMarginals& a, const PseudoMarginals& b) {
    double d = 0.0;
    for (size_t i = 0; i < a.size(); ++i)
        for (size_t k = 0; k < a[i].size(); ++k) d = std::max(d, std::abs(a[i][k] - b[i][k]));
    return d;
}

/// Central finite-difference gradient.
inline std::vector<double> fd_gradient(const std::function<double(std::span<const double>)>& f, std::vector<double> x,
                                       double h = 1e-5) {
    std::vector<double> g(x.size());
    for (size_t k = 0; k < x.size(); ++k) {
        const double x0 = x[k];
        x[k] = x0 + h;
        const double fp = f(x);
        x[k] = x0 - h;
        const double fm = f(x);
        x[k] = x0;
        g[k] = (fp - fm) / (2 * h);
    }
    return g;
}

/// max_k |a_k - b_k| / max(1, |b_k|).
inline double relative_error(std::span<const double> a, std::span<const double> b) {
    double e = 0.0;
    for (size_t k = 0; k < a.size(); ++k) e = std::max(e, std::abs(a[k] - b[k]) / std::max(1.0, std::abs(b[k])));
    return e;
}

} // namespace fixtures
