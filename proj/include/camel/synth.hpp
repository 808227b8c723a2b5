#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "camel/exact.hpp"
#include "camel/model.hpp"

namespace camel {

enum class Topology { Chain, Star, Loop, Grid };
enum class Tying { Untied, PairwiseTied };

struct SynthConfig {
    Topology topology = Topology::Chain;
    /// Node count for chain/star/loop; side length for grid.
    int size = 5;
    int cardinality = 2;
    Tying tying = Tying::Untied;
    /// Scale of the pairwise weights; larger means stronger neighbor agreement.
    double coupling = 1.0;
    /// Bias weights are drawn uniformly from [-field, field].
    double field = 0.5;
    /// Adds one noisy observed child per node, linked by a tied agreement table.
    bool observations = false;
    double observation_strength = 1.0;
    std::uint64_t seed = 0;
    double cap = kDefaultJointCap;
};

struct SynthModel {
    Model model;
    std::vector<double> weights;
    /// Indices of the observation variables (empty unless requested).
    std::vector<int> observed;
};

namespace detail {

/// Uniform double in [0, 1) from 53 random bits; independent of the
/// standard library's distribution implementations.
inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

inline std::vector<std::pair<int, int>> topology_pairs(Topology t, int n) {
    std::vector<std::pair<int, int>> p;
    switch (t) {
    case Topology::Chain:
        for (int i = 0; i + 1 < n; ++i) p.emplace_back(i, i + 1);
        break;
    case Topology::Star:
        for (int i = 1; i < n; ++i) p.emplace_back(0, i);
        break;
    case Topology::Loop:
        for (int i = 0; i + 1 < n; ++i) p.emplace_back(i, i + 1);
        p.emplace_back(0, n - 1);
        break;
    case Topology::Grid:
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) {
                if (c + 1 < n) p.emplace_back(r * n + c, r * n + c + 1);
                if (r + 1 < n) p.emplace_back(r * n + c, (r + 1) * n + c);
            }
        break;
    }
    return p;
}

} // namespace detail

inline const char* to_string(Topology t) {
    switch (t) {
    case Topology::Chain: return "chain";
    case Topology::Star: return "star";
    case Topology::Loop: return "loop";
    case Topology::Grid: return "grid";
    }
    return "?";
}

/// Pairwise model on the requested topology, one cluster per topology edge;
/// cluster-graph edges chain the clusters holding each variable, so trees stay
/// trees. Untied: one indicator per pair-table entry of each cluster. Tied: one
/// symmetric table shared by all clusters plus per-node bias features on states
/// above 0. Bias features and the optional observed child O_v live in the
/// node's home cluster (the first one containing it), so O_v never appears in
/// a sepset and clamping it leaves an ordinary CRF over the hidden nodes.
inline SynthModel gen_model(const SynthConfig& cfg) {
    const int n = cfg.size;
    if (cfg.cardinality < 1) throw ModelError("cardinality must be at least 1");
    if (n < 2) throw ModelError("size must be at least 2");
    if (cfg.topology == Topology::Loop && n < 3) throw ModelError("a loop needs at least 3 nodes");
    const int nodes = cfg.topology == Topology::Grid ? n * n : n;
    const int K = cfg.cardinality;

    std::vector<Variable> vars;
    for (int v = 0; v < nodes; ++v) vars.push_back({"X" + std::to_string(v), K, "hidden"});
    if (cfg.observations)
        for (int v = 0; v < nodes; ++v) vars.push_back({"O" + std::to_string(v), K, "observed"});
    const double log_size = static_cast<double>(vars.size()) * std::log(static_cast<double>(K));
    if (log_size > std::log(cfg.cap)) throw ModelError("joint space exceeds the cap; reduce size or cardinality");

    std::vector<Cluster> clusters;
    for (auto [a, b] : detail::topology_pairs(cfg.topology, n)) clusters.push_back({static_cast<int>(clusters.size()), {a, b}});
    std::vector<size_t> home(static_cast<size_t>(nodes));
    for (int v = 0; v < nodes; ++v)
        for (size_t i = 0; i < clusters.size(); ++i)
            if (clusters[i].scope[0] == v || clusters[i].scope[1] == v) {
                home[static_cast<size_t>(v)] = i;
                break;
            }
    if (cfg.observations)
        for (int v = 0; v < nodes; ++v) clusters[home[static_cast<size_t>(v)]].scope.push_back(nodes + v);

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::string> names;
    std::vector<double> weights;
    auto add_feature = [&](std::string name, double w) {
        names.push_back(std::move(name));
        weights.push_back(w);
        return static_cast<int>(names.size() - 1);
    };

    // pair[i][s*K+t]: feature of pair state (s, t) in cluster i.
    std::vector<std::vector<int>> pair(clusters.size(), std::vector<int>(static_cast<size_t>(K * K)));
    if (cfg.tying == Tying::Untied) {
        for (size_t i = 0; i < clusters.size(); ++i)
            for (int a = 0; a < K * K; ++a)
                pair[i][static_cast<size_t>(a)] = add_feature("c" + std::to_string(i) + "_" + std::to_string(a / K) + std::to_string(a % K),
                                                             detail::uniform(rng, -cfg.coupling, cfg.coupling));
    } else {
        // Symmetric shared table: diagonal entries carry the coupling.
        std::vector<int> shared(static_cast<size_t>(K * K));
        for (int s = 0; s < K; ++s)
            for (int t = s; t < K; ++t)
                shared[static_cast<size_t>(s * K + t)] = shared[static_cast<size_t>(t * K + s)] =
                    add_feature("pair_" + std::to_string(s) + std::to_string(t), s == t ? cfg.coupling : 0.0);
        for (auto& p : pair) p = shared;
    }
    std::vector<std::vector<int>> bias(static_cast<size_t>(nodes));
    if (cfg.tying == Tying::PairwiseTied)
        for (int v = 0; v < nodes; ++v)
            for (int s = 1; s < K; ++s)
                bias[static_cast<size_t>(v)].push_back(add_feature("bias_" + std::to_string(v) + (K > 2 ? "_" + std::to_string(s) : ""),
                                                                   detail::uniform(rng, -cfg.field, cfg.field)));
    const int agree = cfg.observations ? add_feature("obs_agree", cfg.observation_strength) : -1;

    VariableSpace space(vars);
    std::vector<FeatureModel::Table> tables;
    for (size_t i = 0; i < clusters.size(); ++i) {
        const ScopeIndexer idx(clusters[i].scope, space);
        FeatureModel::Table table(idx.size());
        const auto& scope = clusters[i].scope;
        for (size_t a = 0; a < idx.size(); ++a) {
            const auto st = idx.states(static_cast<int>(a));
            auto& entry = table[a];
            entry.push_back({pair[i][static_cast<size_t>(st[0] * K + st[1])], 1.0});
            for (size_t k = 0; k < 2; ++k)
                if (home[static_cast<size_t>(scope[k])] == i && st[k] > 0 && !bias[static_cast<size_t>(scope[k])].empty())
                    entry.push_back({bias[static_cast<size_t>(scope[k])][static_cast<size_t>(st[k] - 1)], 1.0});
            double agreements = 0.0;
            for (size_t k = 2; k < scope.size(); ++k)
                agreements += st[k] == st[scope[0] == scope[k] - nodes ? 0 : 1] ? 1.0 : 0.0;
            if (agreements > 0) entry.push_back({agree, agreements});
        }
        tables.push_back(std::move(table));
    }

    const auto edges = ClusterGraph::derive_edges(clusters, vars.size(), EdgeRule::RunningIntersection);
    SynthModel out;
    out.model = make_model(std::move(vars), std::move(clusters), edges, std::move(names), std::move(tables));
    out.weights = std::move(weights);
    if (cfg.observations)
        for (int v = 0; v < nodes; ++v) out.observed.push_back(nodes + v);
    return out;
}

/// M exact i.i.d. samples from P_w by enumerating the joint and inverting its CDF.
inline Dataset gen_data(const Model& model, std::span<const double> w, size_t M, std::uint64_t seed,
                        std::span<const int> observed = {}, double cap = kDefaultJointCap) {
    if (M == 0) throw ModelError("sample count must be positive");
    const auto joint = exact_joint(model, w, cap);
    std::vector<double> cdf(joint.probabilities.size());
    double acc = 0.0;
    for (size_t k = 0; k < cdf.size(); ++k) cdf[k] = acc += joint.probabilities[k];
    std::mt19937_64 rng(seed);
    Dataset data;
    data.observed.assign(model.space.size(), false);
    for (int v : observed) data.observed[static_cast<size_t>(v)] = true;
    data.mode = observed.empty() ? DataMode::Generative : DataMode::Conditional;

    // Mixed-radix decode of the joint index, first variable most significant.
    const size_t n = model.space.size();
    for (size_t m = 0; m < M; ++m) {
        const double u = detail::unit(rng) * acc;
        size_t k = static_cast<size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        k = std::min(k, cdf.size() - 1);
        Assignment x(n);
        for (size_t v = n; v-- > 0;) {
            const auto card = static_cast<size_t>(model.space.cardinality(v));
            x[v] = static_cast<int>(k % card);
            k /= card;
        }
        data.instances.push_back(std::move(x));
    }
    return data;
}

} // namespace camel
