#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace camel {

/// Structural or semantic problem with a model, dataset or parameter set.
class ModelError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Full assignment to every variable, indexed by variable position. kFree
/// marks a variable with no value (unobserved in an evidence vector).
using Assignment = std::vector<int>;
inline constexpr int kFree = -1;

struct Variable {
    std::string name;
    int cardinality = 2;
    /// Grouping key for macro-averaged evaluation metrics.
    std::string type = "default";
};

class VariableSpace {
public:
    VariableSpace() = default;

    explicit VariableSpace(std::vector<Variable> vars) : vars_(std::move(vars)) {
        for (size_t i = 0; i < vars_.size(); ++i) {
            const auto& v = vars_[i];
            if (v.name.empty()) throw ModelError("variable " + std::to_string(i) + " has an empty name");
            if (v.cardinality < 1)
                throw ModelError("variable '" + v.name + "' has cardinality " + std::to_string(v.cardinality));
            if (!index_.emplace(v.name, static_cast<int>(i)).second)
                throw ModelError("duplicate variable name '" + v.name + "'");
        }
    }

    size_t size() const { return vars_.size(); }
    const Variable& operator[](size_t i) const { return vars_[i]; }
    int cardinality(size_t i) const { return vars_[i].cardinality; }
    const std::vector<Variable>& variables() const { return vars_; }

    std::optional<int> find(std::string_view name) const {
        auto it = index_.find(std::string(name));
        if (it == index_.end()) return std::nullopt;
        return it->second;
    }

    /// log of the number of joint assignments.
    double log_joint_size() const {
        double s = 0.0;
        for (const auto& v : vars_) s += std::log(static_cast<double>(v.cardinality));
        return s;
    }

    bool operator==(const VariableSpace& o) const {
        if (vars_.size() != o.vars_.size()) return false;
        for (size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i].name != o.vars_[i].name || vars_[i].cardinality != o.vars_[i].cardinality ||
                vars_[i].type != o.vars_[i].type)
                return false;
        return true;
    }

private:
    std::vector<Variable> vars_;
    std::unordered_map<std::string, int> index_;
};

/// Mixed-radix index over an ordered scope. The first scope variable is the
/// most significant digit, so enumeration is lexicographic in scope order.
class ScopeIndexer {
public:
    ScopeIndexer() = default;

    ScopeIndexer(std::vector<int> scope, const VariableSpace& space) : scope_(std::move(scope)) {
        cards_.resize(scope_.size());
        strides_.resize(scope_.size());
        size_t stride = 1;
        for (size_t k = scope_.size(); k-- > 0;) {
            if (scope_[k] < 0 || static_cast<size_t>(scope_[k]) >= space.size())
                throw ModelError("variable index " + std::to_string(scope_[k]) + " out of range");
            cards_[k] = space.cardinality(static_cast<size_t>(scope_[k]));
            strides_[k] = stride;
            stride *= static_cast<size_t>(cards_[k]);
        }
        size_ = stride;
    }

    size_t size() const { return size_; }
    const std::vector<int>& scope() const { return scope_; }
    const std::vector<int>& cardinalities() const { return cards_; }

    int index(std::span<const int> local_states) const {
        size_t idx = 0;
        for (size_t k = 0; k < scope_.size(); ++k) idx += static_cast<size_t>(local_states[k]) * strides_[k];
        return static_cast<int>(idx);
    }

    /// Local index of the restriction of a full assignment to this scope.
    int index_of_full(std::span<const int> full) const {
        size_t idx = 0;
        for (size_t k = 0; k < scope_.size(); ++k)
            idx += static_cast<size_t>(full[static_cast<size_t>(scope_[k])]) * strides_[k];
        return static_cast<int>(idx);
    }

    int state_at(int index, size_t position) const {
        return static_cast<int>((static_cast<size_t>(index) / strides_[position]) %
                                static_cast<size_t>(cards_[position]));
    }

    std::vector<int> states(int index) const {
        std::vector<int> out(scope_.size());
        for (size_t k = 0; k < scope_.size(); ++k) out[k] = state_at(index, k);
        return out;
    }

    /// True iff the local assignment agrees with every observed value.
    bool consistent(int index, std::span<const int> evidence) const {
        for (size_t k = 0; k < scope_.size(); ++k) {
            const int e = evidence[static_cast<size_t>(scope_[k])];
            if (e != kFree && e != state_at(index, k)) return false;
        }
        return true;
    }

private:
    std::vector<int> scope_;
    std::vector<int> cards_;
    std::vector<size_t> strides_;
    size_t size_ = 1;
};

/// Restriction of a local assignment over `scope` to the variables of `sepset`.
/// Both scope and sepset list variable indices; the result follows sepset order.
inline std::vector<int> project(std::span<const int> scope, std::span<const int> states,
                                std::span<const int> sepset) {
    std::vector<int> out;
    out.reserve(sepset.size());
    for (int v : sepset) {
        auto it = std::find(scope.begin(), scope.end(), v);
        if (it == scope.end())
            throw ModelError("sepset variable " + std::to_string(v) + " is not in the cluster scope");
        out.push_back(states[static_cast<size_t>(it - scope.begin())]);
    }
    return out;
}

struct Cluster {
    int id = 0;
    std::vector<int> scope; ///< ascending variable indices
};

/// Edge as written by the user: endpoints are cluster ids.
struct EdgeSpec {
    int source = 0;
    int target = 0;
    std::vector<int> sepset;
};

/// Directed edge between cluster positions, oriented from lower to higher id.
struct Edge {
    size_t source = 0;
    size_t target = 0;
    std::vector<int> sepset; ///< ascending variable indices
    ScopeIndexer sep_index;
    std::vector<int> source_projection; ///< source local index -> sepset index
    std::vector<int> target_projection; ///< target local index -> sepset index
};

/// How edges are derived when a graph is built from clusters alone.
enum class EdgeRule {
    /// One edge for every pair of clusters sharing variables, sepset = full intersection.
    AllPairs,
    /// For each variable, the clusters containing it are chained in id order; an
    /// edge's sepset collects the variables that chain that pair. Each variable's
    /// clusters then form a tree, so tree-structured models give tree cluster graphs.
    RunningIntersection,
};

class ClusterGraph {
public:
    ClusterGraph() = default;

    ClusterGraph(std::vector<Cluster> clusters, const std::vector<EdgeSpec>& edges, const VariableSpace& space)
        : clusters_(std::move(clusters)) {
        if (clusters_.empty()) throw ModelError("cluster graph has no clusters");
        std::vector<bool> covered(space.size(), false);
        for (size_t p = 0; p < clusters_.size(); ++p) {
            auto& c = clusters_[p];
            std::sort(c.scope.begin(), c.scope.end());
            if (std::adjacent_find(c.scope.begin(), c.scope.end()) != c.scope.end())
                throw ModelError("cluster " + std::to_string(c.id) + " lists a variable twice");
            if (c.scope.empty()) throw ModelError("cluster " + std::to_string(c.id) + " has an empty scope");
            if (!position_.emplace(c.id, p).second) throw ModelError("duplicate cluster id " + std::to_string(c.id));
            indexers_.emplace_back(c.scope, space);
            for (int v : c.scope) covered[static_cast<size_t>(v)] = true;
        }
        for (size_t v = 0; v < space.size(); ++v)
            if (!covered[v]) throw ModelError("variable '" + space[v].name + "' appears in no cluster");

        std::set<std::pair<size_t, size_t>> seen;
        for (const auto& spec : edges) {
            auto si = position_.find(spec.source);
            auto ti = position_.find(spec.target);
            if (si == position_.end() || ti == position_.end())
                throw ModelError("edge references unknown cluster id");
            if (spec.source == spec.target) throw ModelError("self edge on cluster " + std::to_string(spec.source));
            Edge e;
            e.source = si->second;
            e.target = ti->second;
            if (clusters_[e.source].id > clusters_[e.target].id) std::swap(e.source, e.target);
            if (!seen.emplace(e.source, e.target).second)
                throw ModelError("duplicate edge between clusters " + std::to_string(clusters_[e.source].id) +
                                 " and " + std::to_string(clusters_[e.target].id));
            e.sepset = spec.sepset;
            std::sort(e.sepset.begin(), e.sepset.end());
            if (e.sepset.empty() || std::adjacent_find(e.sepset.begin(), e.sepset.end()) != e.sepset.end())
                throw ModelError("edge sepset must be a non-empty set");
            for (int v : e.sepset) {
                const auto& a = clusters_[e.source].scope;
                const auto& b = clusters_[e.target].scope;
                if (!std::binary_search(a.begin(), a.end(), v) || !std::binary_search(b.begin(), b.end(), v))
                    throw ModelError("sepset of edge " + std::to_string(clusters_[e.source].id) + "-" +
                                     std::to_string(clusters_[e.target].id) + " is not contained in both scopes");
            }
            e.sep_index = ScopeIndexer(e.sepset, space);
            e.source_projection = projection_table(indexers_[e.source], e.sep_index);
            e.target_projection = projection_table(indexers_[e.target], e.sep_index);
            edges_.push_back(std::move(e));
        }
        incident_.resize(clusters_.size());
        for (size_t k = 0; k < edges_.size(); ++k) {
            incident_[edges_[k].source].push_back(k);
            incident_[edges_[k].target].push_back(k);
        }
    }

    /// Builds edges for a set of clusters according to `rule`.
    static std::vector<EdgeSpec> derive_edges(const std::vector<Cluster>& clusters, size_t num_vars, EdgeRule rule) {
        std::map<std::pair<int, int>, std::set<int>> sep;
        if (rule == EdgeRule::AllPairs) {
            for (size_t a = 0; a < clusters.size(); ++a)
                for (size_t b = a + 1; b < clusters.size(); ++b) {
                    std::set<int> common;
                    for (int v : clusters[a].scope)
                        if (std::find(clusters[b].scope.begin(), clusters[b].scope.end(), v) != clusters[b].scope.end())
                            common.insert(v);
                    if (!common.empty())
                        sep[std::minmax(clusters[a].id, clusters[b].id)] = std::move(common);
                }
        } else {
            std::vector<std::vector<int>> holders(num_vars);
            std::vector<Cluster> sorted = clusters;
            std::sort(sorted.begin(), sorted.end(), [](const Cluster& x, const Cluster& y) { return x.id < y.id; });
            for (const auto& c : sorted)
                for (int v : c.scope) holders[static_cast<size_t>(v)].push_back(c.id);
            for (size_t v = 0; v < num_vars; ++v)
                for (size_t k = 1; k < holders[v].size(); ++k)
                    sep[{holders[v][k - 1], holders[v][k]}].insert(static_cast<int>(v));
        }
        std::vector<EdgeSpec> out;
        for (auto& [ends, vars] : sep) out.push_back({ends.first, ends.second, {vars.begin(), vars.end()}});
        return out;
    }

    size_t size() const { return clusters_.size(); }
    const std::vector<Cluster>& clusters() const { return clusters_; }
    const Cluster& cluster(size_t pos) const { return clusters_[pos]; }
    const std::vector<Edge>& edges() const { return edges_; }
    const ScopeIndexer& indexer(size_t pos) const { return indexers_[pos]; }
    /// Edge indices touching a cluster position.
    const std::vector<size_t>& incident(size_t pos) const { return incident_[pos]; }

    size_t position(int id) const {
        auto it = position_.find(id);
        if (it == position_.end()) throw ModelError("unknown cluster id " + std::to_string(id));
        return it->second;
    }

    /// Projection of cluster-local indices onto an edge's sepset, from the given endpoint.
    const std::vector<int>& projection(size_t edge, size_t cluster_pos) const {
        const Edge& e = edges_[edge];
        return cluster_pos == e.source ? e.source_projection : e.target_projection;
    }

    /// True iff the graph is connected and acyclic.
    bool is_tree() const {
        if (edges_.size() + 1 != clusters_.size()) return false;
        std::vector<size_t> parent(clusters_.size());
        std::iota(parent.begin(), parent.end(), size_t{0});
        auto root = [&](size_t x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        for (const auto& e : edges_) {
            size_t a = root(e.source), b = root(e.target);
            if (a == b) return false;
            parent[a] = b;
        }
        return true;
    }

    /// Total number of (edge, sepset assignment) pairs.
    size_t sepset_entries() const {
        size_t n = 0;
        for (const auto& e : edges_) n += e.sep_index.size();
        return n;
    }

private:
    static std::vector<int> projection_table(const ScopeIndexer& from, const ScopeIndexer& to) {
        std::vector<int> pos;
        for (int v : to.scope())
            pos.push_back(static_cast<int>(std::find(from.scope().begin(), from.scope().end(), v) - from.scope().begin()));
        std::vector<int> table(from.size());
        std::vector<int> sub(pos.size());
        for (size_t a = 0; a < from.size(); ++a) {
            for (size_t k = 0; k < pos.size(); ++k) sub[k] = from.state_at(static_cast<int>(a), static_cast<size_t>(pos[k]));
            table[a] = to.index(sub);
        }
        return table;
    }

    std::vector<Cluster> clusters_;
    std::vector<ScopeIndexer> indexers_;
    std::vector<Edge> edges_;
    std::vector<std::vector<size_t>> incident_;
    std::unordered_map<int, size_t> position_;
};

struct FeatureEntry {
    int feature = 0;
    double value = 0.0;
    bool operator==(const FeatureEntry&) const = default;
};

/// Shared log-linear features: for every cluster position and local assignment,
/// a sparse list of (feature, value). A feature may fire in many clusters.
class FeatureModel {
public:
    using Table = std::vector<std::vector<FeatureEntry>>;

    FeatureModel() = default;
    FeatureModel(std::vector<std::string> names, std::vector<Table> tables)
        : names_(std::move(names)), tables_(std::move(tables)) {
        std::unordered_map<std::string, int> seen;
        for (size_t l = 0; l < names_.size(); ++l)
            if (!seen.emplace(names_[l], static_cast<int>(l)).second)
                throw ModelError("duplicate feature id '" + names_[l] + "'");
        for (const auto& t : tables_)
            for (const auto& row : t)
                for (const auto& fe : row)
                    if (fe.feature < 0 || static_cast<size_t>(fe.feature) >= names_.size())
                        throw ModelError("feature index out of range");
    }

    size_t num_features() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }
    const Table& table(size_t cluster_pos) const { return tables_[cluster_pos]; }
    const std::vector<Table>& tables() const { return tables_; }

    std::optional<int> find(std::string_view name) const {
        for (size_t l = 0; l < names_.size(); ++l)
            if (names_[l] == name) return static_cast<int>(l);
        return std::nullopt;
    }

    double score(size_t cluster_pos, size_t local, std::span<const double> w) const {
        double s = 0.0;
        for (const auto& fe : tables_[cluster_pos][local]) s += w[static_cast<size_t>(fe.feature)] * fe.value;
        return s;
    }

    /// out += scale * f(local)
    void accumulate(size_t cluster_pos, size_t local, double scale, std::span<double> out) const {
        for (const auto& fe : tables_[cluster_pos][local]) out[static_cast<size_t>(fe.feature)] += scale * fe.value;
    }

    bool all_finite() const {
        for (const auto& t : tables_)
            for (const auto& row : t)
                for (const auto& fe : row)
                    if (!std::isfinite(fe.value)) return false;
        return true;
    }

    bool operator==(const FeatureModel& o) const { return names_ == o.names_ && tables_ == o.tables_; }

private:
    std::vector<std::string> names_;
    std::vector<Table> tables_;
};

/// A log-linear model over a cluster graph.
struct Model {
    VariableSpace space;
    ClusterGraph graph;
    FeatureModel features;

    size_t num_features() const { return features.num_features(); }

    /// Local assignments of a cluster in enumeration order.
    std::vector<std::vector<int>> cluster_assignments(int cluster_id) const {
        const auto& idx = graph.indexer(graph.position(cluster_id));
        std::vector<std::vector<int>> out;
        out.reserve(idx.size());
        for (size_t a = 0; a < idx.size(); ++a) out.push_back(idx.states(static_cast<int>(a)));
        return out;
    }

    /// w.f(c) for every local assignment of a cluster.
    std::vector<double> cluster_scores(size_t cluster_pos, std::span<const double> w) const {
        std::vector<double> s(graph.indexer(cluster_pos).size());
        for (size_t a = 0; a < s.size(); ++a) s[a] = features.score(cluster_pos, a, w);
        return s;
    }

    /// w.f(x) for a full assignment.
    double total_score(std::span<const int> x, std::span<const double> w) const {
        double s = 0.0;
        for (size_t i = 0; i < graph.size(); ++i)
            s += features.score(i, static_cast<size_t>(graph.indexer(i).index_of_full(x)), w);
        return s;
    }
};

/// Assembles a model from user-level pieces. `entries[c]` lists, for cluster
/// position c, the features of each local assignment.
inline Model make_model(std::vector<Variable> vars, std::vector<Cluster> clusters, const std::vector<EdgeSpec>& edges,
                        std::vector<std::string> feature_names, std::vector<FeatureModel::Table> tables) {
    Model m;
    m.space = VariableSpace(std::move(vars));
    m.graph = ClusterGraph(std::move(clusters), edges, m.space);
    if (tables.size() != m.graph.size()) throw ModelError("feature tables do not match the cluster count");
    for (size_t i = 0; i < tables.size(); ++i)
        if (tables[i].size() != m.graph.indexer(i).size())
            throw ModelError("feature table of cluster " + std::to_string(m.graph.cluster(i).id) + " has wrong size");
    m.features = FeatureModel(std::move(feature_names), std::move(tables));
    return m;
}

enum class DataMode { Generative, Conditional };

struct Dataset {
    DataMode mode = DataMode::Generative;
    /// observed[v] is true for conditioning variables in conditional mode.
    std::vector<bool> observed;
    std::vector<Assignment> instances;

    size_t size() const { return instances.size(); }
};

inline void validate_dataset(const Model& model, const Dataset& data) {
    if (data.instances.empty()) throw ModelError("dataset has no instances");
    if (data.observed.size() != model.space.size()) throw ModelError("observed mask does not match the variable count");
    for (size_t m = 0; m < data.instances.size(); ++m) {
        const auto& x = data.instances[m];
        if (x.size() != model.space.size())
            throw ModelError("instance " + std::to_string(m) + " does not assign every variable");
        for (size_t v = 0; v < x.size(); ++v)
            if (x[v] < 0 || x[v] >= model.space.cardinality(v))
                throw ModelError("instance " + std::to_string(m) + " has out-of-range state for '" +
                                 model.space[v].name + "'");
    }
}

/// E_p̂[f]: per-instance feature sums over all clusters, averaged over instances.
inline std::vector<double> empirical_expectations(const Model& model, const Dataset& data) {
    if (data.instances.empty()) throw ModelError("dataset has no instances");
    std::vector<double> e(model.num_features(), 0.0);
    const double scale = 1.0 / static_cast<double>(data.size());
    for (const auto& x : data.instances)
        for (size_t i = 0; i < model.graph.size(); ++i)
            model.features.accumulate(i, static_cast<size_t>(model.graph.indexer(i).index_of_full(x)), scale, e);
    return e;
}

/// Local indices of each cluster that agree with the evidence.
inline std::vector<std::vector<int>> allowed_entries(const Model& model, std::span<const int> evidence) {
    std::vector<std::vector<int>> out(model.graph.size());
    for (size_t i = 0; i < model.graph.size(); ++i) {
        const auto& idx = model.graph.indexer(i);
        for (size_t a = 0; a < idx.size(); ++a)
            if (idx.consistent(static_cast<int>(a), evidence)) out[i].push_back(static_cast<int>(a));
    }
    return out;
}

/// One conditioning context of a training problem. Generative data yields a
/// single context with no evidence; conditional data yields one per instance.
struct Context {
    double weight = 1.0;
    Assignment evidence;
    std::vector<std::vector<int>> allowed;
    /// Pooled empirical feature expectation within this context.
    std::vector<double> empirical;
    std::vector<size_t> instances;
};

inline Assignment evidence_of(const Dataset& data, const Assignment& x) {
    Assignment ev(x.size(), kFree);
    if (data.mode == DataMode::Conditional)
        for (size_t v = 0; v < x.size(); ++v)
            if (data.observed[v]) ev[v] = x[v];
    return ev;
}

inline std::vector<Context> make_contexts(const Model& model, const Dataset& data) {
    validate_dataset(model, data);
    std::vector<Context> out;
    if (data.mode == DataMode::Generative) {
        Context c;
        c.evidence.assign(model.space.size(), kFree);
        c.allowed = allowed_entries(model, c.evidence);
        c.empirical = empirical_expectations(model, data);
        c.instances.resize(data.size());
        std::iota(c.instances.begin(), c.instances.end(), size_t{0});
        out.push_back(std::move(c));
        return out;
    }
    const double w = 1.0 / static_cast<double>(data.size());
    for (size_t m = 0; m < data.size(); ++m) {
        Context c;
        c.weight = w;
        c.evidence = evidence_of(data, data.instances[m]);
        c.allowed = allowed_entries(model, c.evidence);
        c.empirical.assign(model.num_features(), 0.0);
        for (size_t i = 0; i < model.graph.size(); ++i)
            model.features.accumulate(i, static_cast<size_t>(model.graph.indexer(i).index_of_full(data.instances[m])),
                                      1.0, c.empirical);
        c.instances = {m};
        out.push_back(std::move(c));
    }
    return out;
}

} // namespace camel
