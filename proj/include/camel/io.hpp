#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "camel/dual_solver.hpp"
#include "camel/model.hpp"

namespace camel {

/// Malformed input, with a 1-based line (and column where known).
class ParseError : public ModelError {
public:
    ParseError(size_t line, size_t column, const std::string& what)
        : ModelError("line " + std::to_string(line) + (column ? ", column " + std::to_string(column) : "") + ": " + what),
          line_(line), column_(column) {}
    size_t line() const { return line_; }
    size_t column() const { return column_; }

private:
    size_t line_;
    size_t column_;
};

namespace detail {

[[noreturn]] inline void fail(const YAML::Node& node, const std::string& what) {
    const auto mark = node.Mark();
    throw ParseError(static_cast<size_t>(mark.line + 1), static_cast<size_t>(mark.column + 1), what);
}

inline YAML::Node required(const YAML::Node& node, const char* key) {
    YAML::Node v = node[key];
    if (!v) fail(node, std::string("missing key '") + key + "'");
    return v;
}

template <class T>
T scalar(const YAML::Node& node, const char* what) {
    if (!node.IsScalar()) fail(node, std::string("expected a scalar for ") + what);
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        fail(node, std::string("invalid value for ") + what);
    }
}

inline int variable_ref(const YAML::Node& node, const VariableSpace& space) {
    if (!node.IsScalar()) fail(node, "variable reference must be a name or an index");
    const std::string text = node.Scalar();
    if (auto v = space.find(text)) return *v;
    int idx = 0;
    try {
        size_t used = 0;
        idx = std::stoi(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
        fail(node, "unknown variable '" + text + "'");
    }
    if (idx < 0 || static_cast<size_t>(idx) >= space.size())
        fail(node, "variable index " + std::to_string(idx) + " out of range");
    return idx;
}

inline std::string quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

inline std::string format_double(double v) {
    if (std::isnan(v)) return ".nan";
    if (std::isinf(v)) return v > 0 ? ".inf" : "-.inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void check_format_version(const YAML::Node& root) {
    YAML::Node f = root["format"];
    if (!f) fail(root, "missing 'format' version");
    if (scalar<int>(f, "format") != 1) fail(f, "unsupported format version");
}

} // namespace detail

/// Parses the YAML model description.
inline Model parse_model(std::istream& in) {
    YAML::Node root;
    try {
        root = YAML::Load(in);
    } catch (const YAML::ParserException& e) {
        throw ParseError(static_cast<size_t>(e.mark.line + 1), static_cast<size_t>(e.mark.column + 1), e.msg);
    }
    if (!root.IsMap()) throw ParseError(1, 0, "model document must be a mapping");
    detail::check_format_version(root);

    std::vector<Variable> vars;
    {
        const YAML::Node node = detail::required(root, "variables");
        if (!node.IsSequence()) detail::fail(node, "'variables' must be a list");
        std::map<std::string, bool> names;
        for (const auto& v : node) {
            Variable var;
            var.name = detail::scalar<std::string>(detail::required(v, "name"), "name");
            var.cardinality = detail::scalar<int>(detail::required(v, "cardinality"), "cardinality");
            if (v["type"]) var.type = detail::scalar<std::string>(v["type"], "type");
            if (var.cardinality < 1) detail::fail(v, "cardinality must be at least 1");
            if (!names.emplace(var.name, true).second) detail::fail(v, "duplicate variable name '" + var.name + "'");
            vars.push_back(std::move(var));
        }
    }
    VariableSpace space(vars);

    std::vector<Cluster> clusters;
    std::vector<std::vector<int>> written_scopes; // scope order as written, for patterns
    std::map<int, size_t> cluster_pos;
    {
        const YAML::Node node = detail::required(root, "clusters");
        if (!node.IsSequence()) detail::fail(node, "'clusters' must be a list");
        if (node.size() == 0) detail::fail(node, "cluster list is empty");
        for (const auto& c : node) {
            Cluster cl;
            cl.id = detail::scalar<int>(detail::required(c, "id"), "id");
            const YAML::Node scope = detail::required(c, "scope");
            if (!scope.IsSequence() || scope.size() == 0) detail::fail(scope, "scope must be a non-empty list");
            for (const auto& v : scope) cl.scope.push_back(detail::variable_ref(v, space));
            if (!cluster_pos.emplace(cl.id, clusters.size()).second)
                detail::fail(c, "duplicate cluster id " + std::to_string(cl.id));
            written_scopes.push_back(cl.scope);
            std::sort(cl.scope.begin(), cl.scope.end());
            if (std::adjacent_find(cl.scope.begin(), cl.scope.end()) != cl.scope.end())
                detail::fail(scope, "scope lists a variable twice");
            clusters.push_back(std::move(cl));
        }
    }

    std::vector<EdgeSpec> edges;
    if (YAML::Node node = root["edges"]) {
        if (!node.IsSequence()) detail::fail(node, "'edges' must be a list");
        for (const auto& e : node) {
            EdgeSpec spec;
            spec.source = detail::scalar<int>(detail::required(e, "source"), "source");
            spec.target = detail::scalar<int>(detail::required(e, "target"), "target");
            auto s = cluster_pos.find(spec.source), t = cluster_pos.find(spec.target);
            if (s == cluster_pos.end()) detail::fail(e, "unknown source cluster " + std::to_string(spec.source));
            if (t == cluster_pos.end()) detail::fail(e, "unknown target cluster " + std::to_string(spec.target));
            const YAML::Node sep = detail::required(e, "sepset");
            if (!sep.IsSequence() || sep.size() == 0) detail::fail(sep, "sepset must be a non-empty list");
            for (const auto& v : sep) {
                const int var = detail::variable_ref(v, space);
                const auto& a = clusters[s->second].scope;
                const auto& b = clusters[t->second].scope;
                if (!std::binary_search(a.begin(), a.end(), var) || !std::binary_search(b.begin(), b.end(), var))
                    detail::fail(v, "sepset variable '" + space[static_cast<size_t>(var)].name +
                                        "' is not contained in both cluster scopes");
                spec.sepset.push_back(var);
            }
            edges.push_back(std::move(spec));
        }
    }

    std::vector<std::string> feature_names;
    std::map<std::string, int> feature_index;
    auto feature_id = [&](const std::string& name) {
        auto [it, fresh] = feature_index.emplace(name, static_cast<int>(feature_names.size()));
        if (fresh) feature_names.push_back(name);
        return it->second;
    };
    if (YAML::Node ids = root["feature_ids"]) {
        if (!ids.IsSequence()) detail::fail(ids, "'feature_ids' must be a list");
        for (const auto& id : ids) {
            const auto name = detail::scalar<std::string>(id, "feature id");
            if (feature_index.count(name)) detail::fail(id, "duplicate feature id '" + name + "'");
            feature_id(name);
        }
    }

    std::vector<FeatureModel::Table> tables(clusters.size());
    std::vector<ScopeIndexer> indexers;
    for (size_t p = 0; p < clusters.size(); ++p) {
        indexers.emplace_back(clusters[p].scope, space);
        tables[p].resize(indexers[p].size());
    }
    if (YAML::Node node = root["features"]) {
        if (!node.IsSequence()) detail::fail(node, "'features' must be a list");
        for (const auto& f : node) {
            const int fid = feature_id(detail::scalar<std::string>(detail::required(f, "id"), "feature id"));
            const int cid = detail::scalar<int>(detail::required(f, "cluster"), "cluster");
            auto cp = cluster_pos.find(cid);
            if (cp == cluster_pos.end()) detail::fail(f, "unknown cluster " + std::to_string(cid));
            const double value = f["value"] ? detail::scalar<double>(f["value"], "value") : 1.0;
            const YAML::Node pattern = detail::required(f, "pattern");
            const auto& written = written_scopes[cp->second];
            if (!pattern.IsSequence() || pattern.size() != written.size())
                detail::fail(pattern, "pattern must list one state or '*' per scope variable");
            // Pattern in written order -> allowed states per sorted scope position.
            const auto& sorted = clusters[cp->second].scope;
            std::vector<int> fixed(sorted.size(), kFree);
            for (size_t k = 0; k < written.size(); ++k) {
                const YAML::Node s = pattern[k];
                const size_t pos = static_cast<size_t>(std::find(sorted.begin(), sorted.end(), written[k]) - sorted.begin());
                if (s.IsScalar() && s.Scalar() == "*") continue;
                const int state = detail::scalar<int>(s, "pattern state");
                if (state < 0 || state >= space.cardinality(static_cast<size_t>(written[k])))
                    detail::fail(s, "state " + std::to_string(state) + " out of range");
                fixed[pos] = state;
            }
            const auto& idx = indexers[cp->second];
            for (size_t a = 0; a < idx.size(); ++a) {
                bool match = true;
                for (size_t k = 0; k < fixed.size() && match; ++k)
                    match = fixed[k] == kFree || fixed[k] == idx.state_at(static_cast<int>(a), k);
                if (!match) continue;
                auto& row = tables[cp->second][a];
                auto it = std::find_if(row.begin(), row.end(), [&](const FeatureEntry& e) { return e.feature == fid; });
                if (it == row.end()) row.push_back({fid, value});
                else it->value += value;
            }
        }
    }
    for (auto& t : tables)
        for (auto& row : t) {
            std::sort(row.begin(), row.end(), [](const FeatureEntry& a, const FeatureEntry& b) { return a.feature < b.feature; });
            std::erase_if(row, [](const FeatureEntry& e) { return e.value == 0.0; });
        }
    return make_model(std::move(vars), std::move(clusters), edges, std::move(feature_names), std::move(tables));
}

inline Model parse_model(const std::string& text) {
    std::istringstream in(text);
    return parse_model(in);
}

inline Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open model file '" + path + "'");
    return parse_model(in);
}

/// Writes the model with every feature entry expanded (no wildcards).
inline void serialize_model(std::ostream& os, const Model& m) {
    const auto& sp = m.space;
    os << "format: 1\nvariables:\n";
    for (const auto& v : sp.variables())
        os << "  - {name: " << detail::quote(v.name) << ", cardinality: " << v.cardinality
           << ", type: " << detail::quote(v.type) << "}\n";
    os << "clusters:\n";
    for (const auto& c : m.graph.clusters()) {
        os << "  - {id: " << c.id << ", scope: [";
        for (size_t k = 0; k < c.scope.size(); ++k) os << (k ? ", " : "") << detail::quote(sp[static_cast<size_t>(c.scope[k])].name);
        os << "]}\n";
    }
    os << "edges:" << (m.graph.edges().empty() ? " []" : "") << "\n";
    for (const auto& e : m.graph.edges()) {
        os << "  - {source: " << m.graph.cluster(e.source).id << ", target: " << m.graph.cluster(e.target).id
           << ", sepset: [";
        for (size_t k = 0; k < e.sepset.size(); ++k) os << (k ? ", " : "") << detail::quote(sp[static_cast<size_t>(e.sepset[k])].name);
        os << "]}\n";
    }
    os << "feature_ids: [";
    for (size_t l = 0; l < m.features.names().size(); ++l) os << (l ? ", " : "") << detail::quote(m.features.names()[l]);
    os << "]\n";
    bool any = false;
    for (size_t i = 0; i < m.graph.size(); ++i)
        for (const auto& row : m.features.table(i)) any = any || !row.empty();
    os << "features:" << (any ? "" : " []") << "\n";
    for (size_t i = 0; i < m.graph.size(); ++i) {
        const auto& idx = m.graph.indexer(i);
        for (size_t a = 0; a < idx.size(); ++a)
            for (const auto& fe : m.features.table(i)[a]) {
                os << "  - {id: " << detail::quote(m.features.names()[static_cast<size_t>(fe.feature)])
                   << ", cluster: " << m.graph.cluster(i).id << ", pattern: [";
                for (size_t k = 0; k < idx.scope().size(); ++k) os << (k ? ", " : "") << idx.state_at(static_cast<int>(a), k);
                os << "], value: " << detail::format_double(fe.value) << "}\n";
            }
    }
}

inline std::string serialize_model(const Model& m) {
    std::ostringstream os;
    serialize_model(os, m);
    return os.str();
}

/// Structural equality: variables, clusters, edges and feature tables.
inline bool same_model(const Model& a, const Model& b) {
    if (!(a.space == b.space) || !(a.features == b.features) || a.graph.size() != b.graph.size()) return false;
    for (size_t i = 0; i < a.graph.size(); ++i)
        if (a.graph.cluster(i).id != b.graph.cluster(i).id || a.graph.cluster(i).scope != b.graph.cluster(i).scope)
            return false;
    if (a.graph.edges().size() != b.graph.edges().size()) return false;
    for (size_t e = 0; e < a.graph.edges().size(); ++e) {
        const auto &x = a.graph.edges()[e], &y = b.graph.edges()[e];
        if (x.source != y.source || x.target != y.target || x.sepset != y.sepset) return false;
    }
    return true;
}

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

inline std::vector<std::string> split_ws(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string t; in >> t;) out.push_back(t);
    return out;
}

/// Reads non-blank, non-comment lines with their 1-based line numbers.
inline std::vector<std::pair<size_t, std::string>> content_lines(std::istream& in) {
    std::vector<std::pair<size_t, std::string>> out;
    std::string line;
    for (size_t n = 1; std::getline(in, line); ++n) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (!line.empty()) out.emplace_back(n, line);
    }
    return out;
}

inline void expect_format_line(const std::vector<std::pair<size_t, std::string>>& lines) {
    if (lines.empty()) throw ParseError(1, 0, "empty file; expected 'format: 1'");
    auto toks = split_ws(lines.front().second);
    if (toks.size() != 2 || toks[0] != "format:" || toks[1] != "1")
        throw ParseError(lines.front().first, 0, "expected 'format: 1' as the first line");
}

} // namespace detail

/// Data file: `format: 1`, optional `mode:` and `observed:`/`target:` header
/// lines, then one instance per line as whitespace-separated var=state pairs.
inline Dataset parse_data(std::istream& in, const VariableSpace& space) {
    const auto lines = detail::content_lines(in);
    detail::expect_format_line(lines);
    Dataset data;
    data.observed.assign(space.size(), false);
    bool mode_given = false, marked = false;
    size_t k = 1;
    auto mark_vars = [&](size_t line_no, const std::vector<std::string>& toks, bool value) {
        for (size_t t = 1; t < toks.size(); ++t) {
            auto v = space.find(toks[t]);
            if (!v) throw ParseError(line_no, 0, "unknown variable '" + toks[t] + "'");
            data.observed[static_cast<size_t>(*v)] = value;
        }
        marked = true;
    };
    for (; k < lines.size() && lines[k].second.find('=') == std::string::npos; ++k) {
        const auto& [n, text] = lines[k];
        auto toks = detail::split_ws(text);
        if (toks[0] == "mode:") {
            if (toks.size() != 2 || (toks[1] != "generative" && toks[1] != "conditional"))
                throw ParseError(n, 0, "mode must be 'generative' or 'conditional'");
            data.mode = toks[1] == "conditional" ? DataMode::Conditional : DataMode::Generative;
            mode_given = true;
        } else if (toks[0] == "observed:") {
            mark_vars(n, toks, true);
        } else if (toks[0] == "target:") {
            std::fill(data.observed.begin(), data.observed.end(), true);
            mark_vars(n, toks, false);
        } else {
            throw ParseError(n, 0, "unknown header line '" + text + "'");
        }
    }
    if (marked && !mode_given) data.mode = DataMode::Conditional;
    if (data.mode == DataMode::Generative && marked) throw ParseError(lines[0].first, 0, "generative data cannot mark observed variables");
    for (; k < lines.size(); ++k) {
        const auto& [n, text] = lines[k];
        Assignment x(space.size(), kFree);
        for (const auto& tok : detail::split_ws(text)) {
            const auto eq = tok.find('=');
            if (eq == std::string::npos) throw ParseError(n, 0, "expected var=state, got '" + tok + "'");
            auto v = space.find(tok.substr(0, eq));
            if (!v) throw ParseError(n, 0, "unknown variable '" + tok.substr(0, eq) + "'");
            int state = 0;
            try {
                size_t used = 0;
                state = std::stoi(tok.substr(eq + 1), &used);
                if (used != tok.size() - eq - 1) throw std::invalid_argument(tok);
            } catch (const std::exception&) {
                throw ParseError(n, 0, "invalid state in '" + tok + "'");
            }
            const auto uv = static_cast<size_t>(*v);
            if (state < 0 || state >= space.cardinality(uv))
                throw ParseError(n, 0, "state " + std::to_string(state) + " out of range for '" + space[uv].name + "'");
            if (x[uv] != kFree) throw ParseError(n, 0, "variable '" + space[uv].name + "' assigned twice");
            x[uv] = state;
        }
        for (size_t v = 0; v < x.size(); ++v)
            if (x[v] == kFree) throw ParseError(n, 0, "instance does not assign '" + space[v].name + "'");
        data.instances.push_back(std::move(x));
    }
    if (data.instances.empty()) throw ParseError(lines.back().first, 0, "data file contains no instances");
    return data;
}

inline Dataset parse_data(const std::string& text, const VariableSpace& space) {
    std::istringstream in(text);
    return parse_data(in, space);
}

inline Dataset load_data(const std::string& path, const VariableSpace& space) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open data file '" + path + "'");
    return parse_data(in, space);
}

inline void serialize_data(std::ostream& os, const Dataset& data, const VariableSpace& space) {
    os << "format: 1\n";
    if (data.mode == DataMode::Conditional) {
        os << "mode: conditional\nobserved:";
        for (size_t v = 0; v < space.size(); ++v)
            if (data.observed[v]) os << ' ' << space[v].name;
        os << '\n';
    } else {
        os << "mode: generative\n";
    }
    for (const auto& x : data.instances) {
        for (size_t v = 0; v < x.size(); ++v) os << (v ? " " : "") << space[v].name << '=' << x[v];
        os << '\n';
    }
}

/// Trained parameters: weights by feature id, consistency multipliers by
/// (context, edge, sepset assignment), and the linearization when non-zero.
struct ParameterSet {
    std::string method;
    DualParams params;
    std::optional<Linearization> g;
};

namespace detail {

inline std::string join_states(const std::vector<int>& s) {
    std::string out;
    for (size_t k = 0; k < s.size(); ++k) out += (k ? "," : "") + std::to_string(s[k]);
    return out;
}

inline int parse_states(size_t line, const std::string& text, const ScopeIndexer& idx) {
    std::vector<int> states;
    std::istringstream in(text);
    for (std::string t; std::getline(in, t, ',');) {
        try {
            states.push_back(std::stoi(t));
        } catch (const std::exception&) {
            throw ParseError(line, 0, "bad assignment '" + text + "'");
        }
    }
    if (states.size() != idx.scope().size()) throw ParseError(line, 0, "assignment '" + text + "' has wrong arity");
    for (size_t k = 0; k < states.size(); ++k)
        if (states[k] < 0 || states[k] >= idx.cardinalities()[k]) throw ParseError(line, 0, "state out of range in '" + text + "'");
    return idx.index(states);
}

inline double parse_value(size_t line, const std::string& text) {
    if (text == ".nan") return std::nan("");
    if (text == ".inf") return std::numeric_limits<double>::infinity();
    if (text == "-.inf") return -std::numeric_limits<double>::infinity();
    try {
        size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, 0, "bad number '" + text + "'");
    }
}

} // namespace detail

inline void serialize_parameters(std::ostream& os, const ParameterSet& p, const Model& model) {
    os << "format: 1\nmethod: " << p.method << "\nfeatures: " << p.params.w.size() << '\n';
    for (size_t l = 0; l < p.params.w.size(); ++l)
        os << "w " << model.features.names()[l] << ' ' << detail::format_double(p.params.w[l]) << '\n';
    os << "contexts: " << p.params.num_contexts << '\n';
    if (p.params.consistency) {
        const auto offsets = sepset_offsets(model);
        const size_t block = offsets.back();
        for (size_t c = 0; c < p.params.num_contexts; ++c)
            for (size_t e = 0; e < model.graph.edges().size(); ++e) {
                const Edge& edge = model.graph.edges()[e];
                for (size_t s = 0; s < edge.sep_index.size(); ++s)
                    os << "delta " << c << ' ' << model.graph.cluster(edge.source).id << ' '
                       << model.graph.cluster(edge.target).id << ' '
                       << detail::join_states(edge.sep_index.states(static_cast<int>(s))) << ' '
                       << detail::format_double(p.params.delta[c * block + offsets[e] + s]) << '\n';
            }
    }
    if (p.g)
        for (size_t c = 0; c < p.g->g.size(); ++c)
            for (size_t i = 0; i < model.graph.size(); ++i) {
                const auto& idx = model.graph.indexer(i);
                for (size_t a = 0; a < idx.size(); ++a)
                    os << "g " << c << ' ' << model.graph.cluster(i).id << ' '
                       << detail::join_states(idx.states(static_cast<int>(a))) << ' '
                       << detail::format_double(p.g->g[c][i][a]) << '\n';
            }
}

inline ParameterSet parse_parameters(std::istream& in, const Model& model) {
    const auto lines = detail::content_lines(in);
    detail::expect_format_line(lines);
    ParameterSet p;
    p.params.w.assign(model.num_features(), 0.0);
    const auto offsets = sepset_offsets(model);
    const size_t block = offsets.back();
    std::map<std::pair<int, int>, size_t> edge_of;
    for (size_t e = 0; e < model.graph.edges().size(); ++e)
        edge_of[{model.graph.cluster(model.graph.edges()[e].source).id, model.graph.cluster(model.graph.edges()[e].target).id}] = e;
    for (size_t k = 1; k < lines.size(); ++k) {
        const auto& [n, text] = lines[k];
        const auto t = detail::split_ws(text);
        auto need = [&, n = n](size_t count) {
            if (t.size() != count) throw ParseError(n, 0, "expected " + std::to_string(count) + " fields");
        };
        auto as_size = [&, n = n](const std::string& s) {
            try {
                return static_cast<size_t>(std::stoul(s));
            } catch (const std::exception&) {
                throw ParseError(n, 0, "bad integer '" + s + "'");
            }
        };
        if (t[0] == "method:") {
            need(2);
            p.method = t[1];
        } else if (t[0] == "features:") {
            need(2);
            if (as_size(t[1]) != model.num_features()) throw ParseError(n, 0, "feature count does not match the model");
        } else if (t[0] == "contexts:") {
            need(2);
            p.params.num_contexts = as_size(t[1]);
        } else if (t[0] == "w") {
            need(3);
            auto l = model.features.find(t[1]);
            if (!l) throw ParseError(n, 0, "unknown feature '" + t[1] + "'");
            p.params.w[static_cast<size_t>(*l)] = detail::parse_value(n, t[2]);
        } else if (t[0] == "delta") {
            need(6);
            if (!p.params.consistency) {
                p.params.consistency = true;
                p.params.delta.assign(p.params.num_contexts * block, 0.0);
            }
            const size_t c = as_size(t[1]);
            auto it = edge_of.find({static_cast<int>(as_size(t[2])), static_cast<int>(as_size(t[3]))});
            if (c >= p.params.num_contexts || it == edge_of.end()) throw ParseError(n, 0, "unknown context or edge");
            const size_t s = static_cast<size_t>(detail::parse_states(n, t[4], model.graph.edges()[it->second].sep_index));
            p.params.delta[c * block + offsets[it->second] + s] = detail::parse_value(n, t[5]);
        } else if (t[0] == "g") {
            need(5);
            if (!p.g) p.g = Linearization::zero(model, p.params.num_contexts);
            const size_t c = as_size(t[1]);
            if (c >= p.params.num_contexts) throw ParseError(n, 0, "unknown context");
            const size_t i = model.graph.position(static_cast<int>(as_size(t[2])));
            const size_t a = static_cast<size_t>(detail::parse_states(n, t[3], model.graph.indexer(i)));
            p.g->g[c][i][a] = detail::parse_value(n, t[4]);
        } else {
            throw ParseError(n, 0, "unknown record '" + t[0] + "'");
        }
    }
    return p;
}

inline ParameterSet load_parameters(const std::string& path, const Model& model) {
    std::ifstream in(path);
    if (!in) throw ModelError("cannot open parameter file '" + path + "'");
    return parse_parameters(in, model);
}

} // namespace camel
