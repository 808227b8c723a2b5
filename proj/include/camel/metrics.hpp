#pragma once

#include <map>
#include <string>
#include <vector>

#include "camel/model.hpp"
#include "camel/objective.hpp"

namespace camel {

/// Single-variable beliefs read off the first cluster containing each variable.
inline std::vector<std::vector<double>> variable_beliefs(const Model& model, const PseudoMarginals& pi) {
    std::vector<std::vector<double>> out(model.space.size());
    std::vector<bool> done(model.space.size(), false);
    for (size_t i = 0; i < model.graph.size(); ++i) {
        const auto& idx = model.graph.indexer(i);
        for (size_t k = 0; k < idx.scope().size(); ++k) {
            const auto v = static_cast<size_t>(idx.scope()[k]);
            if (done[v]) continue;
            done[v] = true;
            out[v].assign(static_cast<size_t>(model.space.cardinality(v)), 0.0);
            for (size_t a = 0; a < idx.size(); ++a) out[v][static_cast<size_t>(idx.state_at(static_cast<int>(a), k))] += pi[i][a];
        }
    }
    return out;
}

/// Index of the largest entry; ties go to the lower state.
inline int argmax_state(std::span<const double> b) {
    int best = 0;
    for (size_t s = 1; s < b.size(); ++s)
        if (b[s] > b[static_cast<size_t>(best)]) best = static_cast<int>(s);
    return best;
}

inline Assignment predict(const Model& model, const PseudoMarginals& pi) {
    Assignment x;
    for (const auto& b : variable_beliefs(model, pi)) x.push_back(argmax_state(b));
    return x;
}

struct AccuracyReport {
    /// Per variable; NaN for variables never scored (observed ones).
    std::vector<double> per_variable;
    std::map<std::string, double> per_type;
    /// Mean over variable types of the per-type accuracy.
    double macro = 0.0;
    /// Pooled over every scored (instance, variable) pair.
    double micro = 0.0;
};

/// Scores predictions[m] against data.instances[m] on the target variables.
inline AccuracyReport score_predictions(const Model& model, const Dataset& data, const std::vector<Assignment>& predictions) {
    const size_t n = model.space.size();
    std::vector<double> hits(n, 0.0), total(n, 0.0);
    for (size_t m = 0; m < data.size(); ++m)
        for (size_t v = 0; v < n; ++v) {
            if (data.mode == DataMode::Conditional && data.observed[v]) continue;
            total[v] += 1.0;
            hits[v] += predictions[m][v] == data.instances[m][v] ? 1.0 : 0.0;
        }
    AccuracyReport r;
    std::map<std::string, std::pair<double, double>> by_type;
    double h = 0.0, t = 0.0;
    for (size_t v = 0; v < n; ++v) {
        r.per_variable.push_back(total[v] > 0 ? hits[v] / total[v] : std::nan(""));
        if (total[v] == 0) continue;
        auto& bt = by_type[model.space[v].type];
        bt.first += hits[v];
        bt.second += total[v];
        h += hits[v];
        t += total[v];
    }
    for (const auto& [type, ht] : by_type) {
        r.per_type[type] = ht.first / ht.second;
        r.macro += ht.first / ht.second;
    }
    r.macro = by_type.empty() ? 0.0 : r.macro / static_cast<double>(by_type.size());
    r.micro = t > 0 ? h / t : 0.0;
    return r;
}

} // namespace camel
