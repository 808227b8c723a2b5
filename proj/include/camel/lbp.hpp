#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <queue>
#include <span>
#include <tuple>
#include <vector>

#include "camel/dual_solver.hpp"
#include "camel/lbfgs.hpp"
#include "camel/math.hpp"
#include "camel/model.hpp"
#include "camel/objective.hpp"

namespace camel {

struct LbpConfig {
    /// Converged once every pending message residual is at most this.
    double threshold = 1e-6;
    size_t max_updates = 1'000'000;
    /// m <- (1 - damping) m_old + damping m_new, in log space. 1 = undamped.
    double damping = 1.0;
};

/// Log-space messages, two per edge: 2e carries source->target, 2e+1
/// target->source. Each message is normalized to log-sum-exp zero.
struct MessageState {
    std::vector<std::vector<double>> log_messages;

    bool empty() const { return log_messages.empty(); }

    static MessageState uniform(const Model& model) {
        MessageState m;
        for (const auto& e : model.graph.edges()) {
            const double v = -std::log(static_cast<double>(e.sep_index.size()));
            m.log_messages.emplace_back(e.sep_index.size(), v);
            m.log_messages.emplace_back(e.sep_index.size(), v);
        }
        return m;
    }
};

struct LbpResult {
    PseudoMarginals beliefs;
    MessageState messages;
    bool converged = false;
    size_t updates = 0;
    double max_residual = 0.0;
};

/// Sum-product on the cluster graph with residual scheduling.
class ResidualBp {
public:
    ResidualBp(const Model& model, std::span<const double> w, std::span<const int> evidence) : model_(model) {
        const auto allowed = allowed_entries(model, evidence);
        for (size_t i = 0; i < model.graph.size(); ++i) {
            std::vector<double> lp(model.graph.indexer(i).size(), kNegInf);
            for (int a : allowed[i]) lp[static_cast<size_t>(a)] = model.features.score(i, static_cast<size_t>(a), w);
            log_psi_.push_back(std::move(lp));
        }
        incoming_.resize(model.graph.size());
        for (size_t e = 0; e < model.graph.edges().size(); ++e) {
            incoming_[model.graph.edges()[e].target].push_back(2 * e);
            incoming_[model.graph.edges()[e].source].push_back(2 * e + 1);
        }
    }

    size_t from(size_t d) const {
        const Edge& e = model_.graph.edges()[d / 2];
        return d % 2 == 0 ? e.source : e.target;
    }
    size_t to(size_t d) const {
        const Edge& e = model_.graph.edges()[d / 2];
        return d % 2 == 0 ? e.target : e.source;
    }

    /// New normalized log message along d given the current messages.
    std::vector<double> compute(size_t d, const MessageState& m) const {
        const size_t i = from(d);
        const size_t edge = d / 2;
        auto vals = log_psi_[i];
        add_incoming(i, d ^ 1, m, vals);
        const auto& proj = model_.graph.projection(edge, i);
        const size_t S = model_.graph.edges()[edge].sep_index.size();
        std::vector<double> top(S, kNegInf), acc(S, 0.0);
        for (size_t a = 0; a < vals.size(); ++a)
            top[static_cast<size_t>(proj[a])] = std::max(top[static_cast<size_t>(proj[a])], vals[a]);
        for (size_t a = 0; a < vals.size(); ++a)
            if (vals[a] != kNegInf) acc[static_cast<size_t>(proj[a])] += std::exp(vals[a] - top[static_cast<size_t>(proj[a])]);
        std::vector<double> out(S);
        for (size_t s = 0; s < S; ++s) out[s] = top[s] == kNegInf ? kNegInf : top[s] + std::log(acc[s]);
        const double lz = log_sum_exp(out);
        for (double& v : out)
            if (v != kNegInf) v -= lz;
        return out;
    }

    static double residual(std::span<const double> a, std::span<const double> b) {
        double r = 0.0;
        for (size_t s = 0; s < a.size(); ++s) {
            if (a[s] == kNegInf && b[s] == kNegInf) continue;
            if (a[s] == kNegInf || b[s] == kNegInf) return std::numeric_limits<double>::infinity();
            r = std::max(r, std::abs(a[s] - b[s]));
        }
        return r;
    }

    PseudoMarginals beliefs(const MessageState& m) const {
        PseudoMarginals b;
        for (size_t i = 0; i < model_.graph.size(); ++i) {
            auto vals = log_psi_[i];
            add_incoming(i, std::numeric_limits<size_t>::max(), m, vals);
            normalize_log_weights(vals);
            b.clusters.push_back(std::move(vals));
        }
        return b;
    }

    LbpResult run(const MessageState* init, const LbpConfig& config) const {
        LbpResult res;
        res.messages = (init && !init->empty()) ? *init : MessageState::uniform(model_);
        auto& msg = res.messages.log_messages;
        const size_t D = msg.size();
        std::vector<std::vector<double>> cand(D);
        std::vector<double> resid(D);
        std::vector<size_t> version(D, 0);
        using Item = std::tuple<double, size_t, size_t>; // residual, -, message (ties -> lower index first)
        auto cmp = [](const Item& x, const Item& y) {
            if (std::get<0>(x) != std::get<0>(y)) return std::get<0>(x) < std::get<0>(y);
            return std::get<2>(x) > std::get<2>(y);
        };
        std::priority_queue<Item, std::vector<Item>, decltype(cmp)> heap(cmp);
        auto refresh = [&](size_t d) {
            cand[d] = compute(d, res.messages);
            resid[d] = residual(cand[d], msg[d]);
            heap.emplace(resid[d], ++version[d], d);
        };
        for (size_t d = 0; d < D; ++d) refresh(d);

        res.converged = D == 0;
        while (!heap.empty()) {
            auto [r, ver, d] = heap.top();
            if (ver != version[d]) {
                heap.pop();
                continue;
            }
            if (r <= config.threshold) {
                res.converged = true;
                break;
            }
            if (res.updates >= config.max_updates) break;
            heap.pop();
            if (config.damping >= 1.0 || r == std::numeric_limits<double>::infinity()) {
                msg[d] = cand[d];
            } else {
                for (size_t s = 0; s < msg[d].size(); ++s)
                    msg[d][s] = (1.0 - config.damping) * msg[d][s] + config.damping * cand[d][s];
                const double lz = log_sum_exp(msg[d]);
                for (double& v : msg[d])
                    if (v != kNegInf) v -= lz;
            }
            ++res.updates;
            resid[d] = residual(cand[d], msg[d]);
            heap.emplace(resid[d], ++version[d], d);
            const size_t j = to(d);
            for (size_t e : model_.graph.incident(j)) {
                const size_t out = model_.graph.edges()[e].source == j ? 2 * e : 2 * e + 1;
                if (out != (d ^ 1)) refresh(out);
            }
        }
        res.max_residual = 0.0;
        for (double r : resid) res.max_residual = std::max(res.max_residual, r);
        if (res.converged) res.converged = res.max_residual <= config.threshold;
        res.beliefs = beliefs(res.messages);
        return res;
    }

private:
    void add_incoming(size_t i, size_t skip, const MessageState& m, std::vector<double>& vals) const {
        for (size_t din : incoming_[i]) {
            if (din == skip) continue;
            const auto& proj = model_.graph.projection(din / 2, i);
            const auto& msg = m.log_messages[din];
            for (size_t a = 0; a < vals.size(); ++a)
                if (vals[a] != kNegInf) vals[a] += msg[static_cast<size_t>(proj[a])];
        }
    }

    const Model& model_;
    std::vector<std::vector<double>> log_psi_;
    std::vector<std::vector<size_t>> incoming_;
};

inline LbpResult lbp_infer(const Model& model, std::span<const double> w, std::span<const int> evidence,
                           const MessageState* init = nullptr, const LbpConfig& config = {}) {
    return ResidualBp(model, w, evidence).run(init, config);
}

inline LbpResult lbp_infer(const Model& model, std::span<const double> w, const MessageState* init = nullptr,
                           const LbpConfig& config = {}) {
    const Assignment none(model.space.size(), kFree);
    return lbp_infer(model, w, none, init, config);
}

/// Bethe free energy -sum_i E_b[w.f] - H_Bethe(b); at an LBP fixed point its
/// negation approximates log Z.
inline double bethe_free_energy(const Model& model, std::span<const double> w, const PseudoMarginals& beliefs) {
    double energy = 0.0;
    for (size_t i = 0; i < model.graph.size(); ++i)
        for (size_t a = 0; a < beliefs[i].size(); ++a)
            if (beliefs[i][a] > 0.0) energy -= beliefs[i][a] * model.features.score(i, a, w);
    return energy - bethe_entropy(model, beliefs);
}

struct LbpEvaluation {
    bool converged = false;
    size_t updates = 0;
};

struct LbpMlResult {
    std::vector<double> weights;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    opt::Status status = opt::Status::MaxIterations;
    /// One entry per objective evaluation; false when any context failed to converge.
    std::vector<LbpEvaluation> evaluations;
    /// Messages at the final weights, per context.
    std::vector<MessageState> messages;

    bool converged() const { return status == opt::Status::Converged; }
    size_t nonconverged_evaluations() const {
        size_t n = 0;
        for (const auto& e : evaluations) n += e.converged ? 0 : 1;
        return n;
    }
};

/// Approximate maximum likelihood: L-BFGS on w with LBP beliefs supplying the
/// expected features and the Bethe free energy standing in for log Z. Messages
/// are warm-started across evaluations.
inline LbpMlResult lbp_ml_train(const Model& model, const Dataset& data, const SolverConfig& config,
                                const LbpConfig& lbp = {}) {
    const auto contexts = make_contexts(model, data);
    const size_t L = model.num_features();
    std::vector<MessageState> messages(contexts.size());
    LbpMlResult out;

    auto fn = [&](std::span<const double> w, std::span<double> grad) {
        std::vector<double> value_c(contexts.size());
        std::vector<std::vector<double>> expect_c(contexts.size());
        std::vector<LbpResult> runs(contexts.size());
        parallel_for(contexts.size(), config.threads, [&](size_t c) {
            runs[c] = lbp_infer(model, w, contexts[c].evidence, &messages[c], lbp);
            value_c[c] = dot(w, contexts[c].empirical) + bethe_free_energy(model, w, runs[c].beliefs);
            expect_c[c] = expected_features(model, runs[c].beliefs);
        });
        LbpEvaluation ev{true, 0};
        double value = 0.0;
        std::fill(grad.begin(), grad.end(), 0.0);
        for (size_t c = 0; c < contexts.size(); ++c) {
            ev.converged = ev.converged && runs[c].converged;
            ev.updates += runs[c].updates;
            messages[c] = std::move(runs[c].messages);
            value += contexts[c].weight * value_c[c];
            for (size_t l = 0; l < L; ++l) grad[l] += contexts[c].weight * (contexts[c].empirical[l] - expect_c[c][l]);
        }
        if (config.sigma2) {
            const double denom = *config.sigma2 * static_cast<double>(data.size());
            value -= dot(w, w) / (2.0 * denom);
            for (size_t l = 0; l < L; ++l) grad[l] -= w[l] / denom;
        }
        out.evaluations.push_back(ev);
        for (double& g : grad) g = -g;
        return -value;
    };

    opt::LbfgsOptions lo;
    lo.tolerance = config.tolerance;
    lo.max_iterations = config.max_iterations;
    lo.memory = config.memory;
    lo.lower.assign(L, -config.weight_cap);
    lo.upper.assign(L, config.weight_cap);
    lo.on_iteration = config.on_iteration;
    std::vector<double> w0 = config.warm_start ? config.warm_start->w : std::vector<double>(L, 0.0);
    auto r = opt::minimize(fn, std::move(w0), lo);
    if (r.status == opt::Status::NonFinite) throw NumericalError("non-finite objective during LBP-based training");
    out.weights = std::move(r.x);
    out.value = -r.value;
    out.gradient_norm = r.gradient_norm;
    out.iterations = r.iterations;
    out.status = r.status;
    out.messages = std::move(messages);
    return out;
}

} // namespace camel
