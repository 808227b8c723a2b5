#include <gtest/gtest.h>

#include <Eigen/Dense>

#include "fixtures.hpp"

using namespace camel;

namespace {

LbpConfig tight(double threshold = 1e-12) {
    LbpConfig c;
    c.threshold = threshold;
    return c;
}

/// 7-state grid with a strong shared agreement table.
Model potts_grid(int side, int states) {
    std::vector<Variable> vars;
    for (int v = 0; v < side * side; ++v) vars.push_back({"P" + std::to_string(v), states});
    std::vector<Cluster> clusters;
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c) {
            if (c + 1 < side) clusters.push_back({static_cast<int>(clusters.size()), {r * side + c, r * side + c + 1}});
            if (r + 1 < side) clusters.push_back({static_cast<int>(clusters.size()), {r * side + c, (r + 1) * side + c}});
        }
    std::vector<FeatureModel::Table> tables(clusters.size(), FeatureModel::Table(static_cast<size_t>(states * states)));
    for (auto& t : tables)
        for (int s = 0; s < states; ++s) t[static_cast<size_t>(s * states + s)] = {{0, 1.0}};
    // A per-node bias breaks the symmetry so the flat point is not a fixed point.
    std::vector<std::string> names{"agree"};
    for (int v = 0; v < side * side; ++v) {
        names.push_back("b" + std::to_string(v));
        for (size_t i = 0; i < clusters.size(); ++i)
            if (clusters[i].scope[0] == v) {
                for (int s = 0; s < states; ++s) tables[i][static_cast<size_t>(((v + 1) % states) * states + s)].push_back({static_cast<int>(names.size() - 1), 1.0});
                break;
            }
    }
    auto edges = ClusterGraph::derive_edges(clusters, vars.size(), EdgeRule::AllPairs);
    return make_model(vars, clusters, edges, names, tables);
}

} // namespace

TEST(Lbp, ExactOnTrees) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 20; ++t) {
        const auto m = fixtures::random_tree_model(3 + t % 5, rng, 2 + t % 3);
        ASSERT_TRUE(m.graph.is_tree());
        const auto w = fixtures::random_vector(m.num_features(), rng, 2.0);
        const auto r = lbp_infer(m, w, nullptr, tight(1e-6));
        EXPECT_TRUE(r.converged);
        EXPECT_LE(fixtures::max_abs_diff(r.beliefs, exact_marginals(m, w)), 1e-8);
        Assignment ev(m.space.size(), kFree);
        ev[0] = 1;
        const auto rc = lbp_infer(m, w, ev, nullptr, tight(1e-6));
        EXPECT_LE(fixtures::max_abs_diff(rc.beliefs, exact_marginals(m, w, ev)), 1e-8);
    }
}

TEST(Lbp, BetheFreeEnergyIsLogPartitionOnTrees) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 5; ++t) {
        const auto m = fixtures::random_tree_model(6, rng);
        const auto w = fixtures::random_vector(m.num_features(), rng, 1.5);
        const auto r = lbp_infer(m, w, nullptr, tight());
        EXPECT_NEAR(-bethe_free_energy(m, w, r.beliefs), exact_log_partition(m, w), 1e-9);
    }
}

TEST(Lbp, ZeroWeightsAreUniformImmediately) {
    std::mt19937_64 rng(3);
    const auto m = fixtures::grid_model(3, rng);
    const std::vector<double> w(m.num_features(), 0.0);
    const auto r = lbp_infer(m, w);
    EXPECT_TRUE(r.converged);
    EXPECT_LE(r.updates, 2 * m.graph.edges().size());
    for (const auto& c : r.beliefs.clusters)
        for (double v : c) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Lbp, LoopyBeliefsAreNormalizedAndConsistent) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 10; ++t) {
        const auto m = t % 2 ? fixtures::loop_model(5, rng) : fixtures::grid_model(3, rng);
        const auto w = fixtures::random_vector(m.num_features(), rng, 0.5);
        const auto cfg = tight(1e-9);
        const auto r = lbp_infer(m, w, nullptr, cfg);
        ASSERT_TRUE(r.converged);
        for (const auto& c : r.beliefs.clusters) EXPECT_NEAR(std::accumulate(c.begin(), c.end(), 0.0), 1.0, 1e-12);
        for (double x : consistency_residuals(m, r.beliefs)) EXPECT_LE(std::abs(x), 10 * cfg.threshold);
    }
}

TEST(Lbp, HardModelStillReturnsBeliefs) {
    const auto m = potts_grid(3, 7);
    std::vector<double> w(m.num_features(), 0.0);
    w[0] = 4.0;
    for (size_t l = 1; l < w.size(); ++l) w[l] = (l % 2 ? 1.0 : -1.0);
    LbpConfig cfg;
    cfg.max_updates = 3000;
    const auto r = lbp_infer(m, w, nullptr, cfg);
    ASSERT_EQ(r.beliefs.size(), m.graph.size());
    for (const auto& c : r.beliefs.clusters) EXPECT_NEAR(std::accumulate(c.begin(), c.end(), 0.0), 1.0, 1e-9);
    EXPECT_LE(r.updates, cfg.max_updates);
}

TEST(Lbp, WarmStartNeedsNoMoreUpdates) {
    std::mt19937_64 rng(5);
    int checked = 0;
    for (int t = 0; t < 40 && checked < 10; ++t) {
        const auto m = t % 2 ? fixtures::loop_model(5, rng) : fixtures::grid_model(3, rng);
        auto w = fixtures::random_vector(m.num_features(), rng, 0.7);
        const auto first = lbp_infer(m, w, nullptr, tight(1e-8));
        if (!first.converged) continue;
        const auto dw = fixtures::random_vector(w.size(), rng, 1e-3 / std::sqrt(static_cast<double>(w.size())));
        for (size_t l = 0; l < w.size(); ++l) w[l] += dw[l];
        const auto cold = lbp_infer(m, w, nullptr, tight(1e-8));
        const auto warm = lbp_infer(m, w, &first.messages, tight(1e-8));
        EXPECT_LE(warm.updates, cold.updates);
        ++checked;
    }
    EXPECT_EQ(checked, 10);
}

TEST(Lbp, DampingReachesTheSameFixedPoint) {
    std::mt19937_64 rng(6);
    const auto m = fixtures::loop_model(4, rng);
    const auto w = fixtures::random_vector(m.num_features(), rng, 0.5);
    auto damped = tight(1e-11);
    damped.damping = 0.5;
    const auto a = lbp_infer(m, w, nullptr, tight(1e-11));
    const auto b = lbp_infer(m, w, nullptr, damped);
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_LE(fixtures::max_abs_diff(a.beliefs, b.beliefs), 1e-9);
}

// A fixed point is a stationary point of the Bethe free energy on the local
// polytope: moving the beliefs along any direction that keeps them normalized
// and consistent changes F only at second order.
TEST(Lbp, FixedPointIsStationaryOnTheLocalPolytope) {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 5; ++t) {
        const auto m = t % 2 ? fixtures::loop_model(4, rng) : fixtures::grid_model(3, rng);
        const auto w = fixtures::random_vector(m.num_features(), rng, 0.5);
        const auto r = lbp_infer(m, w, nullptr, tight(1e-13));
        ASSERT_TRUE(r.converged);

        std::vector<size_t> offset{0};
        for (size_t i = 0; i < m.graph.size(); ++i) offset.push_back(offset.back() + r.beliefs[i].size());
        const auto n = static_cast<Eigen::Index>(offset.back());
        std::vector<Eigen::RowVectorXd> rows;
        for (size_t i = 0; i < m.graph.size(); ++i) {
            Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
            for (size_t a = 0; a < r.beliefs[i].size(); ++a) row(static_cast<Eigen::Index>(offset[i] + a)) = 1.0;
            rows.push_back(row);
        }
        for (size_t e = 0; e < m.graph.edges().size(); ++e) {
            const Edge& edge = m.graph.edges()[e];
            for (size_t s = 0; s < edge.sep_index.size(); ++s) {
                Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(n);
                for (size_t a = 0; a < edge.source_projection.size(); ++a)
                    if (static_cast<size_t>(edge.source_projection[a]) == s) row(static_cast<Eigen::Index>(offset[edge.source] + a)) += 1.0;
                for (size_t a = 0; a < edge.target_projection.size(); ++a)
                    if (static_cast<size_t>(edge.target_projection[a]) == s) row(static_cast<Eigen::Index>(offset[edge.target] + a)) -= 1.0;
                rows.push_back(row);
            }
        }
        Eigen::MatrixXd A(static_cast<Eigen::Index>(rows.size()), n);
        for (size_t k = 0; k < rows.size(); ++k) A.row(static_cast<Eigen::Index>(k)) = rows[k];
        const Eigen::MatrixXd kernel = Eigen::FullPivLU<Eigen::MatrixXd>(A).kernel();
        ASSERT_GT(kernel.cols(), 0);

        const double f0 = bethe_free_energy(m, w, r.beliefs);
        auto shifted = [&](const Eigen::VectorXd& d, double eps) {
            PseudoMarginals b = r.beliefs;
            for (size_t i = 0; i < b.size(); ++i)
                for (size_t a = 0; a < b[i].size(); ++a) b.clusters[i][a] += eps * d(static_cast<Eigen::Index>(offset[i] + a));
            return bethe_free_energy(m, w, b);
        };
        for (int k = 0; k < 5; ++k) {
            Eigen::VectorXd d = kernel * Eigen::VectorXd::NullaryExpr(kernel.cols(), [&] { return fixtures::uniform(rng, -1, 1); });
            d /= d.cwiseAbs().maxCoeff();
            EXPECT_LE(std::abs(shifted(d, 1e-6) - f0), 1e-10);
        }
        // Sensitivity check: an infeasible single-entry move is first order.
        Eigen::VectorXd spike = Eigen::VectorXd::Zero(n);
        spike(0) = 1.0;
        spike(1) = -1.0;
        EXPECT_GT(std::abs(shifted(spike, 1e-6) - f0), 1e-9);
    }
}

TEST(LbpMl, MatchesExactMlOnTrees) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 5; ++t) {
        const auto m = fixtures::random_tree_model(5, rng);
        const auto data = fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 1), 100, rng);
        SolverConfig cfg;
        cfg.sigma2 = 10.0;
        cfg.tolerance = 1e-8;
        const auto r = lbp_ml_train(m, data, cfg, tight());
        EXPECT_TRUE(r.converged());
        EXPECT_EQ(r.nonconverged_evaluations(), 0u);
        ExactMlConfig ec;
        ec.sigma2 = 10.0;
        const auto ml = exact_ml_train(m, data, ec);
        EXPECT_LE(fixtures::max_abs_diff(exact_marginals(m, r.weights), exact_marginals(m, ml.weights)), 1e-4);
    }
}

TEST(LbpMl, WeakLoopMatchesMoments) {
    const auto m = fixtures::abc_model();
    std::mt19937_64 rng(9);
    const std::vector<double> wstar{0.5, -0.3};
    const auto data = fixtures::sample(m, wstar, 10000, rng);
    SolverConfig cfg;
    cfg.tolerance = 1e-7;
    const auto r = lbp_ml_train(m, data, cfg, tight(1e-10));
    EXPECT_TRUE(r.converged());
    const auto beliefs = lbp_infer(m, r.weights, nullptr, tight()).beliefs;
    EXPECT_LE(inf_norm(moment_residuals(m, beliefs, empirical_expectations(m, data))), 1e-3);
}

TEST(LbpMl, ConditionalMode) {
    SynthConfig sc;
    sc.topology = Topology::Chain;
    sc.size = 4;
    sc.tying = Tying::PairwiseTied;
    sc.observations = true;
    sc.seed = 1;
    const auto s = gen_model(sc);
    const auto data = gen_data(s.model, s.weights, 15, 2, s.observed);
    SolverConfig cfg;
    cfg.sigma2 = 10.0;
    const auto r = lbp_ml_train(s.model, data, cfg, tight());
    EXPECT_TRUE(r.converged());
    EXPECT_EQ(r.messages.size(), 15u);
    // Tree-structured chain with observations: matches exact conditional ML.
    ExactMlConfig ec;
    ec.sigma2 = 10.0;
    const auto ml = exact_ml_train(s.model, data, ec);
    for (size_t l = 0; l < ml.weights.size(); ++l) EXPECT_NEAR(r.weights[l], ml.weights[l], 1e-3);
}

TEST(LbpMl, ReportsNonConvergence) {
    const auto m = potts_grid(3, 7);
    std::mt19937_64 rng(10);
    std::vector<Assignment> xs;
    for (int k = 0; k < 5; ++k) {
        Assignment x;
        for (int v = 0; v < 9; ++v) x.push_back(k % 2 ? 3 : static_cast<int>(rng() % 7));
        xs.push_back(x);
    }
    const auto data = fixtures::make_data(m, xs);
    SolverConfig cfg;
    cfg.max_iterations = 15;
    cfg.warm_start = DualParams{std::vector<double>(m.num_features(), 0.0), {}, false, 0};
    cfg.warm_start->w[0] = 5.0;
    LbpConfig lc;
    lc.max_updates = 500;
    const auto r = lbp_ml_train(m, data, cfg, lc);
    EXPECT_GT(r.evaluations.size(), 0u);
    EXPECT_GT(r.nonconverged_evaluations(), 0u);
}
