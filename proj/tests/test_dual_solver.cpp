#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace camel;
using fixtures::abc_data;
using fixtures::abc_model;

namespace {

Linearization random_g(const Model& m, size_t contexts, std::mt19937_64& rng) {
    auto g = Linearization::zero(m, contexts);
    for (auto& c : g.g)
        for (auto& cl : c)
            for (double& v : cl) v = fixtures::uniform(rng, -1, 1);
    return g;
}

Dataset conditional(Dataset d, std::initializer_list<int> observed) {
    d.mode = DataMode::Conditional;
    for (int v : observed) d.observed[static_cast<size_t>(v)] = true;
    return d;
}

/// Independent piecewise trainer: maximize sum_i [w.Ê_i - log Z_i(w)] - |w|^2/(2 s2 M)
/// by gradient ascent with backtracking, computing each local Z from scratch.
std::vector<double> reference_piecewise(const Model& m, const Dataset& d, double s2) {
    const size_t L = m.num_features();
    const auto emp = empirical_expectations(m, d);
    const double M = static_cast<double>(d.size());
    auto eval = [&](const std::vector<double>& w, std::vector<double>* grad) {
        double v = 0.0;
        for (size_t l = 0; l < L; ++l) v += w[l] * emp[l] - w[l] * w[l] / (2 * s2 * M);
        if (grad)
            for (size_t l = 0; l < L; ++l) (*grad)[l] = emp[l] - w[l] / (s2 * M);
        for (size_t i = 0; i < m.graph.size(); ++i) {
            const auto& table = m.features.table(i);
            std::vector<double> s(table.size(), 0.0);
            for (size_t a = 0; a < table.size(); ++a)
                for (const auto& e : table[a]) s[a] += w[static_cast<size_t>(e.feature)] * e.value;
            double top = *std::max_element(s.begin(), s.end()), z = 0.0;
            for (double x : s) z += std::exp(x - top);
            v -= top + std::log(z);
            if (grad)
                for (size_t a = 0; a < table.size(); ++a)
                    for (const auto& e : table[a]) (*grad)[static_cast<size_t>(e.feature)] -= std::exp(s[a] - top) / z * e.value;
        }
        return v;
    };
    std::vector<double> w(L, 0.0), g(L);
    double step = 1.0;
    for (int it = 0; it < 200000; ++it) {
        const double v = eval(w, &g);
        if (inf_norm(g) < 1e-10) break;
        for (;;) {
            std::vector<double> trial(L);
            for (size_t l = 0; l < L; ++l) trial[l] = w[l] + step * g[l];
            if (eval(trial, nullptr) >= v) {
                w = trial;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
    }
    return w;
}

} // namespace

TEST(ClusterPotentials, ZeroParametersAreUniform) {
    const auto m = abc_model();
    DualParams p{{0, 0}, std::vector<double>(6, 0.0), true, 1};
    const auto pi = cluster_potentials(p, Linearization::zero(m, 1), m);
    for (const auto& c : pi.clusters)
        for (double v : c) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(ClusterPotentials, AbcFormula) {
    const auto m = abc_model();
    std::mt19937_64 rng(1);
    DualParams p{fixtures::random_vector(2, rng, 1), fixtures::random_vector(6, rng, 1), true, 1};
    auto g = random_g(m, 1, rng);
    const auto pi = cluster_potentials(p, g, m);
    // Cluster AB is the source of AB->BC (over B, delta[0..1]) and AB->AC (over A, delta[2..3]).
    std::vector<double> un(4);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const int k = 2 * a + b;
            un[static_cast<size_t>(k)] = std::exp(p.w[0] * (k == 0) + p.w[1] * (k == 3) + p.delta[static_cast<size_t>(b)] +
                                                  p.delta[2 + static_cast<size_t>(a)] - g.g[0][0][static_cast<size_t>(k)]);
        }
    const double z = std::accumulate(un.begin(), un.end(), 0.0);
    for (size_t k = 0; k < 4; ++k) EXPECT_NEAR(pi[0][k], un[k] / z, 1e-15);
    // BC is the target of AB->BC (sign -1 on B) and source of BC->AC (over C, delta[4..5]).
    std::vector<double> bc(4);
    for (int b = 0; b < 2; ++b)
        for (int c = 0; c < 2; ++c) {
            const int k = 2 * b + c;
            bc[static_cast<size_t>(k)] = std::exp(p.w[0] * (k == 0) + p.w[1] * (k == 3) - p.delta[static_cast<size_t>(b)] +
                                                  p.delta[4 + static_cast<size_t>(c)] - g.g[0][1][static_cast<size_t>(k)]);
        }
    const double zb = std::accumulate(bc.begin(), bc.end(), 0.0);
    for (size_t k = 0; k < 4; ++k) EXPECT_NEAR(pi[1][k], bc[k] / zb, 1e-15);
}

TEST(ClusterPotentials, DeltaSigns) {
    const auto m = abc_model();
    DualParams p{{0, 0}, std::vector<double>(6, 0.0), true, 1};
    p.delta[0] = 0.7; // AB->BC at B=0
    const auto pi = cluster_potentials(p, Linearization::zero(m, 1), m);
    EXPECT_GT(pi[0][0] + pi[0][2], 0.5);
    EXPECT_LT(pi[1][0] + pi[1][1], 0.5);
}

TEST(DualValue, AbcAtZero) {
    const auto m = abc_model();
    DualParams p{{0, 0}, std::vector<double>(6, 0.0), true, 1};
    const auto ev = dual_value_and_gradient(p, Linearization::zero(m, 1), m, abc_data());
    EXPECT_NEAR(ev.value, -3 * std::log(4.0), 1e-14);
    EXPECT_NEAR(ev.grad_w[0], 0.25, 1e-15);
    EXPECT_NEAR(ev.grad_w[1], -0.75, 1e-15);
}

TEST(DualValue, DeltaGradientIsNegatedConsistencyResidual) {
    const auto m = abc_model();
    std::mt19937_64 rng(2);
    for (int t = 0; t < 10; ++t) {
        DualParams p{fixtures::random_vector(2, rng, 2), fixtures::random_vector(6, rng, 2), true, 1};
        const auto g = random_g(m, 1, rng);
        const auto ev = dual_value_and_gradient(p, g, m, abc_data());
        const auto r = consistency_residuals(m, cluster_potentials(p, g, m));
        for (size_t k = 0; k < r.size(); ++k) EXPECT_NEAR(ev.grad_delta[k], -r[k], 1e-15);
    }
}

TEST(DualValue, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const auto m = t % 2 ? fixtures::loop_model(4, rng) : fixtures::grid_model(2, rng);
        auto data = fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 1), 6, rng);
        if (t % 3 == 0) data = conditional(data, {0});
        const auto ctx = make_contexts(m, data);
        const std::optional<double> s2 = t % 4 == 1 ? std::optional<double>(3.0) : std::nullopt;
        DualProblem dp(m, ctx, data.size(), random_g(m, ctx.size(), rng), true, s2);
        const auto theta = fixtures::random_vector(dp.dimension(), rng, 1.5);
        std::vector<double> grad(theta.size());
        dp.evaluate(theta, grad);
        std::vector<double> scratch(theta.size());
        const auto fd = fixtures::fd_gradient([&](std::span<const double> x) { return dp.evaluate(x, scratch); }, theta);
        EXPECT_LE(fixtures::relative_error(grad, fd), 1e-4) << "point " << t;
    }
}

TEST(DualValue, ConcaveAlongSegments) {
    std::mt19937_64 rng(4);
    const auto m = fixtures::loop_model(4, rng);
    const auto data = fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 1), 10, rng);
    DualProblem dp(m, make_contexts(m, data), data.size(), random_g(m, 1, rng), true);
    std::vector<double> g(dp.dimension());
    for (int t = 0; t < 10; ++t) {
        const auto a = fixtures::random_vector(dp.dimension(), rng, 3), b = fixtures::random_vector(dp.dimension(), rng, 3);
        std::vector<double> mid(a.size());
        for (size_t k = 0; k < a.size(); ++k) mid[k] = 0.5 * (a[k] + b[k]);
        EXPECT_GE(dp.evaluate(mid, g), 0.5 * (dp.evaluate(a, g) + dp.evaluate(b, g)) - 1e-9);
    }
}

TEST(SolveInner, PiecewiseMatchesIndependentTrainer) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 4; ++t) {
        const auto m = t % 2 ? fixtures::loop_model(4, rng) : fixtures::random_tree_model(5, rng);
        const auto data = fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 1), 40, rng);
        SolverConfig cfg;
        cfg.sigma2 = 5.0;
        cfg.tolerance = 1e-9;
        const auto sol = piecewise_train(m, data, cfg);
        ASSERT_TRUE(sol.diagnostics.converged());
        const auto ref = reference_piecewise(m, data, 5.0);
        for (size_t l = 0; l < ref.size(); ++l) EXPECT_NEAR(sol.params.w[l], ref[l], 1e-6);
    }
}

TEST(SolveInner, PiecewiseFullTablesPinEmpiricalMarginals) {
    // Untied indicator per table entry, no sharing: each pi_i is the data's cluster marginal.
    SynthConfig sc;
    sc.topology = Topology::Loop;
    sc.size = 4;
    sc.tying = Tying::Untied;
    sc.seed = 3;
    const auto s = gen_model(sc);
    const auto data = gen_data(s.model, s.weights, 400, 9);
    SolverConfig cfg;
    cfg.tolerance = 1e-9;
    const auto sol = piecewise_train(s.model, data, cfg);
    const auto ctx = make_contexts(s.model, data);
    EXPECT_LE(fixtures::max_abs_diff(sol.marginals[0], empirical_marginals(s.model, data, ctx[0])), 1e-6);
}

TEST(SolveInner, ZeroIterationBudget) {
    const auto m = abc_model();
    SolverConfig cfg;
    cfg.max_iterations = 0;
    const auto sol = piecewise_train(m, abc_data(), cfg);
    EXPECT_FALSE(sol.diagnostics.converged());
    EXPECT_EQ(sol.params.w, (std::vector<double>{0, 0}));
}

TEST(SolveInner, ResidualsAtConvergence) {
    std::mt19937_64 rng(6);
    for (int t = 0; t < 6; ++t) {
        const auto m = t % 2 ? fixtures::loop_model(3, rng) : fixtures::grid_model(3, rng);
        auto data = fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 1), 30, rng);
        if (t >= 4) data = conditional(data, {0, 1});
        const auto ctx = make_contexts(m, data);
        SolverConfig cfg;
        const auto pw = piecewise_train(m, data, cfg);
        const auto c0 = camel0_train(m, data, cfg);
        ASSERT_TRUE(pw.diagnostics.converged());
        ASSERT_TRUE(c0.diagnostics.converged());
        EXPECT_LE(inf_norm(pooled_moment_residuals(m, ctx, pw.marginals)), 10 * cfg.tolerance);
        EXPECT_LE(inf_norm(pooled_moment_residuals(m, ctx, c0.marginals)), 10 * cfg.tolerance);
        EXPECT_LE(max_consistency_residual(m, c0.marginals), 10 * cfg.tolerance);
        EXPECT_GT(c0.diagnostics.warmup_iterations, 0);
    }
}

TEST(SolveInner, Camel0IsQuickWhenPiecewiseIsConsistent) {
    SynthConfig sc;
    sc.topology = Topology::Chain;
    sc.size = 5;
    sc.tying = Tying::Untied;
    sc.seed = 4;
    const auto s = gen_model(sc);
    const auto data = gen_data(s.model, s.weights, 2000, 1);
    SolverConfig cfg;
    const auto c0 = camel0_train(s.model, data, cfg);
    EXPECT_TRUE(c0.diagnostics.converged());
    EXPECT_LE(c0.diagnostics.iterations, 5);
    EXPECT_LE(inf_norm(c0.params.delta), 1e-3);
}

TEST(SolveInner, WarmStartReachesSameOptimum) {
    std::mt19937_64 rng(7);
    const auto m = fixtures::grid_model(3, rng);
    const auto data = fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 1), 25, rng);
    SolverConfig cfg;
    cfg.sigma2 = 10.0;
    const auto warm = camel0_train(m, data, cfg);
    const auto cold = solve_inner(m, data, Linearization::zero(m, 1), cfg, true);
    EXPECT_LE(fixtures::max_abs_diff(warm.marginals[0], cold.marginals[0]), 2e-4);
}

TEST(SolveInner, StrongDuality) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 6; ++t) {
        const auto m = t % 2 ? fixtures::loop_model(4, rng) : fixtures::random_tree_model(6, rng, 2, true);
        auto data = fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 0.3), 400, rng);
        if (t >= 4) data = conditional(data, {1});
        const auto ctx = make_contexts(m, data);
        // Odd points carry a prior; the even ones rely on non-degenerate moments.
        const std::optional<double> s2 = t % 2 ? std::optional<double>(10.0) : std::nullopt;
        DualProblem dp(m, ctx, data.size(), random_g(m, ctx.size(), rng), true, s2);
        SolverConfig cfg;
        cfg.tolerance = 1e-9;
        const auto sol = solve_inner(dp, cfg);
        ASSERT_TRUE(sol.diagnostics.converged()) << "point " << t;
        const auto theta = dp.pack(sol.params);
        // The minimization-form dual value is the negated maximized dual.
        EXPECT_NEAR(-sol.diagnostics.value, dp.primal_lagrangian(theta, sol.marginals), 1e-9);
        EXPECT_NEAR(-sol.diagnostics.value, dp.primal_value(sol.marginals), 1e-5);
    }
}

TEST(SolveInner, ConditionalDeltaBlocksPerInstance) {
    const auto m = abc_model();
    const auto data = conditional(abc_data(), {0});
    DualProblem dp(m, make_contexts(m, data), data.size(), Linearization::zero(m, 3), true);
    EXPECT_EQ(dp.dimension(), 2u + 3u * 6u);
}

TEST(SolveInner, ThreadCountDoesNotChangeResults) {
    std::mt19937_64 rng(9);
    const auto m = fixtures::grid_model(3, rng);
    const auto data = conditional(fixtures::sample(m, fixtures::random_vector(m.num_features(), rng, 1), 12, rng), {0, 4});
    SolverConfig one, four;
    four.threads = 4;
    const auto a = camel0_train(m, data, one), b = camel0_train(m, data, four);
    EXPECT_EQ(a.params.w, b.params.w);
    EXPECT_EQ(a.params.delta, b.params.delta);
    EXPECT_EQ(a.diagnostics.value, b.diagnostics.value);
}

TEST(SolveInner, NonFiniteFeatureAborts) {
    auto tables = std::vector<FeatureModel::Table>(1, FeatureModel::Table(2));
    tables[0][1] = {{0, std::nan("")}};
    const auto m = make_model({{"A", 2}}, {{0, {0}}}, {}, {"f"}, tables);
    const auto data = fixtures::make_data(m, {{0}, {1}});
    EXPECT_THROW(piecewise_train(m, data, {}), NumericalError);
}

TEST(SolveInner, BoundaryMomentHitsWeightCap) {
    const auto m = abc_model();
    SolverConfig cfg;
    cfg.tolerance = 1e-20;
    cfg.max_iterations = 300;
    const auto sol = piecewise_train(m, abc_data(), cfg);
    EXPECT_EQ(sol.params.w[1], -cfg.weight_cap);
    EXPECT_EQ(sol.diagnostics.capped_features, (std::vector<int>{1}));
}
