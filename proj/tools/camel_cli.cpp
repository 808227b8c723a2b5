#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "camel/camel.hpp"

using namespace camel;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kNotConverged = 2, kCheckFailed = 3 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Inference { Lbp, Exact };

struct CommonOptions {
    std::string model_path, data_path;
    double lbp_threshold = 1e-10;
    std::size_t lbp_max_updates = 1'000'000;
    double cap = kDefaultJointCap;
    std::string report = "pretty";
};

struct TrainOptions {
    CommonOptions common;
    std::string method = "cccp";
    std::string init = "zero";
    std::string linearization = "source";
    double sigma2 = 0.0;
    double tol = 1e-6;
    double outer_tol = 1e-4;
    int max_outer = 50;
    int max_inner = 1000;
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out, trace, eval_data;
    std::string inference = "lbp";
};

struct EvalOptions {
    CommonOptions common;
    std::string params_path;
    std::string inference = "lbp";
};

struct CheckOptions {
    CommonOptions common;
    double sigma2 = 1.0;
    std::uint64_t seed = 0;
    int points = 5;
};

struct GenModelOptions {
    std::string topology = "chain", tying = "untied", out, weights_out;
    int size = 5, cardinality = 2;
    double coupling = 1.0, field = 0.5, observation_strength = 1.0;
    bool observations = false;
    std::uint64_t seed = 0;
    double cap = kDefaultJointCap;
};

struct GenDataOptions {
    std::string model_path, params_path, out;
    std::size_t samples = 100;
    std::uint64_t seed = 0;
    bool conditional = false;
    double cap = kDefaultJointCap;
};

std::optional<double> prior(double sigma2) { return sigma2 > 0 ? std::optional<double>(sigma2) : std::nullopt; }

Inference parse_inference(const std::string& s) { return s == "exact" ? Inference::Exact : Inference::Lbp; }

LbpConfig lbp_config(const CommonOptions& o) {
    LbpConfig c;
    c.threshold = o.lbp_threshold;
    c.max_updates = o.lbp_max_updates;
    return c;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot write " + path);
    f << text;
}

std::string format(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

/// Beliefs for every context under weights w.
std::vector<PseudoMarginals> infer(const Model& model, std::span<const double> w, const std::vector<Context>& contexts,
                                   Inference how, const CommonOptions& o, std::size_t* unconverged = nullptr) {
    std::vector<PseudoMarginals> out;
    for (const auto& ctx : contexts) {
        if (how == Inference::Exact) {
            out.push_back(exact_marginals(model, w, ctx.evidence, o.cap));
        } else {
            auto r = lbp_infer(model, w, ctx.evidence, nullptr, lbp_config(o));
            if (unconverged && !r.converged) ++*unconverged;
            out.push_back(std::move(r.beliefs));
        }
    }
    return out;
}

/// Max-belief predictions for each instance of data.
AccuracyReport evaluate(const Model& model, std::span<const double> w, const Dataset& data, Inference how,
                        const CommonOptions& o, std::size_t* unconverged = nullptr) {
    const auto contexts = make_contexts(model, data);
    const auto pis = infer(model, w, contexts, how, o, unconverged);
    std::vector<Assignment> pred;
    for (std::size_t m = 0; m < data.size(); ++m) pred.push_back(predict(model, pis[contexts.size() == 1 ? 0 : m]));
    return score_predictions(model, data, pred);
}

void print_accuracy(std::ostream& os, const Model& model, const AccuracyReport& r, bool tsv) {
    if (tsv) {
        os << "variable\ttype\taccuracy\n";
        for (std::size_t v = 0; v < model.space.size(); ++v)
            if (!std::isnan(r.per_variable[v])) os << model.space[v].name << '\t' << model.space[v].type << '\t' << format(r.per_variable[v]) << '\n';
        for (const auto& [type, acc] : r.per_type) os << "type:" << type << "\t\t" << format(acc) << '\n';
        os << "macro\t\t" << format(r.macro) << "\nmicro\t\t" << format(r.micro) << '\n';
        return;
    }
    for (std::size_t v = 0; v < model.space.size(); ++v)
        if (!std::isnan(r.per_variable[v])) os << "  " << model.space[v].name << ": " << format(r.per_variable[v]) << '\n';
    for (const auto& [type, acc] : r.per_type) os << "  type " << (type.empty() ? "(none)" : type) << ": " << format(acc) << '\n';
    os << "macro accuracy: " << format(r.macro) << "\nmicro accuracy: " << format(r.micro) << '\n';
}

struct RunReport {
    std::string method;
    int outer_loops = 0;
    std::vector<int> inner_iterations;
    double wall_seconds = 0.0;
    double objective = 0.0;
    double max_moment_residual = 0.0;
    double max_consistency_residual = 0.0;
    double macro = 0.0, micro = 0.0;
    bool converged = false;
    std::size_t lbp_unconverged = 0;
};

void print_report(std::ostream& os, const RunReport& r, bool tsv) {
    std::string inner;
    for (std::size_t k = 0; k < r.inner_iterations.size(); ++k) inner += (k ? "," : "") + std::to_string(r.inner_iterations[k]);
    if (tsv) {
        os << "method\touter_loops\tinner_iterations\twall_seconds\tobjective\tmax_moment_residual\t"
              "max_consistency_residual\tmacro_accuracy\tmicro_accuracy\tconverged\tlbp_unconverged\n";
        os << r.method << '\t' << r.outer_loops << '\t' << inner << '\t' << format(r.wall_seconds) << '\t' << format(r.objective)
           << '\t' << format(r.max_moment_residual) << '\t' << format(r.max_consistency_residual) << '\t' << format(r.macro)
           << '\t' << format(r.micro) << '\t' << (r.converged ? "yes" : "no") << '\t' << r.lbp_unconverged << '\n';
        return;
    }
    os << "method:                   " << r.method << '\n'
       << "outer loops:              " << r.outer_loops << '\n'
       << "inner iterations:         " << inner << '\n'
       << "wall time (s):            " << format(r.wall_seconds) << '\n'
       << "objective:                " << format(r.objective) << '\n'
       << "max moment residual:      " << format(r.max_moment_residual) << '\n'
       << "max consistency residual: " << format(r.max_consistency_residual) << '\n'
       << "macro accuracy:           " << format(r.macro) << '\n'
       << "micro accuracy:           " << format(r.micro) << '\n'
       << "converged:                " << (r.converged ? "yes" : "no") << '\n';
    if (r.lbp_unconverged) os << "unconverged LBP runs:     " << r.lbp_unconverged << '\n';
}

int cmd_train(const TrainOptions& o) {
    const auto model = load_model(o.common.model_path);
    const auto data = load_data(o.common.data_path, model.space);
    if (!model.features.all_finite()) throw UsageError("feature table contains non-finite values");
    const auto contexts = make_contexts(model, data);
    const auto start = std::chrono::steady_clock::now();

    SolverConfig sc;
    sc.tolerance = o.tol;
    sc.max_iterations = o.max_inner;
    sc.sigma2 = prior(o.sigma2);
    sc.threads = o.threads;

    RunReport rep;
    rep.method = o.method;
    ParameterSet ps;
    ps.method = o.method;
    std::vector<CccpTraceEntry> trace;
    if (o.method == "piecewise" || o.method == "camel0") {
        const auto sol = o.method == "piecewise" ? piecewise_train(model, data, sc) : camel0_train(model, data, sc);
        ps.params = sol.params;
        rep.outer_loops = 1;
        rep.inner_iterations = {sol.diagnostics.iterations};
        rep.converged = sol.diagnostics.converged();
    } else if (o.method == "cccp") {
        CccpConfig cc;
        cc.inner = sc;
        cc.tolerance = o.outer_tol;
        cc.max_outer = o.max_outer;
        cc.style = o.linearization == "split" ? LinearizationStyle::SplitHalf : LinearizationStyle::SourceOnly;
        cc.init = o.init == "empirical" ? InitMode::Empirical : InitMode::Zero;
        const auto r = cccp_train(model, data, cc);
        ps.params = r.solution.params;
        ps.g = r.g;
        trace = r.trace;
        rep.outer_loops = static_cast<int>(r.trace.size());
        for (const auto& e : r.trace) rep.inner_iterations.push_back(e.inner_iterations);
        rep.converged = r.converged;
    } else if (o.method == "lbp-ml") {
        const auto r = lbp_ml_train(model, data, sc, lbp_config(o.common));
        ps.params = DualParams{r.weights, {}, false, 0};
        rep.outer_loops = 1;
        rep.inner_iterations = {r.iterations};
        rep.lbp_unconverged = r.nonconverged_evaluations();
        rep.converged = r.converged() && rep.lbp_unconverged == 0;
    } else if (o.method == "exact-ml") {
        ExactMlConfig ec;
        ec.sigma2 = sc.sigma2;
        ec.tolerance = o.tol;
        ec.max_iterations = o.max_inner;
        ec.cap = o.common.cap;
        const auto r = exact_ml_train(model, data, ec);
        ps.params = DualParams{r.weights, {}, false, 0};
        rep.outer_loops = 1;
        rep.inner_iterations = {r.iterations};
        rep.converged = r.converged();
    } else {
        throw UsageError("unknown method " + o.method);
    }
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    // Everything below is recomputed from the saved text, not from solver state.
    std::ostringstream text;
    serialize_parameters(text, ps, model);
    if (!o.out.empty()) write_file(o.out, text.str());
    std::istringstream back(text.str());
    const auto saved = parse_parameters(back, model);

    std::vector<PseudoMarginals> pis;
    const auto& w = saved.params.w;
    if (o.method == "lbp-ml" || o.method == "exact-ml") {
        pis = infer(model, w, contexts, o.method == "lbp-ml" ? Inference::Lbp : Inference::Exact, o.common);
        if (o.method == "exact-ml") {
            rep.objective = exact_log_likelihood(model, contexts, data.size(), w, std::nullopt, {}, o.common.cap);
        } else {
            for (std::size_t c = 0; c < contexts.size(); ++c)
                rep.objective += contexts[c].weight * (dot(w, contexts[c].empirical) + bethe_free_energy(model, w, pis[c]));
        }
    } else {
        const auto g = saved.g ? *saved.g : Linearization::zero(model, contexts.size());
        pis = cluster_potentials(saved.params, g, model, contexts);
        for (std::size_t c = 0; c < contexts.size(); ++c)
            rep.objective += contexts[c].weight *
                             (o.method == "piecewise" ? piecewise_objective(pis[c]) : camel_objective(model, pis[c]));
    }
    rep.max_moment_residual = inf_norm(pooled_moment_residuals(model, contexts, pis));
    rep.max_consistency_residual = max_consistency_residual(model, pis);

    const auto eval_set = o.eval_data.empty() ? data : load_data(o.eval_data, model.space);
    std::size_t unconverged = 0;
    const auto acc = evaluate(model, w, eval_set, parse_inference(o.inference), o.common, &unconverged);
    rep.macro = acc.macro;
    rep.micro = acc.micro;

    if (!o.trace.empty()) {
        std::ostringstream t;
        write_trace(t, trace);
        write_file(o.trace, t.str());
    }
    print_report(std::cout, rep, o.common.report == "tsv");
    if (!rep.converged) std::cerr << "warning: " << o.method << " did not converge\n";
    return rep.converged ? kOk : kNotConverged;
}

int cmd_eval(const EvalOptions& o) {
    const auto model = load_model(o.common.model_path);
    const auto ps = load_parameters(o.params_path, model);
    const auto data = load_data(o.common.data_path, model.space);
    std::size_t unconverged = 0;
    const auto r = evaluate(model, ps.params.w, data, parse_inference(o.inference), o.common, &unconverged);
    print_accuracy(std::cout, model, r, o.common.report == "tsv");
    if (unconverged) std::cerr << "warning: LBP did not converge on " << unconverged << " context(s)\n";
    return kOk;
}

struct CheckLine {
    std::string name;
    enum { Pass, Fail, Skip } status;
    std::string detail;
};

double fd_relative_error(const std::function<double(std::span<const double>, std::span<double>)>& f,
                         std::vector<double> x) {
    std::vector<double> g(x.size()), scratch(x.size());
    f(x, g);
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double x0 = x[k];
        x[k] = x0 + h;
        const double up = f(x, scratch);
        x[k] = x0 - h;
        const double down = f(x, scratch);
        x[k] = x0;
        const double fd = (up - down) / (2 * h);
        worst = std::max(worst, std::abs(g[k] - fd) / std::max(1.0, std::abs(fd)));
    }
    return worst;
}

std::vector<CheckLine> run_checks(const Model& model, const Dataset& data, const CheckOptions& o) {
    std::vector<CheckLine> out;
    const bool finite = model.features.all_finite();
    out.push_back({"features_finite", finite ? CheckLine::Pass : CheckLine::Fail,
                   finite ? "" : "feature table contains non-finite values"});
    if (!finite) {
        for (const char* name : {"dual_gradient", "exact_ml_gradient", "tree_exactness", "duality_gap", "cccp_monotone"})
            out.push_back({name, CheckLine::Skip, "features not finite"});
        return out;
    }
    std::mt19937_64 rng(o.seed);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53; };
    auto random_point = [&](std::size_t n, double scale) {
        std::vector<double> x(n);
        for (double& v : x) v = uniform(-scale, scale);
        return x;
    };
    const auto contexts = make_contexts(model, data);
    const std::size_t L = model.num_features();

    {
        const auto g = relinearize(model, std::vector<PseudoMarginals>(contexts.size(), uniform_marginals(model)),
                                   LinearizationStyle::SourceOnly);
        DualProblem dp(model, contexts, data.size(), g, true, prior(o.sigma2));
        auto f = [&](std::span<const double> th, std::span<double> gr) { return dp.evaluate(th, gr); };
        double worst = 0.0;
        for (int p = 0; p < o.points; ++p) worst = std::max(worst, fd_relative_error(f, random_point(dp.dimension(), 1.0)));
        out.push_back({"dual_gradient", worst <= 1e-4 ? CheckLine::Pass : CheckLine::Fail, "max relative error " + format(worst)});
    }
    {
        auto f = [&](std::span<const double> w, std::span<double> gr) {
            return exact_log_likelihood(model, contexts, data.size(), w, prior(o.sigma2), gr, o.common.cap);
        };
        double worst = 0.0;
        for (int p = 0; p < o.points; ++p) worst = std::max(worst, fd_relative_error(f, random_point(L, 1.0)));
        out.push_back({"exact_ml_gradient", worst <= 1e-4 ? CheckLine::Pass : CheckLine::Fail, "max relative error " + format(worst)});
    }
    if (model.graph.is_tree()) {
        double entropy_err = 0.0, lbp_err = 0.0;
        LbpConfig lc;
        lc.threshold = 1e-12;
        for (int p = 0; p < o.points; ++p) {
            const auto w = random_point(L, 1.0);
            const auto exact = exact_marginals(model, w, o.common.cap);
            entropy_err = std::max(entropy_err, std::abs(bethe_entropy(model, exact) - exact_entropy(exact_joint(model, w, o.common.cap))));
            const auto b = lbp_infer(model, w, nullptr, lc).beliefs;
            for (std::size_t i = 0; i < b.size(); ++i)
                for (std::size_t a = 0; a < b[i].size(); ++a) lbp_err = std::max(lbp_err, std::abs(b[i][a] - exact[i][a]));
        }
        const bool ok = entropy_err <= 1e-9 && lbp_err <= 1e-8;
        out.push_back({"tree_exactness", ok ? CheckLine::Pass : CheckLine::Fail,
                       "entropy error " + format(entropy_err) + ", LBP error " + format(lbp_err)});
    } else {
        out.push_back({"tree_exactness", CheckLine::Skip, "cluster graph has loops"});
    }
    {
        DualProblem dp(model, contexts, data.size(), Linearization::zero(model, contexts.size()), true, prior(o.sigma2));
        SolverConfig sc;
        sc.tolerance = 1e-9;
        sc.max_iterations = 5000;
        const auto sol = solve_inner(dp, sc);
        const double lag = std::abs(-sol.diagnostics.value - dp.primal_lagrangian(dp.pack(sol.params), sol.marginals));
        const double primal = std::abs(-sol.diagnostics.value - dp.primal_value(sol.marginals));
        const double gap = std::max(lag, primal);
        out.push_back({"duality_gap", sol.diagnostics.converged() && gap <= 1e-5 ? CheckLine::Pass : CheckLine::Fail,
                       "gap " + format(gap) + (sol.diagnostics.converged() ? "" : " (solver did not converge)")});
    }
    {
        CccpConfig cc;
        cc.inner.tolerance = 1e-9;
        cc.inner.sigma2 = prior(o.sigma2);
        cc.max_outer = 15;
        const auto r = cccp_train(model, data, cc);
        double worst_drop = 0.0;
        for (std::size_t k = 1; k < r.trace.size(); ++k) worst_drop = std::max(worst_drop, r.trace[k - 1].objective - r.trace[k].objective);
        const bool ok = r.converged && worst_drop <= 1e-7;
        out.push_back({"cccp_monotone", ok ? CheckLine::Pass : CheckLine::Fail,
                       std::to_string(r.trace.size()) + " outer loops, largest decrease " + format(worst_drop) +
                           (r.converged ? "" : " (did not converge)")});
    }
    return out;
}

int cmd_check(const CheckOptions& o) {
    const auto model = load_model(o.common.model_path);
    const auto data = load_data(o.common.data_path, model.space);
    double log_size = 0.0;
    for (std::size_t v = 0; v < model.space.size(); ++v) log_size += std::log(static_cast<double>(model.space.cardinality(v)));
    if (log_size > std::log(o.common.cap)) throw UsageError("joint space exceeds the cap; check needs exact inference");
    const auto lines = run_checks(model, data, o);
    bool ok = true;
    for (const auto& l : lines) {
        const char* tag = l.status == CheckLine::Pass ? "PASS" : l.status == CheckLine::Fail ? "FAIL" : "SKIP";
        ok = ok && l.status != CheckLine::Fail;
        std::cout << tag << ' ' << l.name << (l.detail.empty() ? "" : ": " + l.detail) << '\n';
    }
    return ok ? kOk : kCheckFailed;
}

int cmd_gen_model(const GenModelOptions& o) {
    SynthConfig c;
    const std::map<std::string, Topology> topo{{"chain", Topology::Chain}, {"star", Topology::Star}, {"loop", Topology::Loop}, {"grid", Topology::Grid}};
    c.topology = topo.at(o.topology);
    c.size = o.size;
    c.cardinality = o.cardinality;
    c.tying = o.tying == "tied" ? Tying::PairwiseTied : Tying::Untied;
    c.coupling = o.coupling;
    c.field = o.field;
    c.observations = o.observations;
    c.observation_strength = o.observation_strength;
    c.seed = o.seed;
    c.cap = o.cap;
    const auto s = gen_model(c);
    const auto text = serialize_model(s.model);
    if (o.out.empty()) std::cout << text;
    else write_file(o.out, text);
    if (!o.weights_out.empty()) {
        std::ostringstream w;
        serialize_parameters(w, ParameterSet{"truth", DualParams{s.weights, {}, false, 0}, std::nullopt}, s.model);
        write_file(o.weights_out, w.str());
    }
    return kOk;
}

int cmd_gen_data(const GenDataOptions& o) {
    const auto model = load_model(o.model_path);
    const auto ps = load_parameters(o.params_path, model);
    std::vector<int> observed;
    if (o.conditional)
        for (std::size_t v = 0; v < model.space.size(); ++v)
            if (model.space[v].type == "observed") observed.push_back(static_cast<int>(v));
    if (o.conditional && observed.empty()) throw UsageError("--conditional needs variables of type 'observed'");
    const auto data = gen_data(model, ps.params.w, o.samples, o.seed, observed, o.cap);
    std::ostringstream text;
    serialize_data(text, data, model.space);
    if (o.out.empty()) std::cout << text.str();
    else write_file(o.out, text.str());
    return kOk;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool needs_data = true) {
    cmd->add_option("--model", o.model_path, "Model file (YAML)")->required()->check(CLI::ExistingFile);
    if (needs_data) cmd->add_option("--data", o.data_path, "Data file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--lbp-threshold", o.lbp_threshold, "LBP message convergence threshold")->capture_default_str();
    cmd->add_option("--lbp-max-updates", o.lbp_max_updates, "LBP message update budget")->capture_default_str();
    cmd->add_option("--cap", o.cap, "Joint-space cap for exact inference")->capture_default_str();
    cmd->add_option("--report", o.report, "Report format")->check(CLI::IsMember({"tsv", "pretty"}))->capture_default_str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Train and evaluate log-linear models with CAMEL, piecewise, LBP and exact likelihood"};
    app.require_subcommand(1);

    TrainOptions train;
    auto* t = app.add_subcommand("train", "Train parameters and print a run report");
    add_common(t, train.common);
    t->add_option("--method", train.method)->check(CLI::IsMember({"piecewise", "camel0", "cccp", "lbp-ml", "exact-ml"}))->capture_default_str();
    t->add_option("--init", train.init, "CCCP initialization")->check(CLI::IsMember({"zero", "empirical"}))->capture_default_str();
    t->add_option("--linearization", train.linearization)->check(CLI::IsMember({"source", "split"}))->capture_default_str();
    t->add_option("--sigma2", train.sigma2, "Gaussian prior variance; 0 disables the prior")->check(CLI::NonNegativeNumber)->capture_default_str();
    t->add_option("--tol", train.tol, "Inner solver gradient tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--outer-tol", train.outer_tol, "CCCP linearization change tolerance")->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--max-outer", train.max_outer)->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--max-inner", train.max_inner)->check(CLI::NonNegativeNumber)->capture_default_str();
    t->add_option("--seed", train.seed, "Seed for randomized steps (training itself is deterministic)")->capture_default_str();
    t->add_option("--threads", train.threads)->check(CLI::PositiveNumber)->capture_default_str();
    t->add_option("--out", train.out, "Parameter file to write");
    t->add_option("--trace", train.trace, "CCCP per-iteration trace (TSV)");
    t->add_option("--eval-data", train.eval_data, "Held-out data for the accuracy columns")->check(CLI::ExistingFile);
    t->add_option("--inference", train.inference, "Inference for the accuracy columns")->check(CLI::IsMember({"lbp", "exact"}))->capture_default_str();

    EvalOptions ev;
    auto* e = app.add_subcommand("eval", "Predict with max beliefs and report accuracy");
    add_common(e, ev.common);
    e->add_option("--params", ev.params_path)->required()->check(CLI::ExistingFile);
    e->add_option("--inference", ev.inference)->check(CLI::IsMember({"lbp", "exact"}))->capture_default_str();

    CheckOptions ck;
    auto* c = app.add_subcommand("check", "Run the invariant battery against exact inference");
    add_common(c, ck.common);
    c->add_option("--sigma2", ck.sigma2, "Prior variance used by the solver checks; 0 disables")->capture_default_str();
    c->add_option("--seed", ck.seed)->capture_default_str();
    c->add_option("--points", ck.points, "Random points per gradient check")->check(CLI::PositiveNumber)->capture_default_str();

    GenModelOptions gm;
    auto* g = app.add_subcommand("gen-model", "Generate a synthetic pairwise model");
    g->add_option("--topology", gm.topology)->check(CLI::IsMember({"chain", "star", "loop", "grid"}))->capture_default_str();
    g->add_option("--size", gm.size, "Nodes, or side length for grids")->capture_default_str();
    g->add_option("--cardinality", gm.cardinality)->capture_default_str();
    g->add_option("--tying", gm.tying)->check(CLI::IsMember({"untied", "tied"}))->capture_default_str();
    g->add_option("--coupling", gm.coupling)->capture_default_str();
    g->add_option("--field", gm.field)->capture_default_str();
    g->add_flag("--observations", gm.observations, "Add a noisy observed child per node");
    g->add_option("--observation-strength", gm.observation_strength)->capture_default_str();
    g->add_option("--seed", gm.seed)->capture_default_str();
    g->add_option("--cap", gm.cap)->capture_default_str();
    g->add_option("--out", gm.out, "Model file (stdout if omitted)");
    g->add_option("--weights-out", gm.weights_out, "Parameter file holding the true weights");

    GenDataOptions gd;
    auto* d = app.add_subcommand("gen-data", "Sample data exactly from a model");
    d->add_option("--model", gd.model_path)->required()->check(CLI::ExistingFile);
    d->add_option("--params", gd.params_path, "Parameter file with the weights")->required()->check(CLI::ExistingFile);
    d->add_option("--samples", gd.samples)->capture_default_str();
    d->add_option("--seed", gd.seed)->capture_default_str();
    d->add_flag("--conditional", gd.conditional, "Mark variables of type 'observed' as observed");
    d->add_option("--cap", gd.cap)->capture_default_str();
    d->add_option("--out", gd.out, "Data file (stdout if omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        app.exit(err);
        return kUsage;
    }

    try {
        if (*t) return cmd_train(train);
        if (*e) return cmd_eval(ev);
        if (*c) return cmd_check(ck);
        if (*g) return cmd_gen_model(gm);
        if (*d) return cmd_gen_data(gd);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return kUsage;
    }
    return kUsage;
}
