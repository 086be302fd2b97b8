// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "vrjp/experiments.hpp"

using namespace vrjp;

namespace {

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

UField uniform_field(const WeightedGraph& g, Rng& rng, double lo, double hi) {
    std::vector<double> f(g.size() - 1);
    for (auto& v : f) v = lo + (hi - lo) * uniform01(rng);
    return UField::from_free(g, f);
}

WeightedGraph reweighted(const WeightedGraph& g, Rng& rng) {
    std::vector<Edge> edges(g.edges().begin(), g.edges().end());
    for (auto& e : edges) e.weight = 0.1 + 3.0 * uniform01(rng);
    return WeightedGraph(g.size(), edges, g.origin(), std::vector<std::optional<Coord>>(g.size()));
}

// Random connected graph: a random spanning tree plus extra edges.
WeightedGraph random_connected(std::size_t n, double extra, Rng& rng) {
    std::vector<Edge> edges;
    for (Vertex v = 1; v < n; ++v) edges.push_back({uniform_index(rng, v), v, 1.0});
    for (Vertex a = 0; a < n; ++a)
        for (Vertex b = a + 1; b < n; ++b) {
            const bool present = std::any_of(edges.begin(), edges.end(), [&](const Edge& e) {
                return (e.a == a && e.b == b) || (e.a == b && e.b == a);
            });
            if (!present && uniform01(rng) < extra) edges.push_back({a, b, 1.0});
        }
    return WeightedGraph(n, edges, 0, std::vector<std::optional<Coord>>(n));
}

Outcome normalization() {
    double worst = 0.0;
    for (double w : {0.5, 1.0, 4.0}) {
        const DensityModel m(build_path(2, w));
        auto f = [&](double x) {
            UField u(m.graph);
            u.set(1, x);
            return std::exp(log_density(m, u));
        };
        boost::math::quadrature::tanh_sinh<double> integrator;
        const double inf = std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(integrator.integrate(f, -inf, inf) - 1.0));
    }
    return {worst <= 1e-8, fmt("max |integral - 1| = %.2e over W in {0.5, 1, 4}", worst)};
}

Outcome matrix_tree() {
    auto rng = make_rng(1001);
    std::vector<WeightedGraph> graphs;
    for (std::size_t n = 2; n <= 6; ++n) {
        graphs.push_back(build_path(n, 1.0));
        graphs.push_back(build_complete(n, 1.0));
        if (n >= 3) graphs.push_back(build_cycle(n, 1.0));
        graphs.push_back(random_connected(n, 0.4, rng));
    }
    double worst = 0.0;
    std::size_t cases = 0;
    for (const auto& g : graphs)
        for (int rep = 0; rep < 20; ++rep) {
            const DensityModel m(reweighted(g, rng));
            const auto u = uniform_field(m.graph, rng, -3.0, 3.0);
            const double trees = spanning_tree_sum(m, u);
            worst = std::max(worst, std::abs(minor_determinant(m, u) - trees) / trees);
            ++cases;
        }
    return {worst <= 1e-10, fmt("max relative error %.2e over %zu (graph, W, u) cases", worst, cases)};
}

Outcome log_convexity() {
    auto rng = make_rng(1002);
    const DensityModel m(build_box_2d(1, 1.0));
    double lowest = std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian_log_minor(m, uniform_field(m.graph, rng, -3, 3)));
        lowest = std::min(lowest, es.eigenvalues().minCoeff());
    }
    return {lowest >= -1e-9, fmt("min Hessian eigenvalue %.3e over 100 fields", lowest)};
}

Outcome ward() {
    bool ok = true;
    std::string detail;
    for (double a : {0.5, 2.0}) {
        McmcConfig cfg;
        cfg.kernel = Kernel::hmc;
        cfg.n_chains = 4;
        cfg.n_samples = 2500;
        cfg.burn_in = 500;
        cfg.thinning = 2;
        cfg.seed = 1004;
        const DensityModel m(build_wired_box(6, a));
        const auto mc = sample_field_mcmc(m, cfg);
        double worst = 0.0;
        for (Coord c : {Coord{1, 0}, Coord{2, 0}, Coord{3, 0}, Coord{4, 2}, Coord{6, 6}}) {
            const auto w = ward_estimate(mc.chains, m.graph.at(c));
            const double z = std::abs(w.mean - 1.0) / w.std_error;
            worst = std::max(worst, z);
            ok = ok && w.reliable && z <= 3.0;
        }
        detail += fmt("a=%.1f: max |mean-1|/SE = %.2f; ", a, worst);
    }
    return {ok, detail + "10^4 samples each"};
}

Outcome tree_vs_mcmc() {
    const DensityModel m(build_path(5, 1.0));
    const TreeSampler tree(m.graph);
    auto rng = make_rng(1005);
    std::vector<UField> exact;
    for (int i = 0; i < 5000; ++i) exact.push_back(tree.sample(rng));
    McmcConfig cfg;
    cfg.seed = 1005;
    cfg.n_samples = 5000;
    cfg.thinning = 20;
    cfg.burn_in = 1000;
    const auto mc = sample_field_mcmc(m, cfg).pooled();
    double lowest = 1.0;
    for (Vertex v = 1; v < 5; ++v) {
        std::vector<double> a, b;
        for (const auto& u : exact) a.push_back(u[v]);
        for (const auto& u : mc) b.push_back(u[v]);
        lowest = std::min(lowest, stats::ks_two_sample(a, b).p_value);
    }
    return {lowest > 0.01, fmt("min KS p-value %.3f over 4 vertices, n = 5000 each", lowest)};
}

Outcome q_identity() {
    const auto s = q_identity_run(build_box_2d(2, 1.0), 20.0, 1000, 1006, 1);
    return {s.worst <= 1e-9, fmt("max |Q - q^2 - 2q| / (1 + Q) = %.2e over %zu resolved pairs", s.worst, s.resolved)};
}

Outcome rwre_exponential() {
    const DensityModel m(build_path(5, 1.0, 2));
    const TreeSampler tree(m.graph);
    auto rng = make_rng(1007);
    const Vertex o = m.graph.origin(), y = 3;
    std::vector<double> t;
    for (int i = 0; i < 2000; ++i) {
        const auto u = tree.sample(rng);
        const auto q = rwre_q_until_jump(m.graph, u, o, y, rng);
        if (!q) return {false, "walk never jumped o -> y"};
        t.push_back(*q * 0.5 * m.graph.weight(o, y) * std::exp(u[y] - u[o]));
    }
    const double d = stats::ks_statistic(t, [](double s) { return 1.0 - std::exp(-s); });
    const double band = stats::dkw_epsilon(t.size(), 0.01);
    return {d <= band, fmt("sup |F_n - Exp(1)| = %.4f, DKW band %.4f, 2000 environments", d, band)};
}

Outcome equivalence() {
    const DensityModel m(build_complete(3, 1.0));
    McmcConfig cfg;
    cfg.seed = 1008;
    cfg.thinning = 10;
    Chain chain(m, cfg, 0);
    chain.burn_in();
    auto rng = make_rng(1008, streams::equivalence);
    const auto r = equivalence_test(m.graph, 3, 20000, [&] { return chain.advance(); }, rng, 400);
    return {r.consistent(), fmt("TV %.4f, null TV %.4f, bootstrap SE %.4f, excess/SE = %.2f", r.tv, r.null_mean,
                                r.bootstrap_se, r.excess() / r.bootstrap_se)};
}

Outcome percolation_tails() {
    const auto t = radius_tail_experiment(20, 1e-3, 10000, 5, 1009);
    std::string detail;
    for (const auto& row : t.rows) detail += fmt("P(r>=%d)=%.4f ", row.k, row.probability);
    return {!t.any_violation(), detail + "(bounds + 3 SE respected)"};
}

Outcome tau_machinery() {
    bool continuous = true;
    for (int d_ox : {16, 60, 64, 100, 400}) {
        const auto tau = build_tau(d_ox, 0.8);
        const double s = std::sqrt(double(d_ox)), q = 0.25 * d_ox;
        continuous = continuous && tau.at_distance(std::nextafter(s, 0.0)) == tau.at_distance(s) &&
                     tau.at_distance(s) == 0.0 && tau.at_distance(std::nextafter(q, 1e9)) == tau.at_distance(q);
    }
    const double lambda = 1.0;
    const auto tau = build_tau(60, lambda);
    const auto& h = tau.ball();
    const int kmax = static_cast<int>(std::sqrt(60.0));
    bool bound = true;
    double worst_ratio = 0.0;
    for (Vertex v = 0; v < h.size(); ++v) {
        const int d = tau.radius(v);
        if (d == 0) continue;
        for (int k = 0; k <= kmax; ++k) {
            const double tp = tau_prime(tau, v, k), cap = 3.0 * lambda * k / d;
            bound = bound && tp <= cap;
            if (k > 0) worst_ratio = std::max(worst_ratio, tp / cap);
        }
    }
    const int l1 = lipschitz_scale(build_tau(64, 0.5), 1.0);
    const int l2 = lipschitz_scale(build_tau(100, 0.25), 2.0);
    const bool lower = l1 >= 8.0 && l2 >= 40.0;
    return {continuous && bound && lower,
            fmt("continuity %s; max tau'/(3 lambda k/d) = %.3f on radius 30; L = %d (>= 8), %d (>= 40)",
                continuous ? "exact" : "broken", worst_ratio, l1, l2)};
}

Outcome decay() {
    DecayParams p;
    p.L = 24;
    p.distances = {2, 4, 8, 16};
    p.batches = 20;
    p.mcmc.kernel = Kernel::hmc;
    p.mcmc.n_chains = 4;
    p.mcmc.n_samples = 5000;
    p.mcmc.burn_in = 500;
    p.mcmc.seed = 1011;
    const DensityModel m(build_wired_box(p.L, 4.0));
    const auto mc = sample_field_mcmc(m, p.mcmc);
    const auto [points, fit] = decay_estimates(mc.chains, m.graph, p);
    std::string detail;
    for (const auto& pt : points) detail += fmt("d=%d: %.4f(%.4f) ", pt.d, pt.mean, pt.std_error);
    return {fit.monotone && fit.upper95 < 0.0,
            detail + fmt("slope %.4f, 95%% upper %.4f, %s", fit.slope, fit.upper95,
                         fit.monotone ? "nonincreasing" : "not monotone")};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"normalization", normalization},
        {"matrix-tree", matrix_tree},
        {"log-convexity", log_convexity},
        {"ward identity", ward},
        {"tree sampler vs MCMC", tree_vs_mcmc},
        {"Q identity", q_identity},
        {"RWRE exponential law", rwre_exponential},
        {"picture equivalence", equivalence},
        {"percolation tails", percolation_tails},
        {"tau machinery", tau_machinery},
        {"decay trend", decay},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %2zu %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
        failures += !o.pass;
    }
    std::printf("%d of %zu criteria failed\n", failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
