#include <gtest/gtest.h>

#include <cmath>
#include <queue>
#include <sstream>

#include "vrjp/perturbation.hpp"
#include "vrjp/rng.hpp"
#include "vrjp/rwre.hpp"
#include "vrjp/sampler.hpp"

using namespace vrjp;

TEST(Tau, RejectsBadParameters) {
    EXPECT_THROW(build_tau(3, 1.0), std::invalid_argument);
    EXPECT_THROW(build_tau(16, 0.0), std::invalid_argument);
}

TEST(Tau, ThreeRegimes) {
    const auto tau = build_tau(100, 1.0);
    EXPECT_EQ(tau.at_distance(0), 0.0);
    EXPECT_EQ(tau.at_distance(9), 0.0);
    EXPECT_EQ(tau.at_distance(10), 0.0);
    EXPECT_NEAR(tau.at_distance(20), std::log(2.0), 1e-15);
    EXPECT_NEAR(tau.at_distance(40), std::log(2.5), 1e-15);
    EXPECT_NEAR(tau.at_distance(25), tau.middle_branch(25), 1e-15);
    EXPECT_NEAR(tau.outer_branch(), std::log(2.5), 1e-15);
}

TEST(Tau, ContinuousAtBothBoundaries) {
    for (int d_ox : {16, 64, 100, 101, 400}) {
        const auto tau = build_tau(d_ox, 0.7);
        const double s = std::sqrt(double(d_ox)), q = 0.25 * d_ox;
        EXPECT_EQ(tau.at_distance(s), tau.inner_branch(s));
        EXPECT_EQ(tau.at_distance(std::nextafter(s, 0.0)), tau.at_distance(s));
        EXPECT_EQ(tau.at_distance(q), tau.at_distance(std::nextafter(q, 1e9)));
        EXPECT_NEAR(tau.at_distance(q), tau.outer_branch(), 1e-14);
    }
}

TEST(Tau, SmallDistanceParametersStayAtZero) {
    const auto tau = build_tau(8, 1.0);
    for (double v : tau.values()) EXPECT_EQ(v, 0.0);
}

TEST(Tau, NonnegativeMonotoneAndFlatOutside) {
    const auto tau = build_tau(144, 0.5);
    const auto& h = tau.ball();
    EXPECT_EQ(tau[h.origin()], 0.0);
    for (Vertex v = 0; v < h.size(); ++v) {
        EXPECT_GE(tau[v], 0.0);
        if (tau.radius(v) >= 36) EXPECT_EQ(tau[v], tau.at_distance(36));
    }
    for (int d = 0; d < 72; ++d) EXPECT_LE(tau.at_distance(d), tau.at_distance(d + 1));
}

TEST(Tau, NearestNeighbourIncrementsAreSmall) {
    for (auto [d_ox, lambda] : {std::pair{64, 0.5}, {100, 0.25}, {61, 1.0}}) {
        const auto tau = build_tau(d_ox, lambda);
        const auto& h = tau.ball();
        double worst = 0.0;
        for (const auto& e : h.edges()) worst = std::max(worst, std::abs(tau[e.a] - tau[e.b]));
        EXPECT_LE(worst, lambda / std::sqrt(double(d_ox)) + 1e-15);
    }
}

TEST(TauPrime, ZeroCases) {
    const auto tau = build_tau(100, 1.0);
    const auto& h = tau.ball();
    for (Vertex v = 0; v < h.size(); ++v) {
        EXPECT_EQ(tau_prime(tau, v, 0), 0.0);
        for (int k = 0; tau.radius(v) + k < 10; ++k) EXPECT_EQ(tau_prime(tau, v, k), 0.0);
    }
    EXPECT_THROW(tau_prime(tau, 0, -1), std::invalid_argument);
}

// Brute force over all w in the ball.
TEST(TauPrime, MatchesPairScan) {
    const auto tau = build_tau(40, 1.3);
    const auto& h = tau.ball();
    for (Vertex v = 0; v < h.size(); v += 7)
        for (int k : {1, 3, 6}) {
            double best = 0.0;
            for (Vertex w = 0; w < h.size(); ++w)
                if (l1_distance(*h.coord(v), *h.coord(w)) <= k) best = std::max(best, tau[v] - tau[w]);
            EXPECT_EQ(tau_prime(tau, v, k), best);
        }
}

TEST(TauPrime, LongRangeBoundOnRadiusThirtyBall) {
    const double lambda = 1.0;
    const auto tau = build_tau(60, lambda);
    const auto& h = tau.ball();
    const int kmax = static_cast<int>(std::sqrt(60.0));
    for (Vertex v = 0; v < h.size(); ++v) {
        const int d = tau.radius(v);
        if (d == 0) continue;
        for (int k = 0; k <= kmax; ++k) EXPECT_LE(tau_prime(tau, v, k), 3.0 * lambda * k / d);
    }
}

TEST(LipschitzScale, LowerBound) {
    for (auto [d_ox, lambda, K] : {std::tuple{64, 0.5, 1.0}, {100, 0.25, 2.0}}) {
        const auto tau = build_tau(d_ox, lambda);
        EXPECT_GE(lipschitz_scale(tau, K), K / (2 * lambda) * std::sqrt(double(d_ox)));
    }
}

TEST(LipschitzScale, ConstantTauNeverViolates) {
    const auto flat = build_tau(12, 1.0);
    EXPECT_EQ(lipschitz_scale(flat, 0.1), 2 * 6 + 1);
    const auto tau = build_tau(64, 0.5);
    const double top = tau.at_distance(64);
    EXPECT_EQ(lipschitz_scale(tau, 2 * top + 0.01), 64 + 1);
}

TEST(LipschitzScale, AgreesWithDirectDefinition) {
    const auto tau = build_tau(36, 1.0);
    const double K = 0.3;
    const int L = lipschitz_scale(tau, K);
    const auto& h = tau.ball();
    bool violation_at_L = false;
    for (Vertex v = 0; v < h.size(); ++v)
        for (Vertex w = 0; w < h.size(); ++w) {
            const int d = l1_distance(*h.coord(v), *h.coord(w));
            if (d < L) EXPECT_LE(std::abs(tau[v] - tau[w]), 0.5 * K);
            if (d == L && std::abs(tau[v] - tau[w]) > 0.5 * K) violation_at_L = true;
        }
    EXPECT_TRUE(violation_at_L);
}

TEST(ComponentStats, FlatFieldHasNoComponents) {
    const auto h = build_diamond(4);
    const std::vector<double> phi(h.size(), 0.0);
    const auto s = component_stats(h, phi, 1.0);
    EXPECT_TRUE(s.ec_edges.empty());
    EXPECT_EQ(s.m, 0);
    for (int r : s.r) EXPECT_EQ(r, 0);
}

// A step between columns x=1 and x=2 makes each crossing edge its own
// component.
TEST(ComponentStats, SingleViolatingEdges) {
    const auto h = build_diamond(3);
    std::vector<double> phi(h.size(), 0.0);
    for (Vertex z = 0; z < h.size(); ++z) phi[z] = h.coord(z)->x >= 2 ? 5.0 : 0.0;
    const auto s = component_stats(h, phi, 1.0);
    EXPECT_EQ(s.ec_edges.size(), 3u);
    EXPECT_EQ(s.m, 1);
    EXPECT_EQ(s.r[h.at({1, 0})], 1);
    EXPECT_EQ(s.r[h.at({2, 0})], 1);
    EXPECT_EQ(s.r[h.at({0, 0})], 0);
    EXPECT_EQ(s.ec_degree[h.at({1, 1})], 1);
}

TEST(ComponentStats, MaxRadiusEqualsMaxPairDistance) {
    const auto h = build_diamond(4);
    auto rng = make_rng(95);
    const auto n = h.size();
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> phi(n);
        for (auto& v : phi) v = standard_normal(rng);
        const auto s = component_stats(h, phi, 1.0);
        // BFS over EC edges, then graph distance on H between connected pairs.
        std::vector<std::vector<Vertex>> adj(n);
        for (auto i : s.ec_edges) {
            adj[h.edge(i).a].push_back(h.edge(i).b);
            adj[h.edge(i).b].push_back(h.edge(i).a);
        }
        int m = 0;
        for (Vertex v = 0; v < n; ++v) {
            const auto dist = h.distances_from(v);
            std::vector<char> seen(n, 0);
            std::queue<Vertex> q;
            q.push(v);
            seen[v] = 1;
            int r = 0;
            while (!q.empty()) {
                const Vertex x = q.front();
                q.pop();
                r = std::max(r, dist[x]);
                for (Vertex y : adj[x])
                    if (!seen[y]) {
                        seen[y] = 1;
                        q.push(y);
                    }
            }
            ASSERT_EQ(s.r[v], r);
            m = std::max(m, r);
        }
        ASSERT_EQ(s.m, m);
    }
}

TEST(ComponentStats, RejectsBadInput) {
    const auto h = build_diamond(2);
    EXPECT_THROW(component_stats(h, std::vector<double>(3), 1.0), std::invalid_argument);
    EXPECT_THROW(component_stats(h, std::vector<double>(h.size()), 0.0), std::invalid_argument);
}

TEST(ComponentStats, CsvDump) {
    const auto tau = build_tau(16, 1.0);
    const auto s = component_stats(tau.ball(), tau.values(), 0.01);
    std::ostringstream os;
    write_perturbation_csv(os, tau, s);
    const auto text = os.str();
    EXPECT_EQ(text.rfind("vertex,x,y,tau,r,ec_degree\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), static_cast<long>(tau.ball().size() + 1));
}

// With K from the domination constants, sampled fields restricted to H
// rarely carry a gradient of size K, so M stays below sqrt(d_ox)/4 - 2.
TEST(ComponentStats, SampledFieldsKeepMSmall) {
    const int L = 32, d_ox = 64;
    const DensityModel m(build_box_2d(L, 1.0));
    McmcConfig cfg;
    cfg.kernel = Kernel::hmc;
    cfg.seed = 96;
    cfg.burn_in = 200;
    cfg.thinning = 5;
    cfg.n_samples = 200;
    const auto samples = sample_field_mcmc(m, cfg).pooled();
    const double K = domination_constants(0.05, 1.0).k;
    const auto h = build_diamond(d_ox / 2);
    const double cap = 0.25 * std::sqrt(double(d_ox)) - 2.0;
    std::size_t good = 0;
    for (const auto& u : samples) good += component_stats(h, restrict_to_diamond(m.graph, u, h), K).m <= cap;
    EXPECT_GE(good, static_cast<std::size_t>(std::ceil(0.99 * samples.size())));
}
