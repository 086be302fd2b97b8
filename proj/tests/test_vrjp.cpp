#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "vrjp/stats.hpp"
#include "vrjp/vrjp.hpp"

using namespace vrjp;

TEST(SimulateVrjp, RejectsNonPositiveHorizon) {
    const auto g = build_path(2, 1.0);
    auto rng = make_rng(1);
    EXPECT_THROW(simulate_vrjp(g, 0.0, rng), std::invalid_argument);
    EXPECT_THROW(simulate_vrjp(g, -1.0, rng), std::invalid_argument);
}

TEST(SimulateVrjp, FirstHoldingTimeOnSingleEdgeIsExp1) {
    const auto g = build_path(2, 1.0);
    auto rng = make_rng(11);
    std::vector<double> holds;
    for (int i = 0; i < 4000; ++i) {
        const auto traj = simulate_vrjp(g, 50.0, rng);
        ASSERT_FALSE(traj.jumps.empty());
        holds.push_back(traj.jumps.front().time);
    }
    const auto ks = stats::ks_one_sample(holds, [](double t) { return 1.0 - std::exp(-t); });
    EXPECT_GT(ks.p_value, 0.01) << "D = " << ks.statistic;
}

TEST(SimulateVrjp, FirstJumpFromStarCentreIsUniform) {
    const std::size_t k = 5;
    const auto g = build_star(k, 0.8);
    auto rng = make_rng(12);
    const int n = 20000;
    std::vector<int> counts(k + 1, 0);
    for (int i = 0; i < n; ++i) ++counts[vrjp_first_jumps(g, 1, rng).front()];
    EXPECT_EQ(counts[0], 0);
    for (std::size_t leaf = 1; leaf <= k; ++leaf) {
        const auto p = stats::proportion(static_cast<std::size_t>(counts[leaf]), n);
        EXPECT_NEAR(p.p, 1.0 / k, 3.0 * std::sqrt((1.0 / k) * (1 - 1.0 / k) / n));
    }
}

// On o - x - y with unit weights the walk must step o -> x first; from x the
// rates are L_o = 1 + t1 and L_y = 1, so the return probability given the
// first sojourn t1 is (1 + t1) / (2 + t1).
TEST(SimulateVrjp, SecondJumpMatchesLocalTimeReinforcement) {
    const auto g = build_path(3, 1.0);
    auto rng = make_rng(13);
    std::vector<double> residual;
    int low_back = 0, low_n = 0, high_back = 0, high_n = 0;
    double low_pred = 0.0, high_pred = 0.0;
    for (int i = 0; i < 40000; ++i) {
        const auto traj = simulate_vrjp(g, 100.0, rng);
        ASSERT_GE(traj.jumps.size(), 2u);
        ASSERT_EQ(traj.jumps[0].to, 1u);
        const double t1 = traj.jumps[0].time;
        const double pred = (1.0 + t1) / (2.0 + t1);
        const bool back = traj.jumps[1].to == 0;
        residual.push_back((back ? 1.0 : 0.0) - pred);
        if (t1 < 0.5) {
            ++low_n;
            low_back += back;
            low_pred += pred;
        } else {
            ++high_n;
            high_back += back;
            high_pred += pred;
        }
    }
    const double se = std::sqrt(stats::variance(residual) / residual.size());
    EXPECT_LT(std::abs(stats::mean(residual)), 3.0 * se);
    EXPECT_NEAR(double(low_back) / low_n, low_pred / low_n, 3.0 * std::sqrt(0.25 / low_n));
    EXPECT_NEAR(double(high_back) / high_n, high_pred / high_n, 3.0 * std::sqrt(0.25 / high_n));
}

TEST(SimulateVrjp, TrajectoryIsValidAndDeterministic) {
    const auto g = build_box_2d(2, 1.0);
    auto r1 = make_rng(99), r2 = make_rng(99);
    const auto a = simulate_vrjp(g, 30.0, r1);
    const auto b = simulate_vrjp(g, 30.0, r2);
    a.validate(g);
    ASSERT_EQ(a.jumps.size(), b.jumps.size());
    for (std::size_t i = 0; i < a.jumps.size(); ++i) {
        EXPECT_EQ(a.jumps[i].time, b.jumps[i].time);
        EXPECT_EQ(a.jumps[i].to, b.jumps[i].to);
    }
    EXPECT_EQ(a.start, g.origin());
}

TEST(LocalTimes, ConservationAndMonotonicity) {
    const auto g = build_box_2d(2, 1.0);
    auto rng = make_rng(5);
    for (int rep = 0; rep < 20; ++rep) {
        const auto traj = simulate_vrjp(g, 15.0, rng);
        const LocalTimes lt(traj);
        std::vector<double> previous(g.size(), 1.0);
        for (double t = 0.0; t <= 15.0; t += 0.37) {
            const auto l = lt.all(t);
            double s = 0.0;
            for (Vertex y = 0; y < g.size(); ++y) {
                s += l[y] - 1.0;
                EXPECT_GE(l[y], previous[y]);
            }
            EXPECT_NEAR(s, t, 1e-10 * std::max(1.0, t));
            previous = l;
        }
        EXPECT_EQ(lt.at(g.origin(), 0.0), 1.0);
    }
}

TEST(TimeChange, BeforeFirstJumpIsQuadratic) {
    const auto g = build_path(2, 1.0);
    auto rng = make_rng(3);
    const auto traj = simulate_vrjp(g, 10.0, rng);
    const TimeChange d(traj);
    EXPECT_EQ(d(0.0), 0.0);
    const double t1 = traj.jumps.empty() ? 10.0 : traj.jumps.front().time;
    for (double f : {0.1, 0.5, 0.9}) {
        const double t = f * t1;
        EXPECT_NEAR(d(t), t * t + 2 * t, 1e-12 * (1 + t * t));
    }
}

TEST(TimeChange, DominatesIdentityAndMatchesLocalTimes) {
    const auto g = build_box_2d(2, 1.0);
    auto rng = make_rng(21);
    for (int rep = 0; rep < 20; ++rep) {
        const auto traj = simulate_vrjp(g, 12.0, rng);
        const TimeChange d(traj);
        const LocalTimes lt(traj);
        for (double t = 0.05; t <= 12.0; t += 0.29) EXPECT_GT(d(t), t);
        for (const auto& j : traj.jumps) {
            double direct = 0.0;
            for (double l : lt.all(j.time)) direct += l * l - 1.0;
            EXPECT_NEAR(d(j.time), direct, 1e-10 * (1.0 + direct));
            EXPECT_NEAR(d.inverse(d(j.time)), j.time, 1e-10 * (1.0 + j.time));
        }
        for (double s = 0.0; s < d.at_horizon(); s += d.at_horizon() / 17.0)
            EXPECT_NEAR(d(d.inverse(s)), s, 1e-9 * (1.0 + s));
    }
}

TEST(TimeChange, PreservesJumpChain) {
    const auto g = build_box_2d(2, 1.0);
    auto rng = make_rng(22);
    const auto y = simulate_vrjp(g, 20.0, rng);
    const auto z = time_changed(y);
    EXPECT_EQ(y.jump_chain(), z.jump_chain());
    for (std::size_t i = 1; i < z.jumps.size(); ++i) EXPECT_GT(z.jumps[i].time, z.jumps[i - 1].time);
}

TEST(QStatistics, IdentityHoldsPathwise) {
    const auto g = build_box_2d(2, 1.0);
    auto rng = make_rng(31);
    std::size_t resolved = 0;
    for (int rep = 0; rep < 50; ++rep) {
        const auto traj = simulate_vrjp(g, 20.0, rng);
        const TimeChange d(traj);
        for (const auto& e : g.edges())
            for (auto [x, y] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
                const auto q = q_statistics(traj, d, x, y);
                if (!q) continue;
                ++resolved;
                EXPECT_NEAR(q->Q, q->q * q->q + 2.0 * q->q, 1e-12 * (1.0 + q->Q));
            }
    }
    EXPECT_GT(resolved, 500u);
}

TEST(QStatistics, FirstJumpGivesItsTime) {
    const auto g = build_box_2d(1, 1.0);
    auto rng = make_rng(32);
    const auto traj = simulate_vrjp(g, 5.0, rng);
    ASSERT_FALSE(traj.jumps.empty());
    const auto& j = traj.jumps.front();
    const auto q = q_statistics(traj, j.from, j.to);
    ASSERT_TRUE(q);
    EXPECT_DOUBLE_EQ(q->q, j.time);
}

TEST(QStatistics, AbsentJumpIsSignalled) {
    const auto g = build_path(3, 1.0);
    Trajectory traj;
    traj.start = 0;
    traj.horizon = 1.0;
    traj.n_vertices = 3;
    EXPECT_FALSE(q_statistics(traj, 0, 1).has_value());
}

// q_xy is dominated by Exp(a) since every rate W_xy L_y is at least a.
TEST(QStatistics, ExponentialTailBoundOnUniformBox) {
    const double a = 1.5;
    const auto g = build_box_2d(2, a);
    const Vertex o = g.origin(), y = g.at({1, 0});
    auto rng = make_rng(33);
    const int n = 4000;
    std::vector<double> qs;
    for (int i = 0; i < n; ++i) {
        const auto traj = simulate_vrjp(g, 400.0, rng);
        const auto q = q_statistics(traj, o, y);
        qs.push_back(q ? q->q : std::numeric_limits<double>::infinity());
    }
    for (double t : {1.0, 2.0, 3.0}) {
        std::size_t hits = 0;
        for (double q : qs) hits += q > t / a;
        const auto p = stats::proportion(hits, n);
        EXPECT_LE(p.p, std::exp(-t) + 3.0 * std::sqrt(std::exp(-t) * (1 - std::exp(-t)) / n)) << "t=" << t;
    }
}

TEST(TrajectoryExport, CsvHasHeaderAndOneRowPerJump) {
    const auto g = build_box_2d(1, 1.0);
    auto rng = make_rng(34);
    const auto traj = simulate_vrjp(g, 3.0, rng);
    std::ostringstream os;
    write_trajectory_csv(os, traj);
    const auto text = os.str();
    EXPECT_EQ(text.rfind("jump_index,time,from,to\n", 0), 0u);
    EXPECT_EQ(static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')), traj.jumps.size() + 1);
    std::ostringstream lt;
    write_local_times_csv(lt, traj);
    const auto dump = lt.str();
    EXPECT_EQ(static_cast<std::size_t>(std::count(dump.begin(), dump.end(), '\n')), g.size() + 1);
}
