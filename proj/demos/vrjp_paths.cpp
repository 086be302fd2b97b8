// Runs the VRJP on a 3x3 box, then compares its first jumps with a random
// walk in an environment drawn from the mixing measure.

#include <cstdio>

#include "vrjp/experiments.hpp"

int main() {
    using namespace vrjp;
    const auto g = build_box_2d(1, 1.0);
    auto gen = make_rng(7);

    const auto traj = simulate_vrjp(g, 5.0, gen);
    const TimeChange d(traj);
    std::printf("%zu jumps before t = 5, D(5) = %.3f\n", traj.jumps.size(), d.at_horizon());
    for (const auto& e : g.edges())
        if (const auto q = q_statistics(traj, d, e.a, e.b))
            std::printf("  %zu -> %zu: q = %.4f  Q = %.4f  q^2 + 2q = %.4f\n", e.a, e.b, q->q, q->Q,
                        q->q * q->q + 2 * q->q);

    const DensityModel model(g);
    McmcConfig cfg;
    cfg.seed = 7;
    cfg.thinning = 5;
    Chain chain(model, cfg, 0);
    chain.burn_in();
    const auto report = equivalence_test(g, 2, 4000, [&] { return chain.advance(); }, gen, 200);
    std::printf("first-2-jump TV %.4f (null %.4f, SE %.4f): %s\n", report.tv, report.null_mean, report.bootstrap_se,
                report.consistent() ? "consistent" : "inconsistent");
}
