// Samples the random environment on a small wired box and prints
// E[exp(u_x)] (should be 1) and E[exp(u_x / 2)] along the x axis.

#include <cmath>
#include <cstdio>

#include "vrjp/experiments.hpp"

int main() {
    using namespace vrjp;
    const int L = 5;
    const DensityModel model(build_wired_box(L, 1.5));

    McmcConfig cfg;
    cfg.kernel = Kernel::hmc;
    cfg.n_chains = 2;
    cfg.n_samples = 2000;
    cfg.burn_in = 300;
    cfg.seed = 2024;
    const auto mc = sample_field_mcmc(model, cfg);
    std::printf("acceptance %.3f\n", mc.diagnostics.acceptance_rate);

    std::printf("%3s %12s %10s %12s\n", "d", "E[e^u]", "SE", "E[e^{u/2}]");
    for (int d = 1; d <= L; ++d) {
        const Vertex x = model.graph.at({d, 0});
        const auto w = ward_estimate(mc.chains, x);
        double half = 0.0;
        std::size_t n = 0;
        for (const auto& chain : mc.chains)
            for (const auto& u : chain) {
                half += std::exp(0.5 * u[x]);
                ++n;
            }
        std::printf("%3d %12.4f %10.4f %12.4f\n", d, w.mean, w.std_error, half / double(n));
    }
}
