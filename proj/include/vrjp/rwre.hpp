#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "vrjp/density.hpp"
#include "vrjp/rng.hpp"
#include "vrjp/stats.hpp"
#include "vrjp/trajectory.hpp"
#include "vrjp/vrjp.hpp"

namespace vrjp {

/// Jump rates of the walk in environment u: x -> y at 1/2 W_xy e^{u_y - u_x}.
class RwreRates {
public:
    RwreRates(const WeightedGraph& g, const UField& u) : g_(&g), total_(g.size(), 0.0), rate_(g.size()) {
        if (u.size() != g.size()) throw std::invalid_argument("field does not match the graph");
        for (Vertex x = 0; x < g.size(); ++x) {
            for (const auto& nb : g.neighbours(x)) {
                const double r = 0.5 * nb.weight * std::exp(u[nb.to] - u[x]);
                rate_[x].push_back(r);
                total_[x] += r;
            }
        }
    }

    double total(Vertex x) const { return total_[x]; }
    double rate(Vertex x, std::size_t i) const { return rate_[x][i]; }

    template <typename Gen>
    Vertex pick(Vertex x, Gen& gen) const {
        const double target = uniform01(gen) * total_[x];
        double acc = 0.0;
        const auto nbs = g_->neighbours(x);
        for (std::size_t i = 0; i < nbs.size(); ++i) {
            acc += rate_[x][i];
            if (target < acc) return nbs[i].to;
        }
        return nbs.back().to;
    }

private:
    const WeightedGraph* g_;
    std::vector<double> total_;
    std::vector<std::vector<double>> rate_;
};

/// Continuous-time walk from the origin in environment u, up to `horizon`.
template <typename Gen>
Trajectory simulate_rwre(const WeightedGraph& g, const UField& u, double horizon, Gen& gen) {
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    const RwreRates rates(g, u);
    Trajectory traj;
    traj.start = g.origin();
    traj.horizon = horizon;
    traj.n_vertices = g.size();
    if (g.size() == 1) return traj;
    Vertex x = g.origin();
    double t = 0.0;
    while (true) {
        const double hold = exponential(gen, rates.total(x));
        if (t + hold >= horizon) break;
        t += hold;
        const Vertex y = rates.pick(x, gen);
        traj.jumps.push_back({t, x, y});
        x = y;
    }
    return traj;
}

/// Local time at x before the first x -> y jump, if the trajectory has one.
inline std::optional<double> q_estimator(const Trajectory& traj, Vertex x, Vertex y) {
    return occupation_before_first_jump(traj, x, y);
}

/// Runs the walk from the origin until its first x -> y jump and returns the
/// local time at x accumulated by then; nullopt after `max_jumps` jumps.
template <typename Gen>
std::optional<double> rwre_q_until_jump(const WeightedGraph& g, const UField& u, Vertex x, Vertex y, Gen& gen,
                                        std::size_t max_jumps = 10'000'000) {
    if (g.weight(x, y) == 0.0) throw std::invalid_argument("x and y are not adjacent");
    const RwreRates rates(g, u);
    Vertex at = g.origin();
    double local = 0.0;
    for (std::size_t j = 0; j < max_jumps; ++j) {
        const double hold = exponential(gen, rates.total(at));
        const Vertex next = rates.pick(at, gen);
        if (at == x) {
            local += hold;
            if (next == y) return local;
        }
        at = next;
    }
    return std::nullopt;
}

/// The first k jump targets of the walk in environment u. Holding times do
/// not matter for the jump chain: from x it moves to y with probability
/// proportional to W_xy e^{u_y}.
template <typename Gen>
std::vector<Vertex> rwre_first_jumps(const WeightedGraph& g, const UField& u, std::size_t k, Gen& gen) {
    std::vector<Vertex> out;
    if (g.size() == 1) return out;
    const RwreRates rates(g, u);
    Vertex x = g.origin();
    for (std::size_t i = 0; i < k; ++i) {
        x = rates.pick(x, gen);
        out.push_back(x);
    }
    return out;
}

struct EquivalenceReport {
    std::size_t k = 0;
    std::size_t n = 0;
    std::size_t bootstrap = 0;
    double tv = 0.0;
    double bootstrap_se = 0.0;
    double null_mean = 0.0;
    double null_sd = 0.0;
    std::map<std::vector<Vertex>, std::pair<std::size_t, std::size_t>> table;  // path -> (vrjp, rwre)

    /// TV in excess of what two equal laws produce at this sample size.
    double excess() const { return tv - null_mean; }
    bool consistent(double n_se = 3.0) const { return n == 0 || excess() <= n_se * bootstrap_se; }
};

inline nlohmann::json to_json(const EquivalenceReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [path, counts] : r.table)
        rows.push_back({{"path", path}, {"vrjp", counts.first}, {"rwre", counts.second}});
    return {{"k", r.k},
            {"n", r.n},
            {"bootstrap_replicates", r.bootstrap},
            {"tv", r.tv},
            {"bootstrap_se", r.bootstrap_se},
            {"null_tv_mean", r.null_mean},
            {"null_tv_sd", r.null_sd},
            {"excess_tv", r.excess()},
            {"consistent", r.consistent()},
            {"paths", rows}};
}

namespace detail {

inline double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b, double na, double nb) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) / na - static_cast<double>(b[i]) / nb);
    return 0.5 * s;
}

// Category counts of n draws with replacement from a sample with the given counts.
template <typename Gen>
std::vector<std::size_t> resample_counts(std::span<const std::size_t> counts, std::size_t n, Gen& gen) {
    std::vector<std::size_t> cumulative(counts.size());
    std::size_t acc = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) cumulative[i] = acc += counts[i];
    std::vector<std::size_t> out(counts.size(), 0);
    if (acc == 0) return out;
    for (std::size_t d = 0; d < n; ++d) {
        const std::size_t r = uniform_index(gen, acc);
        ++out[static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), r) - cumulative.begin())];
    }
    return out;
}

}  // namespace detail

/// Compares the first k jump targets of the VRJP (the time change keeps the
/// jump chain) with those of the walk in environments drawn by `environment`,
/// n runs per side. The bootstrap SE resamples each side; the null mean and
/// SD come from resampling both sides out of the pooled sample, since the
/// plug-in TV is biased upward even when the laws agree.
template <typename EnvironmentFn, typename Gen>
EquivalenceReport equivalence_test(const WeightedGraph& g, std::size_t k, std::size_t n, EnvironmentFn&& environment,
                                   Gen& gen, std::size_t bootstrap = 400) {
    if (k == 0) throw std::invalid_argument("k must be at least 1");
    EquivalenceReport r;
    r.k = k;
    r.n = n;
    r.bootstrap = bootstrap;
    if (n == 0) return r;
    for (std::size_t i = 0; i < n; ++i) ++r.table[vrjp_first_jumps(g, k, gen)].first;
    for (std::size_t i = 0; i < n; ++i) {
        const UField u = environment();
        ++r.table[rwre_first_jumps(g, u, k, gen)].second;
    }
    std::vector<std::size_t> a, b, pooled;
    for (const auto& [path, c] : r.table) {
        a.push_back(c.first);
        b.push_back(c.second);
        pooled.push_back(c.first + c.second);
    }
    const double dn = static_cast<double>(n);
    r.tv = detail::total_variation(a, b, dn, dn);
    std::vector<double> spread, null;
    for (std::size_t i = 0; i < bootstrap; ++i) {
        const auto ra = detail::resample_counts(a, n, gen), rb = detail::resample_counts(b, n, gen);
        spread.push_back(detail::total_variation(ra, rb, dn, dn));
        const auto pa = detail::resample_counts(pooled, n, gen), pb = detail::resample_counts(pooled, n, gen);
        null.push_back(detail::total_variation(pa, pb, dn, dn));
    }
    if (bootstrap >= 2) {
        r.bootstrap_se = std::sqrt(stats::variance(spread));
        r.null_mean = stats::mean(null);
        r.null_sd = std::sqrt(stats::variance(null));
    }
    return r;
}

/// Constants of the domination argument at lemma level epsilon. K1 = a/(2 eps)
/// and K2 = q*^2 + 2 q* with q* = log(1/eps)/a, the level at which the
/// exponential tail P(q > t/a) <= e^{-t} reaches eps; K = log(K1 K2).
struct DominationConstants {
    double eps;
    double a;
    double k1;
    double k2;
    double k;
};

inline DominationConstants domination_constants(double eps, double a) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("eps must lie in (0, 1)");
    if (!(a > 0.0)) throw std::invalid_argument("a must be positive");
    const double k1 = a / (2.0 * eps);
    const double q = std::log(1.0 / eps) / a;
    const double k2 = q * q + 2.0 * q;
    return {eps, a, k1, k2, std::log(k1 * k2)};
}

struct EdgeExceedance {
    std::size_t edge;
    Vertex a;
    Vertex b;
    double frequency;
    double std_error;
};

struct DominationReport {
    double K = 0.0;
    std::size_t n_samples = 0;
    std::vector<EdgeExceedance> edges;
    double max_frequency = 0.0;
    double mean_frequency = 0.0;
    std::optional<DominationConstants> constants;
};

/// Edges carrying the most common weight: the uniform-weight region H.
inline std::vector<std::size_t> uniform_weight_edges(const WeightedGraph& g) {
    std::map<double, std::size_t> counts;
    for (const auto& e : g.edges()) ++counts[e.weight];
    if (counts.empty()) return {};
    const double modal = std::max_element(counts.begin(), counts.end(), [](auto& l, auto& r) {
                             return l.second < r.second;
                         })->first;
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < g.edge_count(); ++i)
        if (g.edge(i).weight == modal) out.push_back(i);
    return out;
}

/// Per-edge frequency of |u_x - u_y| >= K over the samples, on the
/// uniform-weight region. The standard error is binomial; pass chains
/// thinned enough to be roughly independent.
inline DominationReport domination_diagnostic(const WeightedGraph& g, std::span<const UField> samples, double K) {
    if (samples.empty()) throw std::invalid_argument("no samples");
    if (!(K >= 0.0)) throw std::invalid_argument("K must be nonnegative");
    DominationReport r;
    r.K = K;
    r.n_samples = samples.size();
    const double n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (std::size_t i : uniform_weight_edges(g)) {
        const auto& e = g.edge(i);
        std::size_t hits = 0;
        for (const auto& u : samples) hits += std::abs(u[e.a] - u[e.b]) >= K;
        const double p = static_cast<double>(hits) / n;
        r.edges.push_back({i, e.a, e.b, p, std::sqrt(p * (1.0 - p) / n)});
        r.max_frequency = std::max(r.max_frequency, p);
        sum += p;
    }
    if (!r.edges.empty()) r.mean_frequency = sum / static_cast<double>(r.edges.size());
    return r;
}

inline nlohmann::json to_json(const DominationReport& r) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : r.edges)
        edges.push_back({{"edge", {e.a, e.b}}, {"frequency", e.frequency}, {"stderr", e.std_error}});
    nlohmann::json j = {{"K", r.K},
                        {"n_samples", r.n_samples},
                        {"max_frequency", r.max_frequency},
                        {"mean_frequency", r.mean_frequency},
                        {"edges", edges}};
    if (r.constants)
        j["constants"] = {{"eps", r.constants->eps}, {"a", r.constants->a}, {"K1", r.constants->k1},
                          {"K2", r.constants->k2}, {"K", r.constants->k}};
    return j;
}

}  // namespace vrjp
