#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "vrjp/density.hpp"
#include "vrjp/parallel.hpp"
#include "vrjp/rng.hpp"
#include "vrjp/stats.hpp"

namespace vrjp {

namespace streams {
inline constexpr std::uint64_t mcmc = 0x4d434d43;
inline constexpr std::uint64_t tree = 0x54524545;
}  // namespace streams

enum class Kernel { metropolis, hmc };

inline std::string to_string(Kernel k) { return k == Kernel::metropolis ? "metropolis" : "hmc"; }

inline Kernel kernel_from_string(const std::string& s) {
    if (s == "metropolis") return Kernel::metropolis;
    if (s == "hmc") return Kernel::hmc;
    throw std::invalid_argument("unknown kernel '" + s + "'");
}

/// Counts are per chain. A metropolis iteration is one systematic sweep over
/// G \ {o}; an hmc iteration is one trajectory of `hmc_steps` leapfrog steps.
/// `proposal_scale` is the random-walk step (metropolis) or the leapfrog step
/// (hmc); with `tune` it is adapted during burn-in and then frozen.
struct McmcConfig {
    double proposal_scale = 1.0;
    std::size_t burn_in = 200;
    std::size_t thinning = 1;
    std::size_t n_samples = 1000;
    std::size_t n_chains = 1;
    std::uint64_t seed = 0;
    Kernel kernel = Kernel::metropolis;
    bool tune = true;
    std::size_t hmc_steps = 8;
    std::size_t workers = 1;

    void validate() const {
        if (!(proposal_scale > 0.0) || !std::isfinite(proposal_scale))
            throw std::invalid_argument("proposal_scale must be positive");
        if (thinning == 0 || n_samples == 0 || n_chains == 0) throw std::invalid_argument("MCMC counts must be positive");
        if (kernel == Kernel::hmc && hmc_steps == 0) throw std::invalid_argument("hmc_steps must be positive");
    }

    double target_acceptance() const { return kernel == Kernel::metropolis ? 0.3 : 0.75; }
};

struct ChainDiagnostics {
    double acceptance_rate = 0.0;
    std::vector<double> tuned_scale;  // per chain
    std::vector<Vertex> vertices;
    std::vector<double> ess;
    std::vector<double> rhat;
    std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const ChainDiagnostics& d) {
    nlohmann::json per_vertex = nlohmann::json::array();
    for (std::size_t i = 0; i < d.vertices.size(); ++i) {
        per_vertex.push_back({{"vertex", d.vertices[i]},
                              {"ess", d.ess[i]},
                              {"rhat", std::isfinite(d.rhat[i]) ? nlohmann::json(d.rhat[i]) : nlohmann::json()}});
    }
    return {{"acceptance_rate", d.acceptance_rate},
            {"tuned_scale", d.tuned_scale},
            {"per_vertex", per_vertex},
            {"warnings", d.warnings}};
}

/// Log of the Metropolis acceptance probability for a symmetric proposal.
inline double metropolis_log_acceptance(const DensityModel& model, const UField& from, const UField& to) {
    const double delta = log_density(model, to) - log_density(model, from);
    return std::isnan(delta) ? -std::numeric_limits<double>::infinity() : std::min(0.0, delta);
}

/// Single-site random-walk Metropolis. Every proposal refactorizes the sparse
/// minor; the fill-reducing order is computed once.
class MetropolisKernel {
public:
    MetropolisKernel(const DensityModel& model, UField start)
        : model_(&model), eval_(model), u_(std::move(start)), free_(model.graph.free_vertices()) {
        log_p_ = eval_.log_density(u_);
        if (!std::isfinite(log_p_)) throw std::invalid_argument("initial field has zero density");
    }

    const UField& state() const { return u_; }
    double log_target() const { return log_p_; }

    /// Proposes u_x + step at one site; returns whether it was accepted.
    bool update_site(Vertex x, double step, double log_uniform) {
        const double old = u_[x];
        u_.set(x, old + step);
        double proposed = -std::numeric_limits<double>::infinity();
        try {
            proposed = eval_.log_density(u_);
        } catch (const NumericalFailure&) {
        }
        if (log_uniform < proposed - log_p_) {
            log_p_ = proposed;
            return true;
        }
        u_.set(x, old);
        return false;
    }

    /// One systematic sweep over G \ {o}; returns the number of acceptances.
    template <typename Gen>
    std::size_t sweep(Gen& gen, double scale) {
        std::size_t accepted = 0;
        for (Vertex x : free_) {
            const double step = scale * standard_normal(gen);
            accepted += update_site(x, step, std::log(uniform_open(gen)));
        }
        return accepted;
    }

    std::size_t proposals_per_sweep() const { return free_.size(); }

private:
    const DensityModel* model_;
    DensityEvaluator eval_;
    UField u_;
    std::vector<Vertex> free_;
    double log_p_ = 0.0;
};

/// Hamiltonian Monte Carlo with a constant mass matrix: the W-weighted graph
/// Laplacian with the origin grounded, which is the curvature of the cosh
/// term at u = 0. Momenta are drawn as P^{-1} L z from its sparse Cholesky.
class HmcKernel {
public:
    using SparseMatrix = Eigen::SparseMatrix<double>;

    HmcKernel(const DensityModel& model, UField start, std::size_t steps)
        : model_(&model), eval_(model), u_(std::move(start)), free_(model.graph.free_vertices()), steps_(steps) {
        const auto& g = model.graph;
        std::vector<int> index(g.size(), -1);
        for (std::size_t i = 0; i < free_.size(); ++i) index[free_[i]] = static_cast<int>(i);
        std::vector<Eigen::Triplet<double>> t;
        for (const auto& e : g.edges()) {
            const int a = index[e.a], b = index[e.b];
            if (a >= 0) t.emplace_back(a, a, e.weight);
            if (b >= 0) t.emplace_back(b, b, e.weight);
            if (a >= 0 && b >= 0) {
                t.emplace_back(a, b, -e.weight);
                t.emplace_back(b, a, -e.weight);
            }
        }
        const auto n = static_cast<Eigen::Index>(free_.size());
        mass_.resize(n, n);
        mass_.setFromTriplets(t.begin(), t.end());
        llt_.compute(mass_);
        if (llt_.info() != Eigen::Success) throw NumericalFailure("mass matrix is not positive definite");
        log_p_ = eval_.log_density_and_gradient(u_, grad_);
        if (!std::isfinite(log_p_)) throw std::invalid_argument("initial field has zero density");
    }

    const UField& state() const { return u_; }
    double log_target() const { return log_p_; }

    /// Momentum with covariance equal to the mass matrix.
    Eigen::VectorXd momentum_from_normal(const Eigen::VectorXd& z) const {
        return llt_.permutationPinv() * (llt_.matrixL() * z);
    }

    double kinetic(const Eigen::VectorXd& p) const { return 0.5 * p.dot(llt_.solve(p)); }

    /// One trajectory with leapfrog step `eps`; returns whether it was accepted.
    template <typename Gen>
    bool transition(Gen& gen, double eps) {
        const auto n = static_cast<Eigen::Index>(free_.size());
        Eigen::VectorXd z(n);
        for (Eigen::Index i = 0; i < n; ++i) z[i] = standard_normal(gen);
        Eigen::VectorXd p = momentum_from_normal(z);
        const double h0 = -log_p_ + 0.5 * z.squaredNorm();

        const auto start = u_.free_values();
        Eigen::VectorXd q = Eigen::Map<const Eigen::VectorXd>(start.data(), n);
        Eigen::VectorXd grad = grad_;
        double log_p = log_p_;
        UField trial = u_;
        bool ok = true;
        p += 0.5 * eps * grad;
        for (std::size_t s = 0; s < steps_ && ok; ++s) {
            q += eps * llt_.solve(p);
            trial = UField::from_free(model_->graph, std::span<const double>(q.data(), static_cast<std::size_t>(n)));
            try {
                log_p = eval_.log_density_and_gradient(trial, grad);
            } catch (const NumericalFailure&) {
                ok = false;
            }
            if (!std::isfinite(log_p)) ok = false;
            if (ok) p += (s + 1 == steps_ ? 0.5 : 1.0) * eps * grad;
        }
        if (!ok) return false;
        const double h1 = -log_p + kinetic(p);
        if (std::log(uniform_open(gen)) < h0 - h1) {
            u_ = std::move(trial);
            log_p_ = log_p;
            grad_ = grad;
            return true;
        }
        return false;
    }

private:
    const DensityModel* model_;
    DensityEvaluator eval_;
    UField u_;
    std::vector<Vertex> free_;
    std::size_t steps_;
    SparseMatrix mass_;
    Eigen::SimplicialLLT<SparseMatrix> llt_;
    Eigen::VectorXd grad_;
    double log_p_ = 0.0;
};

/// One Markov chain started at u = 0, with burn-in tuning of the proposal
/// scale. The random stream depends only on (cfg.seed, index).
class Chain {
public:
    Chain(const DensityModel& model, const McmcConfig& cfg, std::size_t index)
        : cfg_(cfg), gen_(make_rng(cfg.seed, streams::mcmc, index)), scale_(cfg.proposal_scale) {
        cfg.validate();
        if (cfg.kernel == Kernel::metropolis) {
            metropolis_.emplace(model, UField(model.graph));
            per_iteration_ = metropolis_->proposals_per_sweep();
            // Adapt on windows of at least 50 proposals so the rate is not noise.
            window_ = (50 + per_iteration_ - 1) / per_iteration_;
        } else {
            hmc_.emplace(model, UField(model.graph), cfg.hmc_steps);
            per_iteration_ = 1;
            window_ = 10;
        }
    }

    /// Runs cfg.burn_in iterations, adapting the scale toward the target
    /// acceptance when cfg.tune is set; the scale is frozen afterwards.
    void burn_in() {
        std::size_t window_accepted = 0, window_count = 0;
        for (std::size_t it = 0; it < cfg_.burn_in; ++it) {
            window_accepted += iterate();
            if (!cfg_.tune || ++window_count < window_) continue;
            const double rate =
                static_cast<double>(window_accepted) / static_cast<double>(window_ * per_iteration_);
            scale_ *= std::exp(rate - cfg_.target_acceptance());
            window_accepted = window_count = 0;
        }
    }

    /// Runs cfg.thinning iterations and returns the resulting state.
    const UField& advance() {
        for (std::size_t it = 0; it < cfg_.thinning; ++it) {
            accepted_ += iterate();
            proposed_ += per_iteration_;
        }
        return state();
    }

    const UField& state() const { return metropolis_ ? metropolis_->state() : hmc_->state(); }
    double scale() const { return scale_; }
    std::size_t accepted() const { return accepted_; }
    std::size_t proposed() const { return proposed_; }

private:
    std::size_t iterate() {
        if (metropolis_) return metropolis_->sweep(gen_, scale_);
        // Jittering the step avoids resonant trajectory lengths.
        return hmc_->transition(gen_, scale_ * (0.8 + 0.4 * uniform01(gen_))) ? 1 : 0;
    }

    McmcConfig cfg_;
    Rng gen_;
    double scale_;
    std::optional<MetropolisKernel> metropolis_;
    std::optional<HmcKernel> hmc_;
    std::size_t per_iteration_ = 1;
    std::size_t window_ = 1;
    std::size_t accepted_ = 0;
    std::size_t proposed_ = 0;
};

struct ChainTrace {
    std::vector<std::vector<double>> values;  // [tracked vertex][retained sample]
    std::size_t accepted = 0;
    std::size_t proposed = 0;
    double scale = 0.0;
};

/// Runs one chain. `observe(i, u)` is called for the i-th retained sample;
/// u of every vertex in `tracked` is recorded for diagnostics.
template <typename Observer>
ChainTrace run_chain(const DensityModel& model, const McmcConfig& cfg, std::size_t index,
                     std::span<const Vertex> tracked, Observer&& observe) {
    Chain chain(model, cfg, index);
    ChainTrace trace;
    trace.values.assign(tracked.size(), {});
    for (auto& v : trace.values) v.reserve(cfg.n_samples);
    chain.burn_in();
    for (std::size_t i = 0; i < cfg.n_samples; ++i) {
        const auto& u = chain.advance();
        for (std::size_t k = 0; k < tracked.size(); ++k) trace.values[k].push_back(u[tracked[k]]);
        observe(i, u);
    }
    trace.accepted = chain.accepted();
    trace.proposed = chain.proposed();
    trace.scale = chain.scale();
    return trace;
}

/// Diagnostics over chains; `traces` must share one tracked-vertex list.
/// The acceptance warning band is [0.15, 0.6] for random-walk proposals and
/// [0.5, 0.95] for HMC, whose efficient regime sits much higher.
inline ChainDiagnostics diagnose(const std::vector<ChainTrace>& traces, std::span<const Vertex> tracked,
                                 Kernel kernel = Kernel::metropolis) {
    ChainDiagnostics d;
    std::size_t accepted = 0, proposed = 0;
    for (const auto& t : traces) {
        accepted += t.accepted;
        proposed += t.proposed;
        d.tuned_scale.push_back(t.scale);
    }
    d.acceptance_rate = proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0;
    d.vertices.assign(tracked.begin(), tracked.end());
    double worst_rhat = 1.0;
    for (std::size_t k = 0; k < tracked.size(); ++k) {
        std::vector<std::vector<double>> chains;
        for (const auto& t : traces) chains.push_back(t.values[k]);
        d.ess.push_back(stats::effective_sample_size(chains));
        d.rhat.push_back(stats::split_rhat(chains));
        if (std::isfinite(d.rhat.back())) worst_rhat = std::max(worst_rhat, d.rhat.back());
    }
    if (worst_rhat > 1.05) d.warnings.push_back("split-Rhat " + std::to_string(worst_rhat) + " exceeds 1.05");
    const auto [lo, hi] = kernel == Kernel::metropolis ? std::pair{0.15, 0.6} : std::pair{0.5, 0.95};
    if (d.acceptance_rate < lo || d.acceptance_rate > hi)
        d.warnings.push_back("acceptance rate " + std::to_string(d.acceptance_rate) + " outside [" +
                             std::to_string(lo) + ", " + std::to_string(hi) + "]");
    return d;
}

/// Vertices whose traces feed the diagnostics: all of G \ {o} for small
/// graphs, otherwise an evenly spaced subset of `cap` of them.
inline std::vector<Vertex> diagnostic_vertices(const WeightedGraph& g, std::size_t cap = 256) {
    auto free = g.free_vertices();
    if (free.size() <= cap) return free;
    std::vector<Vertex> out;
    for (std::size_t i = 0; i < cap; ++i) out.push_back(free[i * free.size() / cap]);
    return out;
}

struct McmcResult {
    std::vector<std::vector<UField>> chains;
    ChainDiagnostics diagnostics;

    std::vector<UField> pooled() const {
        std::vector<UField> out;
        for (const auto& c : chains) out.insert(out.end(), c.begin(), c.end());
        return out;
    }
};

/// Samples from rho: n_chains chains from u = 0, each keeping n_samples
/// thinned post-burn-in fields. Chains run on up to cfg.workers threads and
/// depend only on (seed, chain index).
inline McmcResult sample_field_mcmc(const DensityModel& model, const McmcConfig& cfg) {
    cfg.validate();
    if (model.graph.size() < 2) throw std::invalid_argument("graph has no free vertex to sample");
    const auto tracked = diagnostic_vertices(model.graph);
    struct Out {
        std::vector<UField> fields;
        ChainTrace trace;
    };
    auto runs = parallel_map(cfg.n_chains, cfg.workers, [&](std::size_t c) {
        Out o;
        o.fields.reserve(cfg.n_samples);
        o.trace = run_chain(model, cfg, c, tracked, [&](std::size_t, const UField& u) { o.fields.push_back(u); });
        return o;
    });
    McmcResult r;
    std::vector<ChainTrace> traces;
    for (auto& o : runs) {
        r.chains.push_back(std::move(o.fields));
        traces.push_back(std::move(o.trace));
    }
    r.diagnostics = diagnose(traces, tracked, cfg.kernel);
    return r;
}

/// Tabulated inverse CDF of one tree-edge increment s with unnormalized
/// log-density -s/2 - w (cosh s - 1).
class EdgeIncrementTable {
public:
    static constexpr std::size_t grid_points = 4096;
    static constexpr double half_width = 20.0;
    static constexpr double max_truncated_mass = 1e-12;

    explicit EdgeIncrementTable(double w) : w_(w), s_(grid_points), cdf_(grid_points, 0.0) {
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("edge weight must be positive");
        const double h = 2.0 * half_width / static_cast<double>(grid_points - 1);
        std::vector<double> logf(grid_points);
        for (std::size_t i = 0; i < grid_points; ++i) {
            s_[i] = -half_width + h * static_cast<double>(i);
            logf[i] = tree_increment_log_density(s_[i], w);
        }
        peak_ = *std::max_element(logf.begin(), logf.end());
        for (std::size_t i = 1; i < grid_points; ++i)
            cdf_[i] = cdf_[i - 1] + 0.5 * h * (std::exp(logf[i - 1] - peak_) + std::exp(logf[i] - peak_));
        const double inside = cdf_.back();
        for (auto& c : cdf_) c /= inside;

        auto f = [&](double s) { return std::exp(tree_increment_log_density(s, w) - peak_); };
        using boost::math::quadrature::gauss_kronrod;
        const double tails = gauss_kronrod<double, 31>::integrate(f, half_width, 3.0 * half_width, 10, 1e-14) +
                             gauss_kronrod<double, 31>::integrate(f, -3.0 * half_width, -half_width, 10, 1e-14);
        truncated_mass_ = tails / (inside + tails);
        if (!(truncated_mass_ < max_truncated_mass))
            throw std::domain_error("edge weight too small: truncated tail mass " + std::to_string(truncated_mass_));
    }

    double weight() const { return w_; }
    double truncated_mass() const { return truncated_mass_; }

    /// Inverse CDF, linear within grid cells.
    double quantile(double p) const {
        if (p <= 0.0) return s_.front();
        if (p >= 1.0) return s_.back();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), p);
        const auto i = static_cast<std::size_t>(it - cdf_.begin());
        const double lo = cdf_[i - 1], hi = cdf_[i];
        const double t = hi > lo ? (p - lo) / (hi - lo) : 0.5;
        return s_[i - 1] + t * (s_[i] - s_[i - 1]);
    }

    template <typename Gen>
    double sample(Gen& gen) const {
        return quantile(uniform_open(gen));
    }

private:
    double w_;
    double peak_ = 0.0;
    double truncated_mass_ = 0.0;
    std::vector<double> s_;
    std::vector<double> cdf_;
};

/// Exact sampler on a tree: increments along edges, away from the origin,
/// are independent with the tabulated edge law.
class TreeSampler {
public:
    explicit TreeSampler(const WeightedGraph& g) : origin_(g.origin()), n_(g.size()) {
        if (!g.is_tree()) throw std::invalid_argument("exact sampling needs a tree");
        std::vector<bool> seen(g.size(), false);
        std::vector<Vertex> frontier{g.origin()};
        seen[g.origin()] = true;
        for (std::size_t head = 0; head < frontier.size(); ++head) {
            const Vertex v = frontier[head];
            for (const auto& nb : g.neighbours(v)) {
                if (seen[nb.to]) continue;
                seen[nb.to] = true;
                frontier.push_back(nb.to);
                auto it = tables_.find(nb.weight);
                if (it == tables_.end()) it = tables_.emplace(nb.weight, EdgeIncrementTable(nb.weight)).first;
                steps_.push_back({v, nb.to, &it->second});
            }
        }
    }

    template <typename Gen>
    UField sample(Gen& gen) const {
        std::vector<double> u(n_, 0.0);
        for (const auto& s : steps_) u[s.child] = u[s.parent] + s.table->sample(gen);
        return UField(origin_, std::move(u));
    }

private:
    struct Step {
        Vertex parent;
        Vertex child;
        const EdgeIncrementTable* table;
    };
    Vertex origin_;
    std::size_t n_;
    std::map<double, EdgeIncrementTable> tables_;
    std::vector<Step> steps_;
};

template <typename Gen>
UField sample_field_tree_exact(const DensityModel& model, Gen& gen) {
    return TreeSampler(model.graph).sample(gen);
}

struct WardEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    double ess = 0.0;
    bool reliable = false;
};

/// Mean of e^{u_x} with an autocorrelation-adjusted standard error; each
/// inner list is one chain in sampling order.
inline WardEstimate ward_estimate(const std::vector<std::vector<UField>>& chains, Vertex x) {
    std::vector<std::vector<double>> values;
    for (const auto& c : chains) {
        auto& v = values.emplace_back();
        for (const auto& u : c) v.push_back(std::exp(u[x]));
    }
    const auto m = stats::correlated_mean(values);
    if (m.n == 0) throw std::invalid_argument("no samples");
    WardEstimate w{m.mean, m.std_error, m.n, m.ess, false};
    w.reliable = m.n >= 2 && m.std_error > 0.0 && m.ess >= 10.0;
    return w;
}

inline WardEstimate ward_estimate(std::span<const UField> samples, Vertex x) {
    return ward_estimate(std::vector<std::vector<UField>>{{samples.begin(), samples.end()}}, x);
}

/// One row per sample per vertex: chain,iter,vertex,u.
inline void write_samples_csv(std::ostream& os, const std::vector<std::vector<UField>>& chains) {
    os << "chain,iter,vertex,u\n";
    os.precision(17);
    for (std::size_t c = 0; c < chains.size(); ++c)
        for (std::size_t i = 0; i < chains[c].size(); ++i)
            for (Vertex v = 0; v < chains[c][i].size(); ++v) os << c << ',' << i << ',' << v << ',' << chains[c][i][v] << '\n';
}

}  // namespace vrjp
