#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <nlohmann/json.hpp>

#include "vrjp/density.hpp"
#include "vrjp/graph.hpp"
#include "vrjp/parallel.hpp"
#include "vrjp/percolation.hpp"
#include "vrjp/perturbation.hpp"
#include "vrjp/rng.hpp"
#include "vrjp/rwre.hpp"
#include "vrjp/sampler.hpp"
#include "vrjp/stats.hpp"
#include "vrjp/vrjp.hpp"

#ifndef VRJP_VERSION
#define VRJP_VERSION "0.0.0"
#endif

namespace vrjp {

namespace streams {
inline constexpr std::uint64_t equivalence = 0x45515549;
inline constexpr std::uint64_t simulate = 0x53494d55;
inline constexpr std::uint64_t check = 0x43484543;
}  // namespace streams

using json = nlohmann::json;

/// A configuration problem, with the JSON pointer of the offending field.
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Hash of the canonical dump (nlohmann keeps object keys sorted).
inline std::string config_hash(const json& config) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(config.dump());
    return os.str();
}

namespace cfg {

inline const json& section(const json& j, const std::string& key) {
    static const json empty = json::object();
    if (!j.contains(key)) return empty;
    if (!j[key].is_object()) throw ConfigError("/" + key, "must be an object");
    return j[key];
}

template <typename T>
T get(const json& j, const std::string& key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "/" + key, "has the wrong type");
    }
}

template <typename T>
T positive(const json& j, const std::string& key, T fallback, const std::string& where) {
    const T v = get<T>(j, key, fallback, where);
    if (!(v > T{0})) throw ConfigError(where + "/" + key, "must be positive");
    return v;
}

}  // namespace cfg

/// Builds the graph described by the "graph" section:
/// {"kind": "box"|"wired_box"|"path"|"cycle"|"complete"|"star"|"diamond", ...}
/// or {"file": "graph.json"} for a serialized graph.
inline WeightedGraph graph_from_config(const json& config, const std::string& default_kind = "wired_box",
                                       int default_L = 6) {
    const json& g = cfg::section(config, "graph");
    const std::string where = "/graph";
    if (g.contains("file")) {
        const auto path = cfg::get<std::string>(g, "file", "", where);
        std::ifstream in(path);
        if (!in) throw ConfigError(where + "/file", "cannot open '" + path + "'");
        try {
            return graph_from_json(json::parse(in));
        } catch (const std::exception& e) {
            throw ConfigError(where + "/file", e.what());
        }
    }
    const auto kind = cfg::get<std::string>(g, "kind", default_kind, where);
    const double a = cfg::positive<double>(g, "a", 1.0, where);
    try {
        if (kind == "box" || kind == "wired_box" || kind == "diamond") {
            const int L = cfg::get<int>(g, "L", default_L, where);
            if (L < 0) throw ConfigError(where + "/L", "must be nonnegative");
            if (kind == "box") return build_box_2d(L, a);
            if (kind == "wired_box") return build_wired_box(L, a);
            return build_diamond(L, a);
        }
        const auto n = cfg::positive<std::size_t>(g, "n", 3, where);
        if (kind == "path") return build_path(n, a, cfg::get<Vertex>(g, "origin", 0, where));
        if (kind == "cycle") return build_cycle(n, a);
        if (kind == "complete") return build_complete(n, a);
        if (kind == "star") return build_star(n, a);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where, e.what());
    }
    throw ConfigError(where + "/kind", "unknown graph kind '" + kind + "'");
}

inline McmcConfig mcmc_from_config(const json& config, std::uint64_t seed, std::size_t workers) {
    const json& s = cfg::section(config, "sampler");
    const std::string where = "/sampler";
    McmcConfig m;
    m.seed = seed;
    m.workers = workers;
    try {
        m.kernel = kernel_from_string(cfg::get<std::string>(s, "kernel", "metropolis", where));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + "/kernel", e.what());
    }
    m.proposal_scale = cfg::positive<double>(s, "proposal_scale", m.proposal_scale, where);
    m.burn_in = cfg::get<std::size_t>(s, "burn_in", m.burn_in, where);
    m.thinning = cfg::positive<std::size_t>(s, "thinning", m.thinning, where);
    m.n_samples = cfg::positive<std::size_t>(s, "n_samples", m.n_samples, where);
    m.n_chains = cfg::positive<std::size_t>(s, "n_chains", m.n_chains, where);
    m.hmc_steps = cfg::positive<std::size_t>(s, "hmc_steps", m.hmc_steps, where);
    m.tune = cfg::get<bool>(s, "tune", m.tune, where);
    return m;
}

/// Settings shared by every subcommand. `config` is the parsed file (or {}),
/// with command-line overrides already applied to seed and workers.
struct ExperimentConfig {
    std::string experiment;
    json config = json::object();
    std::uint64_t seed = 1;
    std::size_t workers = 1;
    std::string format = "csv";
    std::string out;

    std::string hash() const { return config_hash({{"experiment", experiment}, {"config", config}}); }
};

inline ExperimentConfig make_experiment_config(std::string experiment, json config,
                                               std::optional<std::uint64_t> seed = std::nullopt,
                                               std::optional<std::size_t> workers = std::nullopt) {
    if (!config.is_object()) throw ConfigError("/", "configuration must be a JSON object");
    ExperimentConfig c;
    c.experiment = std::move(experiment);
    c.seed = seed ? *seed : cfg::get<std::uint64_t>(config, "seed", 1, "");
    c.workers = workers ? *workers : cfg::get<std::size_t>(config, "workers", 1, "");
    if (c.workers == 0) throw ConfigError("/workers", "must be positive");
    // The effective seed is part of the configuration for hashing purposes.
    config["seed"] = c.seed;
    config.erase("workers");
    c.format = cfg::get<std::string>(cfg::section(config, "output"), "format", "csv", "/output");
    c.out = cfg::get<std::string>(cfg::section(config, "output"), "path", "", "/output");
    c.config = std::move(config);
    return c;
}

struct EstimatorRow {
    std::string name;
    double value = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
    std::optional<bool> pass;
};

struct ExperimentResult {
    std::string experiment;
    std::vector<EstimatorRow> rows;
    json metadata = json::object();
    json tables = json::object();
    double wall_seconds = 0.0;  // kept out of written files so reruns compare equal

    bool passed() const {
        return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass.value_or(true); });
    }
    void warn(const std::string& w) { metadata["warnings"].push_back(w); }
};

inline ExperimentResult start_result(const ExperimentConfig& c) {
    ExperimentResult r;
    r.experiment = c.experiment;
    r.metadata = {{"config_hash", c.hash()},
                  {"seed", c.seed},
                  {"seed_derivation", "splitmix64(master, stream, index)"},
                  {"version", VRJP_VERSION},
                  {"warnings", json::array()}};
    return r;
}

inline json to_json(const ExperimentResult& r) {
    json rows = json::array();
    for (const auto& row : r.rows) {
        json j = {{"name", row.name}, {"value", row.value}, {"std_error", row.std_error}, {"n", row.n}};
        j["pass"] = row.pass ? json(*row.pass) : json();
        rows.push_back(j);
    }
    return {{"experiment", r.experiment}, {"metadata", r.metadata}, {"rows", rows}, {"tables", r.tables}};
}

inline void write_csv(std::ostream& os, const ExperimentResult& r) {
    os << "# experiment=" << r.experiment << ",config_hash=" << r.metadata.value("config_hash", "")
       << ",seed=" << r.metadata.value("seed", std::uint64_t{0}) << ",version=" << r.metadata.value("version", "")
       << '\n';
    for (const auto& w : r.metadata.value("warnings", json::array())) os << "# warning: " << w.get<std::string>() << '\n';
    os << "name,value,std_error,n,pass\n";
    os.precision(17);
    for (const auto& row : r.rows) {
        os << row.name << ',' << row.value << ',' << row.std_error << ',' << row.n << ',';
        if (row.pass) os << (*row.pass ? "true" : "false");
        os << '\n';
    }
}

inline void write_result(std::ostream& os, const ExperimentResult& r, const std::string& format) {
    if (format == "json")
        os << to_json(r).dump(2) << '\n';
    else
        write_csv(os, r);
}

/// The config hash stored in a written result (CSV or JSON), if any.
inline std::optional<std::string> embedded_config_hash(const std::string& text) {
    const std::string key = "config_hash";
    auto pos = text.find(key);
    if (pos == std::string::npos) return std::nullopt;
    pos += key.size();
    while (pos < text.size() && (text[pos] == '=' || text[pos] == '"' || text[pos] == ':' || text[pos] == ' ')) ++pos;
    const auto end = text.find_first_not_of("0123456789abcdef", pos);
    if (end == pos) return std::nullopt;
    return text.substr(pos, end - pos);
}

namespace detail {

inline std::vector<Vertex> vertex_list(const WeightedGraph& g, const json& list, const std::string& where) {
    if (!list.is_array()) throw ConfigError(where, "must be an array");
    std::vector<Vertex> out;
    for (std::size_t i = 0; i < list.size(); ++i) {
        const auto& v = list[i];
        const auto here = where + "/" + std::to_string(i);
        if (v.is_number_integer()) {
            const auto id = v.get<long long>();
            if (id < 0 || static_cast<Vertex>(id) >= g.size()) throw ConfigError(here, "vertex id out of range");
            out.push_back(static_cast<Vertex>(id));
        } else if (v.is_array() && v.size() == 2) {
            const auto found = g.find({v[0].get<int>(), v[1].get<int>()});
            if (!found) throw ConfigError(here, "no vertex at these coordinates");
            out.push_back(*found);
        } else {
            throw ConfigError(here, "expected a vertex id or [x, y]");
        }
    }
    return out;
}

inline std::string vertex_name(const WeightedGraph& g, Vertex v) {
    if (const auto c = g.coord(v)) return "(" + std::to_string(c->x) + " " + std::to_string(c->y) + ")";
    return "#" + std::to_string(v);
}

inline void add_sampler_metadata(ExperimentResult& r, const ChainDiagnostics& d, const std::string& label = "") {
    r.metadata["sampler" + label] = to_json(d);
    for (const auto& w : d.warnings) r.warn(label.empty() ? w : label + ": " + w);
}

}  // namespace detail

// ---------------------------------------------------------------- ward

struct WardParams {
    WeightedGraph graph;
    McmcConfig mcmc;
    std::vector<Vertex> vertices;
    bool exact_tree = false;
};

inline WardParams parse_ward(const ExperimentConfig& c) {
    WardParams p{graph_from_config(c.config), mcmc_from_config(c.config, c.seed, c.workers), {}, false};
    const json& w = cfg::section(c.config, "ward");
    if (w.contains("vertices")) {
        p.vertices = detail::vertex_list(p.graph, w["vertices"], "/ward/vertices");
    } else {
        for (int d = 1; d <= 5; ++d)
            if (auto v = p.graph.find({d, 0})) p.vertices.push_back(*v);
    }
    p.exact_tree = cfg::get<bool>(cfg::section(c.config, "sampler"), "exact_tree", false, "/sampler");
    if (p.exact_tree && !p.graph.is_tree()) throw ConfigError("/sampler/exact_tree", "graph is not a tree");
    return p;
}

/// E[e^{u_x}] at each listed vertex with a 3 SE pass flag.
inline ExperimentResult run_ward(const ExperimentConfig& c) {
    const auto p = parse_ward(c);
    auto r = start_result(c);
    if (p.vertices.empty()) return r;
    const DensityModel model(p.graph);
    std::vector<std::vector<UField>> chains;
    if (p.exact_tree) {
        const TreeSampler tree(p.graph);
        const std::size_t n = p.mcmc.n_samples * p.mcmc.n_chains;
        chains.emplace_back(parallel_map(n, c.workers, [&](std::size_t i) {
            auto gen = make_rng(c.seed, streams::tree, i);
            return tree.sample(gen);
        }));
        r.metadata["sampler"] = {{"kind", "exact_tree"}};
    } else {
        auto mc = sample_field_mcmc(model, p.mcmc);
        detail::add_sampler_metadata(r, mc.diagnostics);
        chains = std::move(mc.chains);
    }
    for (Vertex x : p.vertices) {
        const auto w = ward_estimate(chains, x);
        const bool ok = std::abs(w.mean - 1.0) <= 3.0 * w.std_error;
        r.rows.push_back({"E_exp_u" + detail::vertex_name(p.graph, x), w.mean, w.std_error, w.n, ok});
        if (!w.reliable) r.warn("Ward estimate at " + detail::vertex_name(p.graph, x) + " has too few effective samples");
    }
    return r;
}

// ---------------------------------------------------------------- decay

struct DecayParams {
    int L = 24;
    std::vector<double> a_values;
    std::vector<int> distances;
    double c_tilde = 1.0;
    std::size_t batches = 20;
    McmcConfig mcmc;
};

inline DecayParams parse_decay(const ExperimentConfig& c) {
    DecayParams p;
    const json& g = cfg::section(c.config, "graph");
    if (cfg::get<std::string>(g, "kind", "wired_box", "/graph") != "wired_box")
        throw ConfigError("/graph/kind", "decay runs on a wired box");
    p.L = cfg::get<int>(g, "L", 24, "/graph");
    if (p.L < 1) throw ConfigError("/graph/L", "must be at least 1");
    const json& d = cfg::section(c.config, "decay");
    p.a_values = cfg::get<std::vector<double>>(d, "a_values", {cfg::positive<double>(g, "a", 4.0, "/graph")}, "/decay");
    for (std::size_t i = 0; i < p.a_values.size(); ++i)
        if (!(p.a_values[i] > 0.0)) throw ConfigError("/decay/a_values/" + std::to_string(i), "must be positive");
    p.distances = cfg::get<std::vector<int>>(d, "distances", {2, 4, 8, 16}, "/decay");
    for (std::size_t i = 0; i < p.distances.size(); ++i)
        if (p.distances[i] < 0 || p.distances[i] > p.L)
            throw ConfigError("/decay/distances/" + std::to_string(i), "distance outside the box");
    p.c_tilde = cfg::get<double>(d, "c_tilde", 1.0, "/decay");
    p.batches = cfg::positive<std::size_t>(d, "batches", 20, "/decay");
    p.mcmc = mcmc_from_config(c.config, c.seed, c.workers);
    if (p.mcmc.n_samples < p.batches) throw ConfigError("/decay/batches", "more batches than samples per chain");
    return p;
}

struct DecayPoint {
    int d;
    double mean;
    double std_error;
    double tail;  // P(u_x >= -c log d)
    double tail_se;
    std::size_t n;
};

struct DecayFit {
    double slope = 0.0;
    double std_error = 0.0;
    double upper95 = 0.0;
    bool monotone = true;
    bool below_one = true;
};

namespace detail {

inline double fit_slope(const std::vector<double>& log_d, const std::vector<double>& values) {
    std::vector<double> ly;
    for (double v : values) ly.push_back(std::log(v));
    return stats::linear_fit(log_d, ly).slope;
}

}  // namespace detail

/// Estimates E[e^{u_x/2}] for x = (d, 0). Standard errors come from batch
/// means within each chain, and the slope's error from refitting per batch,
/// which keeps the correlation between distances.
inline std::pair<std::vector<DecayPoint>, DecayFit> decay_estimates(const std::vector<std::vector<UField>>& chains,
                                                                    const WeightedGraph& g, const DecayParams& p) {
    std::vector<DecayPoint> points;
    std::vector<std::vector<double>> batch_vals;  // [distance][batch]
    const std::size_t per_chain = std::max<std::size_t>(1, p.batches / chains.size());
    for (int d : p.distances) {
        const Vertex x = g.at({d, 0});
        const double threshold = d > 0 ? -p.c_tilde * std::log(double(d)) : -std::numeric_limits<double>::infinity();
        std::vector<double> all, tails, bm, bt;
        for (const auto& chain : chains) {
            std::vector<double> v, t;
            for (const auto& u : chain) {
                v.push_back(std::exp(0.5 * u[x]));
                t.push_back(u[x] >= threshold ? 1.0 : 0.0);
            }
            auto b1 = stats::batch_means(v, per_chain), b2 = stats::batch_means(t, per_chain);
            bm.insert(bm.end(), b1.begin(), b1.end());
            bt.insert(bt.end(), b2.begin(), b2.end());
            all.insert(all.end(), v.begin(), v.end());
            tails.insert(tails.end(), t.begin(), t.end());
        }
        const double nb = static_cast<double>(bm.size());
        const double se = bm.size() > 1 ? std::sqrt(stats::variance(bm) / nb) : 0.0;
        const double tse = bt.size() > 1 ? std::sqrt(stats::variance(bt) / nb) : 0.0;
        points.push_back({d, stats::mean(all), se, stats::mean(tails), tse, all.size()});
        batch_vals.push_back(std::move(bm));
    }
    DecayFit fit;
    std::vector<double> log_d, means;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < points.size(); ++i)
        if (points[i].d > 0) {
            log_d.push_back(std::log(double(points[i].d)));
            means.push_back(points[i].mean);
            idx.push_back(i);
        }
    for (std::size_t i = 0; i < points.size(); ++i) {
        fit.below_one = fit.below_one && points[i].mean <= 1.0 + 3.0 * points[i].std_error;
        for (std::size_t j = 0; j < points.size(); ++j)
            if (points[j].d > points[i].d &&
                points[j].mean > points[i].mean + 3.0 * std::hypot(points[i].std_error, points[j].std_error))
                fit.monotone = false;
    }
    if (log_d.size() >= 2) {
        fit.slope = detail::fit_slope(log_d, means);
        const std::size_t B = batch_vals.front().size();
        std::vector<double> slopes;
        for (std::size_t b = 0; b < B; ++b) {
            std::vector<double> vals;
            for (auto i : idx) vals.push_back(batch_vals[i][b]);
            slopes.push_back(detail::fit_slope(log_d, vals));
        }
        if (B > 1) {
            fit.std_error = std::sqrt(stats::variance(slopes) / static_cast<double>(B));
            fit.upper95 = fit.slope + stats::student_t_quantile(0.975, static_cast<double>(B - 1)) * fit.std_error;
        } else {
            fit.upper95 = std::numeric_limits<double>::infinity();
        }
    }
    return {points, fit};
}

inline ExperimentResult run_decay(const ExperimentConfig& c) {
    const auto p = parse_decay(c);
    auto r = start_result(c);
    json fits = json::array();
    for (std::size_t ai = 0; ai < p.a_values.size(); ++ai) {
        const double a = p.a_values[ai];
        const DensityModel model(build_wired_box(p.L, a));
        auto mcfg = p.mcmc;
        mcfg.seed = derive_seed(c.seed, streams::mcmc, ai);
        const auto mc = sample_field_mcmc(model, mcfg);
        std::ostringstream label;
        label << "a=" << a;
        detail::add_sampler_metadata(r, mc.diagnostics, "/" + label.str());
        const auto [points, fit] = decay_estimates(mc.chains, model.graph, p);
        for (const auto& pt : points) {
            const auto base = label.str() + "/d=" + std::to_string(pt.d);
            r.rows.push_back({base + "/E_exp_half_u", pt.mean, pt.std_error, pt.n, pt.mean <= 1.0 + 3.0 * pt.std_error});
            r.rows.push_back({base + "/P_u_ge_minus_c_log_d", pt.tail, pt.tail_se, pt.n, std::nullopt});
        }
        r.rows.push_back({label.str() + "/nonincreasing_in_d", fit.monotone ? 1.0 : 0.0, 0.0, points.size(), fit.monotone});
        r.rows.push_back({label.str() + "/loglog_slope", fit.slope, fit.std_error, points.size(), fit.upper95 < 0.0});
        r.rows.push_back({label.str() + "/loglog_slope_upper95", fit.upper95, 0.0, points.size(), std::nullopt});
        // c(a) >= c(a0)/a suggests a * c(a) does not collapse as a grows.
        r.rows.push_back({label.str() + "/a_times_exponent", -a * fit.slope, a * fit.std_error, points.size(), std::nullopt});
        fits.push_back({{"a", a}, {"slope", fit.slope}, {"std_error", fit.std_error}, {"upper95", fit.upper95}});
    }
    r.tables["fits"] = fits;
    return r;
}

// ---------------------------------------------------------------- equivalence

struct EquivalenceParams {
    WeightedGraph graph;
    McmcConfig mcmc;
    std::size_t k = 3;
    std::size_t n = 20000;
    std::size_t bootstrap = 400;
    bool exact_tree = false;
};

inline EquivalenceParams parse_equivalence(const ExperimentConfig& c) {
    EquivalenceParams p{graph_from_config(c.config, "complete", 3), mcmc_from_config(c.config, c.seed, c.workers)};
    const json& e = cfg::section(c.config, "equivalence");
    p.k = cfg::positive<std::size_t>(e, "k", 3, "/equivalence");
    p.n = cfg::get<std::size_t>(e, "n", 20000, "/equivalence");
    p.bootstrap = cfg::positive<std::size_t>(e, "bootstrap", 400, "/equivalence");
    p.exact_tree = cfg::get<bool>(cfg::section(c.config, "sampler"), "exact_tree", false, "/sampler");
    if (p.exact_tree && !p.graph.is_tree()) throw ConfigError("/sampler/exact_tree", "graph is not a tree");
    if (!cfg::section(c.config, "sampler").contains("thinning")) p.mcmc.thinning = 10;
    return p;
}

/// First-k-jump laws of the time-changed VRJP and of the RWRE in an
/// annealed environment, one fresh environment draw per RWRE path.
inline ExperimentResult run_equivalence(const ExperimentConfig& c) {
    const auto p = parse_equivalence(c);
    auto r = start_result(c);
    const DensityModel model(p.graph);
    auto gen = make_rng(c.seed, streams::equivalence, 0);
    EquivalenceReport report;
    if (p.exact_tree) {
        const TreeSampler tree(p.graph);
        auto env_gen = make_rng(c.seed, streams::tree, 0);
        report = equivalence_test(p.graph, p.k, p.n, [&] { return tree.sample(env_gen); }, gen, p.bootstrap);
    } else {
        Chain chain(model, p.mcmc, 0);
        chain.burn_in();
        report = equivalence_test(p.graph, p.k, p.n, [&] { return chain.advance(); }, gen, p.bootstrap);
        const double rate = chain.proposed() ? double(chain.accepted()) / double(chain.proposed()) : 0.0;
        r.metadata["sampler"] = {{"acceptance_rate", rate}, {"thinning", p.mcmc.thinning}};
    }
    r.rows.push_back({"tv", report.tv, report.bootstrap_se, report.n, std::nullopt});
    r.rows.push_back({"null_mean_tv", report.null_mean, report.null_sd, report.n, std::nullopt});
    r.rows.push_back({"tv_excess", report.excess(), report.bootstrap_se, report.n, report.consistent()});
    r.tables["paths"] = to_json(report);
    return r;
}

// ---------------------------------------------------------------- percolation

struct PercolationParams {
    int L = 20;
    double eps = 1e-3;
    std::size_t n_samples = 10000;
    int k_max = 5;
    PercolationMode mode = PercolationMode::independent;
    std::optional<int> ell;
    std::size_t sum_samples = 10000;
};

inline PercolationParams parse_percolation(const ExperimentConfig& c) {
    PercolationParams p;
    const json& s = cfg::section(c.config, "percolation");
    const std::string where = "/percolation";
    p.L = cfg::get<int>(s, "L", p.L, where);
    if (p.L < 0) throw ConfigError(where + "/L", "must be nonnegative");
    p.eps = cfg::get<double>(s, "eps", p.eps, where);
    if (!(p.eps >= 0.0 && p.eps <= 1.0)) throw ConfigError(where + "/eps", "must lie in [0, 1]");
    p.n_samples = cfg::positive<std::size_t>(s, "n_samples", p.n_samples, where);
    p.k_max = cfg::positive<int>(s, "k_max", p.k_max, where);
    try {
        p.mode = percolation_mode_from_string(cfg::get<std::string>(s, "mode", "independent", where));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + "/mode", e.what());
    }
    if (s.contains("ell")) {
        p.ell = cfg::get<int>(s, "ell", 2, where);
        if (*p.ell < 2) throw ConfigError(where + "/ell", "must be at least 2");
    }
    p.sum_samples = cfg::positive<std::size_t>(s, "sum_samples", p.sum_samples, where);
    return p;
}

inline ExperimentResult run_percolation(const ExperimentConfig& c) {
    const auto p = parse_percolation(c);
    auto r = start_result(c);
    const auto t = radius_tail_experiment(p.L, p.eps, p.n_samples, p.k_max, c.seed, p.mode, c.workers);
    for (const auto& row : t.rows) {
        const auto k = "k=" + std::to_string(row.k);
        r.rows.push_back({"P_r_ge/" + k, row.probability, row.std_error, t.n_samples, !row.violation});
        r.rows.push_back({"bound_exp/" + k, row.exp_bound, 0.0, 0, std::nullopt});
        r.rows.push_back({"bound_power/" + k, row.power_bound, 0.0, 0, std::nullopt});
    }
    r.metadata["percolation"] = {{"L", p.L}, {"eps", p.eps}, {"mode", to_string(p.mode)}, {"n_samples", p.n_samples}};
    if (p.ell) {
        const auto s = radius_sum_experiment(*p.ell, p.eps, p.sum_samples, derive_seed(c.seed, streams::percolation, 1),
                                             p.mode, c.workers);
        const auto prop = stats::proportion(s.exceedances, s.sums.size());
        const auto n = s.sums.size();
        r.rows.push_back({"radius_sum/P_S_ge_log_ell", prop.p, prop.std_error, n, std::nullopt});
        r.rows.push_back({"radius_sum/mean_S", s.mean(), std::sqrt(stats::variance(s.sums) / double(n)), n, std::nullopt});
        r.rows.push_back({"radius_sum/max_S", s.max(), 0.0, n, std::nullopt});
    }
    return r;
}

// ---------------------------------------------------------------- simulate

struct SimulateParams {
    WeightedGraph graph;
    double horizon = 20.0;
    std::size_t trajectories = 1000;
};

inline SimulateParams parse_simulate(const ExperimentConfig& c) {
    SimulateParams p{graph_from_config(c.config, "box", 2)};
    const json& s = cfg::section(c.config, "simulate");
    p.horizon = cfg::positive<double>(s, "horizon", p.horizon, "/simulate");
    p.trajectories = cfg::positive<std::size_t>(s, "trajectories", p.trajectories, "/simulate");
    return p;
}

struct QIdentitySummary {
    double worst = 0.0;  // max |Q - q^2 - 2q| / (1 + Q)
    std::size_t resolved = 0;
    std::vector<double> jumps;
    std::vector<double> d_at_horizon;
};

/// Simulates independent VRJP trajectories and checks Q = q^2 + 2q on every
/// resolved ordered pair of neighbours.
inline QIdentitySummary q_identity_run(const WeightedGraph& g, double horizon, std::size_t n, std::uint64_t seed,
                                       std::size_t workers) {
    auto parts = parallel_map(n, workers, [&](std::size_t i) {
        auto gen = make_rng(seed, streams::simulate, i);
        const auto traj = simulate_vrjp(g, horizon, gen);
        const TimeChange d(traj);
        QIdentitySummary s;
        for (const auto& e : g.edges())
            for (auto [x, y] : {std::pair{e.a, e.b}, std::pair{e.b, e.a}}) {
                const auto q = q_statistics(traj, d, x, y);
                if (!q) continue;
                ++s.resolved;
                s.worst = std::max(s.worst, std::abs(q->Q - (q->q * q->q + 2.0 * q->q)) / (1.0 + q->Q));
            }
        s.jumps.push_back(static_cast<double>(traj.jumps.size()));
        s.d_at_horizon.push_back(d.at_horizon());
        return s;
    });
    QIdentitySummary out;
    for (const auto& s : parts) {
        out.worst = std::max(out.worst, s.worst);
        out.resolved += s.resolved;
        out.jumps.insert(out.jumps.end(), s.jumps.begin(), s.jumps.end());
        out.d_at_horizon.insert(out.d_at_horizon.end(), s.d_at_horizon.begin(), s.d_at_horizon.end());
    }
    return out;
}

inline ExperimentResult run_simulate(const ExperimentConfig& c) {
    const auto p = parse_simulate(c);
    auto r = start_result(c);
    const auto s = q_identity_run(p.graph, p.horizon, p.trajectories, c.seed, c.workers);
    const auto n = p.trajectories;
    auto se = [n](const std::vector<double>& v) { return n > 1 ? std::sqrt(stats::variance(v) / double(n)) : 0.0; };
    r.rows.push_back({"q_identity_max_relative_residual", s.worst, 0.0, s.resolved, s.worst <= 1e-9});
    r.rows.push_back({"resolved_pairs", double(s.resolved), 0.0, n, std::nullopt});
    r.rows.push_back({"mean_jumps", stats::mean(s.jumps), se(s.jumps), n, std::nullopt});
    r.rows.push_back({"mean_time_change_at_horizon", stats::mean(s.d_at_horizon), se(s.d_at_horizon), n, std::nullopt});
    return r;
}

// ---------------------------------------------------------------- check

/// Quick invariant suite: exact identities and small-sample checks that
/// finish in seconds. Any failing row makes the subcommand exit with 2.
inline ExperimentResult run_check(const ExperimentConfig& c) {
    auto r = start_result(c);
    auto gen = make_rng(c.seed, streams::check, 0);

    for (double w : {0.5, 1.0, 4.0}) {
        const DensityModel m(build_path(2, w));
        auto f = [&](double x) {
            UField u(m.graph);
            u.set(1, x);
            return std::exp(log_density(m, u));
        };
        boost::math::quadrature::tanh_sinh<double> integrator;
        const double total = integrator.integrate(f, -std::numeric_limits<double>::infinity(),
                                                  std::numeric_limits<double>::infinity());
        r.rows.push_back({"normalization/W=" + std::to_string(w), total, 0.0, 1, std::abs(total - 1.0) <= 1e-8});
    }

    double worst_tree = 0.0;
    std::size_t tree_cases = 0;
    for (const auto& g : {build_path(5, 1.0), build_cycle(5, 1.0), build_complete(4, 1.0), build_box_2d(1, 1.0)}) {
        for (int rep = 0; rep < 5; ++rep) {
            std::vector<Edge> edges(g.edges().begin(), g.edges().end());
            for (auto& e : edges) e.weight = 0.2 + 2.0 * uniform01(gen);
            std::vector<std::optional<Coord>> coords(g.size());
            const DensityModel m(WeightedGraph(g.size(), edges, g.origin(), coords));
            std::vector<double> f(g.size() - 1);
            for (auto& v : f) v = -2.0 + 4.0 * uniform01(gen);
            const auto u = UField::from_free(m.graph, f);
            const double det = minor_determinant(m, u), trees = spanning_tree_sum(m, u, 9);
            worst_tree = std::max(worst_tree, std::abs(det - trees) / trees);
            ++tree_cases;
        }
    }
    r.rows.push_back({"matrix_tree/max_relative_error", worst_tree, 0.0, tree_cases, worst_tree <= 1e-10});

    {
        const DensityModel m(build_box_2d(1, 1.0));
        double lowest = std::numeric_limits<double>::infinity();
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> f(m.graph.size() - 1);
            for (auto& v : f) v = -2.0 + 4.0 * uniform01(gen);
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hessian_log_minor(m, UField::from_free(m.graph, f)));
            lowest = std::min(lowest, es.eigenvalues().minCoeff());
        }
        r.rows.push_back({"log_convexity/min_eigenvalue", lowest, 0.0, 20, lowest >= -1e-9});
    }

    {
        const auto s = q_identity_run(build_box_2d(2, 1.0), 20.0, 100, derive_seed(c.seed, streams::check, 1), c.workers);
        r.rows.push_back({"q_identity/max_relative_residual", s.worst, 0.0, s.resolved, s.worst <= 1e-9});
    }

    {
        const auto tau = build_tau(100, 1.0);
        const double s = 10.0, q = 25.0;
        const bool continuous = tau.at_distance(s) == 0.0 && tau.at_distance(q) == tau.at_distance(q + 1.0) &&
                                std::abs(tau.at_distance(q) - tau.outer_branch()) <= 1e-14;
        r.rows.push_back({"tau/continuity", continuous ? 1.0 : 0.0, 0.0, 1, continuous});
        const int L = lipschitz_scale(build_tau(64, 0.5), 1.0);
        r.rows.push_back({"tau/lipschitz_scale_64_0.5_1", double(L), 0.0, 1, L >= 8});
    }

    {
        auto pg = make_rng(c.seed, streams::check, 2);
        const auto full = sample_union_percolation(5, 1.0, PercolationMode::independent, pg);
        const int radius = full.cluster_radius(full.box().centre());
        r.rows.push_back({"percolation/full_box_radius", double(radius), 0.0, 1, radius == 10});
    }
    return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentResult r;
    if (c.experiment == "ward")
        r = run_ward(c);
    else if (c.experiment == "decay")
        r = run_decay(c);
    else if (c.experiment == "equivalence")
        r = run_equivalence(c);
    else if (c.experiment == "percolation")
        r = run_percolation(c);
    else if (c.experiment == "simulate")
        r = run_simulate(c);
    else if (c.experiment == "check")
        r = run_check(c);
    else
        throw ConfigError("/experiment", "unknown experiment '" + c.experiment + "'");
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Parses everything an experiment would read without running it.
inline void validate_experiment(const ExperimentConfig& c) {
    if (c.format != "csv" && c.format != "json") throw ConfigError("/output/format", "must be csv or json");
    if (c.experiment == "ward")
        parse_ward(c);
    else if (c.experiment == "decay")
        parse_decay(c);
    else if (c.experiment == "equivalence")
        parse_equivalence(c);
    else if (c.experiment == "percolation")
        parse_percolation(c);
    else if (c.experiment == "simulate")
        parse_simulate(c);
    else if (c.experiment != "check")
        throw ConfigError("/experiment", "unknown experiment '" + c.experiment + "'");
}

}  // namespace vrjp
