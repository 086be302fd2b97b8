#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "vrjp/graph.hpp"
#include "vrjp/parallel.hpp"
#include "vrjp/rng.hpp"
#include "vrjp/stats.hpp"
#include "vrjp/union_find.hpp"

namespace vrjp {

namespace streams {
inline constexpr std::uint64_t percolation = 0x50455243;
}  // namespace streams

/// Nearest-neighbour edges of the box {-L..L}^2 (no wrap-around). Horizontal
/// edges (x,y)-(x+1,y) come first, then vertical edges (x,y)-(x,y+1).
class BoxLattice {
public:
    explicit BoxLattice(int L) : L_(L), side_(2 * L + 1) {
        if (L < 0) throw std::invalid_argument("box half-side must be nonnegative");
        horizontal_ = static_cast<std::size_t>((side_ - 1) * side_);
    }

    int half_side() const { return L_; }
    std::size_t vertex_count() const { return static_cast<std::size_t>(side_) * static_cast<std::size_t>(side_); }
    std::size_t edge_count() const { return 2 * horizontal_; }

    bool contains(Coord c) const { return std::abs(c.x) <= L_ && std::abs(c.y) <= L_; }
    Vertex index(Coord c) const { return detail::box_index(L_, c.x, c.y); }
    Coord coord(Vertex v) const {
        const int i = static_cast<int>(v);
        return {i % side_ - L_, i / side_ - L_};
    }
    Vertex centre() const { return index({0, 0}); }

    std::pair<Vertex, Vertex> endpoints(std::size_t e) const {
        if (e < horizontal_) {
            const int i = static_cast<int>(e);
            const Coord a{i % (side_ - 1) - L_, i / (side_ - 1) - L_};
            return {index(a), index({a.x + 1, a.y})};
        }
        const int i = static_cast<int>(e - horizontal_);
        const Coord a{i % side_ - L_, i / side_ - L_};
        return {index(a), index({a.x, a.y + 1})};
    }

    /// Edge id of the lattice edge {a, a + (1,0)} or {a, a + (0,1)}.
    std::size_t edge_id(Coord a, bool vertical) const {
        if (!vertical) return static_cast<std::size_t>((a.y + L_) * (side_ - 1) + (a.x + L_));
        return horizontal_ + static_cast<std::size_t>((a.y + L_) * side_ + (a.x + L_));
    }

private:
    int L_;
    int side_;
    std::size_t horizontal_;
};

enum class PercolationMode { independent, coupled };

inline std::string to_string(PercolationMode m) { return m == PercolationMode::independent ? "independent" : "coupled"; }

inline PercolationMode percolation_mode_from_string(const std::string& s) {
    if (s == "independent") return PercolationMode::independent;
    if (s == "coupled") return PercolationMode::coupled;
    throw std::invalid_argument("unknown percolation mode '" + s + "'");
}

/// The union CP of two eps-percolations on a box, with cluster bookkeeping.
class PercolationSample {
public:
    PercolationSample(int L, std::vector<bool> open) : box_(L), open_(std::move(open)), uf_(box_.vertex_count()) {
        if (open_.size() != box_.edge_count()) throw std::invalid_argument("open-edge mask has the wrong size");
        for (std::size_t e = 0; e < open_.size(); ++e) {
            if (!open_[e]) continue;
            const auto [a, b] = box_.endpoints(e);
            uf_.unite(a, b);
        }
        // Per-cluster maxima of x+y, x-y, -x+y, -x-y give l1 radii in O(1).
        extent_.assign(box_.vertex_count(), {std::numeric_limits<int>::min(), std::numeric_limits<int>::min(),
                                             std::numeric_limits<int>::min(), std::numeric_limits<int>::min()});
        for (Vertex v = 0; v < box_.vertex_count(); ++v) {
            const Coord c = box_.coord(v);
            auto& m = extent_[uf_.find(v)];
            const std::array<int, 4> s{c.x + c.y, c.x - c.y, -c.x + c.y, -c.x - c.y};
            for (std::size_t i = 0; i < 4; ++i) m[i] = std::max(m[i], s[i]);
        }
    }

    const BoxLattice& box() const { return box_; }
    bool is_open(std::size_t e) const { return open_[e]; }
    std::size_t open_count() const { return static_cast<std::size_t>(std::count(open_.begin(), open_.end(), true)); }
    std::size_t label(Vertex v) const { return uf_.find(v); }
    bool connected(Vertex a, Vertex b) const { return uf_.find(a) == uf_.find(b); }

    /// max l1 distance from y to a vertex of its CP-cluster (0 if isolated).
    int cluster_radius(Vertex y) const {
        const Coord c = box_.coord(y);
        const auto& m = extent_[uf_.find(y)];
        const std::array<int, 4> s{c.x + c.y, c.x - c.y, -c.x + c.y, -c.x - c.y};
        int r = 0;
        for (std::size_t i = 0; i < 4; ++i) r = std::max(r, m[i] - s[i]);
        return r;
    }

private:
    BoxLattice box_;
    std::vector<bool> open_;
    mutable UnionFind uf_;
    std::vector<std::array<int, 4>> extent_;
};

inline int cluster_radius(const PercolationSample& s, Vertex y) { return s.cluster_radius(y); }

namespace detail {

// Marks each of n slots with probability p, skipping geometrically.
template <typename Gen, typename Mark>
void bernoulli_positions(std::size_t n, double p, Gen& gen, Mark&& mark) {
    if (p <= 0.0) return;
    std::uint64_t pos = geometric_skip(gen, p);
    while (pos < n) {
        mark(static_cast<std::size_t>(pos));
        pos += 1 + geometric_skip(gen, p);
    }
}

}  // namespace detail

/// CP = CP1 u CP2 on the box of half-side L. Independent mode draws CP2
/// independently of CP1; coupled mode sets CP2 = CP1 + (1,0), with CP1 drawn
/// on a box extended by one column on the left so that the shift is defined.
template <typename Gen>
PercolationSample sample_union_percolation(int L, double eps, PercolationMode mode, Gen& gen) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("eps must lie in [0, 1]");
    const BoxLattice box(L);
    std::vector<bool> open(box.edge_count(), false);
    auto mark = [&](std::size_t e) { open[e] = true; };
    if (mode == PercolationMode::independent) {
        detail::bernoulli_positions(box.edge_count(), eps, gen, mark);
        detail::bernoulli_positions(box.edge_count(), eps, gen, mark);
        return PercolationSample(L, std::move(open));
    }
    // Edges of the extended lattice [-L-1, L] x [-L, L] indexed like BoxLattice
    // but with width side+1; each open edge lands in the box as itself and,
    // shifted by (1,0), as its image.
    const int side = 2 * L + 1;
    const std::size_t horizontal = static_cast<std::size_t>(side * side);  // (side+1-1) * side
    const std::size_t vertical = static_cast<std::size_t>((side + 1) * (side - 1));
    auto place = [&](Coord a, bool vertical_edge) {
        if (vertical_edge ? box.contains(a) && a.y < L : box.contains(a) && a.x < L) mark(box.edge_id(a, vertical_edge));
    };
    detail::bernoulli_positions(horizontal + vertical, eps, gen, [&](std::size_t e) {
        Coord a;
        bool v = e >= horizontal;
        if (!v) {
            const int i = static_cast<int>(e);
            a = {i % side - L - 1, i / side - L};
        } else {
            const int i = static_cast<int>(e - horizontal);
            a = {i % (side + 1) - L - 1, i / (side + 1) - L};
        }
        place(a, v);
        place({a.x + 1, a.y}, v);
    });
    return PercolationSample(L, std::move(open));
}

struct RadiusTailRow {
    int k;
    double probability;
    double std_error;
    double exp_bound;
    double power_bound;
    bool violation;  // probability > min(bounds) + 3 SE
};

struct RadiusTailTable {
    int L;
    double eps;
    PercolationMode mode;
    std::size_t n_samples;
    std::uint64_t seed;
    std::vector<RadiusTailRow> rows;

    bool any_violation() const {
        return std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.violation; });
    }
};

/// Tail of r(o) at the box centre against e^{-k} and 2 8^k eps^{k/2}. Each
/// sample uses its own derived seed, so results do not depend on `workers`.
inline RadiusTailTable radius_tail_experiment(int L, double eps, std::size_t n_samples, int k_max, std::uint64_t seed,
                                              PercolationMode mode = PercolationMode::independent,
                                              std::size_t workers = 1) {
    if (n_samples == 0) throw std::invalid_argument("n_samples must be positive");
    if (k_max < 1) throw std::invalid_argument("k_max must be at least 1");
    const BoxLattice box(L);
    const std::size_t chunk = 256;
    const std::size_t chunks = (n_samples + chunk - 1) / chunk;
    auto radii = parallel_map(chunks, workers, [&](std::size_t c) {
        std::vector<int> out;
        for (std::size_t i = c * chunk; i < std::min(n_samples, (c + 1) * chunk); ++i) {
            auto gen = make_rng(seed, streams::percolation, i);
            out.push_back(sample_union_percolation(L, eps, mode, gen).cluster_radius(box.centre()));
        }
        return out;
    });
    RadiusTailTable t{L, eps, mode, n_samples, seed, {}};
    const double n = static_cast<double>(n_samples);
    for (int k = 1; k <= k_max; ++k) {
        std::size_t hits = 0;
        for (const auto& part : radii)
            for (int r : part) hits += r >= k;
        const double p = static_cast<double>(hits) / n;
        const double se = std::sqrt(p * (1.0 - p) / n);
        const double e = std::exp(-static_cast<double>(k));
        const double pw = 2.0 * std::pow(8.0, k) * std::pow(eps, 0.5 * k);
        t.rows.push_back({k, p, se, e, pw, p > std::min(e, pw) + 3.0 * se});
    }
    return t;
}

inline void write_csv(std::ostream& os, const RadiusTailTable& t) {
    os << "# L=" << t.L << ",eps=" << t.eps << ",mode=" << to_string(t.mode) << ",n_samples=" << t.n_samples
       << ",seed=" << t.seed << '\n';
    os << "k,probability,std_error,exp_bound,power_bound,violation\n";
    os.precision(12);
    for (const auto& r : t.rows)
        os << r.k << ',' << r.probability << ',' << r.std_error << ',' << r.exp_bound << ',' << r.power_bound << ','
           << (r.violation ? 1 : 0) << '\n';
}

struct RadiusSumResult {
    int ell;
    int L;
    double eps;
    PercolationMode mode;
    std::size_t n_samples;
    std::uint64_t seed;
    std::vector<double> sums;  // S per sample
    std::size_t exceedances = 0;
    double threshold = 0.0;

    double exceedance_probability() const {
        return sums.empty() ? 0.0 : static_cast<double>(exceedances) / static_cast<double>(sums.size());
    }
    double mean() const { return stats::mean(sums); }
    double max() const { return sums.empty() ? 0.0 : *std::max_element(sums.begin(), sums.end()); }
};

/// S = sum over ell <= d(o,y) <= ell^2 of r(y)^2 / d(o,y)^2, on the box of
/// half-side ell^2 + ell so every annulus vertex keeps a margin of ell.
inline RadiusSumResult radius_sum_experiment(int ell, double eps, std::size_t n_samples, std::uint64_t seed,
                                             PercolationMode mode = PercolationMode::independent,
                                             std::size_t workers = 1) {
    if (ell < 2) throw std::invalid_argument("ell must be at least 2");
    const int L = ell * ell + ell;
    const BoxLattice box(L);
    const std::size_t chunk = 64;
    const std::size_t chunks = (n_samples + chunk - 1) / chunk;
    auto parts = parallel_map(chunks, workers, [&](std::size_t c) {
        std::vector<double> out;
        std::vector<char> seen(box.vertex_count(), 0);
        for (std::size_t i = c * chunk; i < std::min(n_samples, (c + 1) * chunk); ++i) {
            auto gen = make_rng(seed, streams::percolation, i);
            const auto s = sample_union_percolation(L, eps, mode, gen);
            // Only endpoints of open edges can have r > 0.
            double sum = 0.0;
            std::vector<Vertex> touched;
            for (std::size_t e = 0; e < box.edge_count(); ++e) {
                if (!s.is_open(e)) continue;
                const auto [a, b] = box.endpoints(e);
                for (Vertex v : {a, b})
                    if (!seen[v]) {
                        seen[v] = 1;
                        touched.push_back(v);
                    }
            }
            for (Vertex v : touched) {
                seen[v] = 0;
                const int d = l1_distance(box.coord(v), {0, 0});
                if (d < ell || d > ell * ell) continue;
                const double r = s.cluster_radius(v);
                sum += r * r / (static_cast<double>(d) * d);
            }
            out.push_back(sum);
        }
        return out;
    });
    RadiusSumResult r{ell, L, eps, mode, n_samples, seed, {}, 0, std::log(static_cast<double>(ell))};
    for (auto& p : parts) r.sums.insert(r.sums.end(), p.begin(), p.end());
    for (double s : r.sums) r.exceedances += s >= r.threshold;
    return r;
}

inline void write_csv(std::ostream& os, const RadiusSumResult& r) {
    os << "# ell=" << r.ell << ",L=" << r.L << ",eps=" << r.eps << ",mode=" << to_string(r.mode)
       << ",n_samples=" << r.n_samples << ",seed=" << r.seed << '\n';
    os << "sample,S\n";
    os.precision(12);
    for (std::size_t i = 0; i < r.sums.size(); ++i) os << i << ',' << r.sums[i] << '\n';
}

}  // namespace vrjp
