#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "vrjp/density.hpp"
#include "vrjp/graph.hpp"
#include "vrjp/union_find.hpp"

namespace vrjp {

/// tau on the diamond H = B(o, d_ox / 2). Values depend only on d(o, y).
class TargetFunction {
public:
    TargetFunction(int d_ox, double lambda)
        : d_ox_(checked(d_ox, lambda)), lambda_(lambda), ball_(build_diamond(d_ox / 2)),
          sqrt_d_(std::sqrt(static_cast<double>(d_ox))) {
        values_.resize(ball_.size());
        for (Vertex v = 0; v < ball_.size(); ++v) values_[v] = at_distance(radius(v));
    }

    int d_ox() const { return d_ox_; }
    double lambda() const { return lambda_; }
    const WeightedGraph& ball() const { return ball_; }
    double operator[](Vertex v) const { return values_[v]; }
    std::span<const double> values() const { return values_; }
    int radius(Vertex v) const { return l1_distance(*ball_.coord(v), {0, 0}); }

    /// Clamping d into [sqrt(d_ox), d_ox/4] before taking the log makes both
    /// regime boundaries exactly continuous. Below d_ox = 16 the outer regime
    /// would be negative, and tau stays 0.
    double at_distance(double d) const {
        const double upper = 0.25 * d_ox_;
        if (upper <= sqrt_d_) return 0.0;
        return lambda_ * std::log(std::clamp(d, sqrt_d_, upper) / sqrt_d_);
    }

    // Branches as written, for checking the clamp against them.
    double inner_branch(double) const { return 0.0; }
    double middle_branch(double d) const { return lambda_ * std::log(d / sqrt_d_); }
    double outer_branch() const { return lambda_ * std::log(0.25 * sqrt_d_); }

private:
    static int checked(int d_ox, double lambda) {
        if (d_ox < 4) throw std::invalid_argument("d(o,x) must be at least 4");
        if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be positive");
        return d_ox;
    }

    int d_ox_;
    double lambda_;
    WeightedGraph ball_;
    double sqrt_d_;
    std::vector<double> values_;
};

inline TargetFunction build_tau(int d_ox, double lambda) { return TargetFunction(d_ox, lambda); }

/// max over w with d(v,w) <= k of tau_v - tau_w. Graph distance on the
/// diamond is the l1 distance, so the neighbourhood is a small diamond.
inline double tau_prime(const TargetFunction& tau, Vertex v, int k) {
    if (k < 0) throw std::invalid_argument("k must be nonnegative");
    const auto& h = tau.ball();
    const Coord c = *h.coord(v);
    const int R = tau.d_ox() / 2;
    double best = 0.0;
    for (int dy = -k; dy <= k; ++dy)
        for (int dx = -(k - std::abs(dy)); dx <= k - std::abs(dy); ++dx) {
            const Coord w{c.x + dx, c.y + dy};
            if (std::abs(w.x) + std::abs(w.y) > R) continue;
            best = std::max(best, tau[v] - tau.at_distance(std::abs(w.x) + std::abs(w.y)));
        }
    return best;
}

/// Largest k with |tau_v - tau_w| <= K/2 whenever d(v,w) < k. Scans all pairs
/// and records the worst difference per distance.
inline int lipschitz_scale(const TargetFunction& tau, double K) {
    if (!(K > 0.0)) throw std::invalid_argument("K must be positive");
    const auto& h = tau.ball();
    const int diameter = 2 * (tau.d_ox() / 2);
    std::vector<double> worst(static_cast<std::size_t>(diameter) + 1, 0.0);
    std::vector<Coord> coords(h.size());
    for (Vertex v = 0; v < h.size(); ++v) coords[v] = *h.coord(v);
    for (Vertex v = 0; v < h.size(); ++v)
        for (Vertex w = v + 1; w < h.size(); ++w) {
            const auto d = static_cast<std::size_t>(l1_distance(coords[v], coords[w]));
            worst[d] = std::max(worst[d], std::abs(tau[v] - tau[w]));
        }
    for (int d = 1; d <= diameter; ++d)
        if (worst[static_cast<std::size_t>(d)] > 0.5 * K) return d;
    return diameter + 1;
}

struct ComponentStats {
    std::vector<std::size_t> ec_edges;  // edge ids of the graph
    std::vector<int> r;
    std::vector<int> ec_degree;
    int m = 0;
};

/// EC = edges with |phi_v - phi_w| >= K; r and M use l1 distance between
/// coordinates, which is the graph distance on boxes and diamonds.
inline ComponentStats component_stats(const WeightedGraph& h, std::span<const double> phi, double K) {
    if (!(K > 0.0)) throw std::invalid_argument("K must be positive");
    if (phi.size() != h.size()) throw std::invalid_argument("field size does not match the graph");
    ComponentStats s;
    s.ec_degree.assign(h.size(), 0);
    UnionFind uf(h.size());
    for (std::size_t i = 0; i < h.edge_count(); ++i) {
        const auto& e = h.edge(i);
        if (std::abs(phi[e.a] - phi[e.b]) < K) continue;
        s.ec_edges.push_back(i);
        ++s.ec_degree[e.a];
        ++s.ec_degree[e.b];
        uf.unite(e.a, e.b);
    }
    constexpr int lowest = std::numeric_limits<int>::min();
    std::vector<std::array<int, 4>> extent(h.size(), {lowest, lowest, lowest, lowest});
    auto signature = [&](Vertex v) {
        const auto c = h.coord(v);
        if (!c) throw std::invalid_argument("component_stats needs lattice coordinates");
        return std::array<int, 4>{c->x + c->y, c->x - c->y, -c->x + c->y, -c->x - c->y};
    };
    for (Vertex v = 0; v < h.size(); ++v) {
        auto& m = extent[uf.find(v)];
        const auto sv = signature(v);
        for (std::size_t i = 0; i < 4; ++i) m[i] = std::max(m[i], sv[i]);
    }
    s.r.resize(h.size());
    for (Vertex v = 0; v < h.size(); ++v) {
        const auto& m = extent[uf.find(v)];
        const auto sv = signature(v);
        int r = 0;
        for (std::size_t i = 0; i < 4; ++i) r = std::max(r, m[i] - sv[i]);
        s.r[v] = r;
        s.m = std::max(s.m, r);
    }
    return s;
}

/// Restricts a field on a lattice graph to the diamond of the given radius,
/// in build_diamond's vertex order.
inline std::vector<double> restrict_to_diamond(const WeightedGraph& g, const UField& u, const WeightedGraph& diamond) {
    std::vector<double> out(diamond.size());
    for (Vertex v = 0; v < diamond.size(); ++v) out[v] = u[g.at(*diamond.coord(v))];
    return out;
}

inline void write_perturbation_csv(std::ostream& os, const TargetFunction& tau, const ComponentStats& s) {
    os << "vertex,x,y,tau,r,ec_degree\n";
    os.precision(12);
    const auto& h = tau.ball();
    for (Vertex v = 0; v < h.size(); ++v) {
        const Coord c = *h.coord(v);
        os << v << ',' << c.x << ',' << c.y << ',' << tau[v] << ',' << s.r[v] << ',' << s.ec_degree[v] << '\n';
    }
}

}  // namespace vrjp
