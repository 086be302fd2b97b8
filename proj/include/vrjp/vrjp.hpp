#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "vrjp/graph.hpp"
#include "vrjp/rng.hpp"
#include "vrjp/trajectory.hpp"

namespace vrjp {

using VrjpTrajectory = Trajectory;

namespace detail {

/// Picks a neighbour of `x` with probability proportional to rate(neighbour).
template <typename Gen, typename RateFn>
Vertex pick_neighbour(const WeightedGraph& g, Vertex x, double total, RateFn&& rate, Gen& gen) {
    const double target = uniform01(gen) * total;
    double acc = 0.0;
    const auto nbs = g.neighbours(x);
    for (const auto& nb : nbs) {
        acc += rate(nb);
        if (target < acc) return nb.to;
    }
    return nbs.back().to;
}

}  // namespace detail

/// Exact event-driven simulation of the VRJP started at the origin. While the
/// walk sits at x only L_x grows, so the jump rates W_xy L_y are constant over
/// a sojourn and the holding time is exactly exponential.
template <typename Gen>
VrjpTrajectory simulate_vrjp(const WeightedGraph& g, double horizon, Gen& gen) {
    if (!(horizon > 0.0)) throw std::invalid_argument("horizon must be positive");
    VrjpTrajectory traj;
    traj.start = g.origin();
    traj.horizon = horizon;
    traj.n_vertices = g.size();
    if (g.size() == 1) return traj;

    std::vector<double> local(g.size(), 1.0);
    Vertex x = g.origin();
    double t = 0.0;
    for (;;) {
        auto rate = [&](const Neighbour& nb) { return nb.weight * local[nb.to]; };
        double total = 0.0;
        for (const auto& nb : g.neighbours(x)) total += rate(nb);
        const double hold = exponential(gen, total);
        if (t + hold >= horizon) break;
        t += hold;
        local[x] += hold;
        const Vertex y = detail::pick_neighbour(g, x, total, rate, gen);
        traj.jumps.push_back({t, x, y});
        x = y;
    }
    return traj;
}

/// The first k jump targets of the VRJP (no horizon; simulates exactly k jumps).
template <typename Gen>
std::vector<Vertex> vrjp_first_jumps(const WeightedGraph& g, std::size_t k, Gen& gen) {
    std::vector<Vertex> out;
    if (g.size() == 1) return out;
    std::vector<double> local(g.size(), 1.0);
    Vertex x = g.origin();
    for (std::size_t i = 0; i < k; ++i) {
        auto rate = [&](const Neighbour& nb) { return nb.weight * local[nb.to]; };
        double total = 0.0;
        for (const auto& nb : g.neighbours(x)) total += rate(nb);
        local[x] += exponential(gen, total);
        x = detail::pick_neighbour(g, x, total, rate, gen);
        out.push_back(x);
    }
    return out;
}

/// Local times L_y(t) = 1 + occupation of y on [0, t], for t <= horizon.
class LocalTimes {
public:
    explicit LocalTimes(const Trajectory& traj) : horizon_(traj.horizon), per_vertex_(traj.n_vertices) {
        for (const auto& s : traj.sojourns()) {
            auto& pieces = per_vertex_[s.vertex];
            const double before = pieces.empty() ? 0.0 : pieces.back().occupied_before + (pieces.back().end - pieces.back().start);
            pieces.push_back({s.start, s.end, before});
        }
    }

    double at(Vertex y, double t) const {
        check(t);
        const auto& pieces = per_vertex_[y];
        auto it = std::upper_bound(pieces.begin(), pieces.end(), t,
                                   [](double v, const Piece& p) { return v < p.start; });
        if (it == pieces.begin()) return 1.0;
        const auto& p = *std::prev(it);
        return 1.0 + p.occupied_before + (std::min(t, p.end) - p.start);
    }

    std::vector<double> all(double t) const {
        std::vector<double> out(per_vertex_.size());
        for (Vertex y = 0; y < out.size(); ++y) out[y] = at(y, t);
        return out;
    }

    double horizon() const { return horizon_; }

private:
    struct Piece {
        double start;
        double end;
        double occupied_before;
    };

    void check(double t) const {
        if (t < 0.0 || t > horizon_) throw std::out_of_range("local time queried outside [0, horizon]");
    }

    double horizon_;
    std::vector<std::vector<Piece>> per_vertex_;
};

/// The time change D(t) = sum_x (L_x(t)^2 - 1) and its inverse. D is
/// piecewise quadratic: on a sojourn at x starting at t0 with L_x(t0) = l,
/// D(t) = D(t0) + (t - t0)(2l + t - t0).
class TimeChange {
public:
    explicit TimeChange(const Trajectory& traj) : horizon_(traj.horizon) {
        std::vector<double> local(traj.n_vertices, 1.0);
        double d = 0.0;
        for (const auto& s : traj.sojourns()) {
            const double l = local[s.vertex];
            pieces_.push_back({s.start, d, l});
            const double len = s.end - s.start;
            d += len * (2.0 * l + len);
            local[s.vertex] += len;
        }
        at_horizon_ = d;
    }

    double operator()(double t) const {
        if (t < 0.0 || t > horizon_) throw std::out_of_range("time change queried outside [0, horizon]");
        auto it = std::upper_bound(pieces_.begin(), pieces_.end(), t,
                                   [](double v, const Piece& p) { return v < p.start; });
        const auto& p = *std::prev(it);
        const double tau = t - p.start;
        return p.d_start + tau * (2.0 * p.local_start + tau);
    }

    double inverse(double s) const {
        if (s < 0.0 || s > at_horizon_) throw std::out_of_range("inverse time change queried outside [0, D(horizon)]");
        auto it = std::upper_bound(pieces_.begin(), pieces_.end(), s,
                                   [](double v, const Piece& p) { return v < p.d_start; });
        const auto& p = *std::prev(it);
        const double l = p.local_start;
        const double delta = s - p.d_start;
        return p.start + delta / (std::sqrt(l * l + delta) + l);
    }

    double at_horizon() const { return at_horizon_; }
    double horizon() const { return horizon_; }

private:
    struct Piece {
        double start;
        double d_start;
        double local_start;
    };
    double horizon_;
    double at_horizon_ = 0.0;
    std::vector<Piece> pieces_;
};

inline TimeChange time_change(const Trajectory& traj) { return TimeChange(traj); }

/// The time-changed process Z_s = Y_{D^{-1}(s)} as a trajectory in s-time.
inline Trajectory time_changed(const Trajectory& traj) {
    const TimeChange d(traj);
    Trajectory z;
    z.start = traj.start;
    z.n_vertices = traj.n_vertices;
    z.horizon = d.at_horizon();
    z.jumps.reserve(traj.jumps.size());
    for (const auto& j : traj.jumps) z.jumps.push_back({d(j.time), j.from, j.to});
    return z;
}

struct QStatistics {
    double q;  // Y-time at x before the first x -> y jump
    double Q;  // Z-time at x before the same jump
};

/// q_xy and Q_xy for one trajectory; nullopt when no x -> y jump occurs.
/// Q is accumulated through the time change, sojourn by sojourn.
inline std::optional<QStatistics> q_statistics(const Trajectory& traj, const TimeChange& d, Vertex x, Vertex y) {
    const auto k = traj.first_jump(x, y);
    if (!k) return std::nullopt;
    QStatistics out{0.0, 0.0};
    Vertex at = traj.start;
    double t = 0.0;
    for (std::size_t i = 0; i <= *k; ++i) {
        const auto& j = traj.jumps[i];
        if (at == x) {
            out.q += j.time - t;
            out.Q += d(j.time) - d(t);
        }
        at = j.to;
        t = j.time;
    }
    return out;
}

inline std::optional<QStatistics> q_statistics(const Trajectory& traj, Vertex x, Vertex y) {
    return q_statistics(traj, TimeChange(traj), x, y);
}

inline void write_local_times_csv(std::ostream& os, const Trajectory& traj) {
    const LocalTimes lt(traj);
    os << "vertex,local_time\n";
    os.precision(17);
    for (Vertex y = 0; y < traj.n_vertices; ++y) os << y << ',' << lt.at(y, traj.horizon) << '\n';
}

}  // namespace vrjp
