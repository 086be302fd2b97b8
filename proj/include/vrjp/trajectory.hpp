#pragma once

#include <algorithm>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "vrjp/graph.hpp"

namespace vrjp {

struct Jump {
    double time;
    Vertex from;
    Vertex to;
};

/// A maximal interval spent at one vertex. The last sojourn ends at the horizon.
struct Sojourn {
    Vertex vertex;
    double start;
    double end;
};

/// Piecewise-constant continuous-time path on a graph: jumps in increasing time
/// order, starting at `start`, observed on [0, horizon].
struct Trajectory {
    Vertex start = 0;
    double horizon = 0.0;
    std::size_t n_vertices = 0;
    std::vector<Jump> jumps;

    std::vector<Sojourn> sojourns() const {
        std::vector<Sojourn> out;
        out.reserve(jumps.size() + 1);
        Vertex at = start;
        double t = 0.0;
        for (const auto& j : jumps) {
            out.push_back({at, t, j.time});
            at = j.to;
            t = j.time;
        }
        out.push_back({at, t, horizon});
        return out;
    }

    /// Visited vertices in order, starting with `start`.
    std::vector<Vertex> jump_chain() const {
        std::vector<Vertex> out{start};
        for (const auto& j : jumps) out.push_back(j.to);
        return out;
    }

    Vertex position(double t) const {
        auto it = std::upper_bound(jumps.begin(), jumps.end(), t,
                                   [](double v, const Jump& j) { return v < j.time; });
        return it == jumps.begin() ? start : std::prev(it)->to;
    }

    /// Index of the first jump x -> y, if any.
    std::optional<std::size_t> first_jump(Vertex x, Vertex y) const {
        for (std::size_t i = 0; i < jumps.size(); ++i)
            if (jumps[i].from == x && jumps[i].to == y) return i;
        return std::nullopt;
    }

    /// Throws if jump times are not strictly increasing, the path is not
    /// continuous, or a jump is not along an edge of `g`.
    void validate(const WeightedGraph& g) const {
        Vertex at = start;
        double t = 0.0;
        for (const auto& j : jumps) {
            if (!(j.time > t)) throw std::logic_error("jump times not increasing");
            if (j.from != at) throw std::logic_error("discontinuous trajectory");
            if (g.weight(j.from, j.to) <= 0.0) throw std::logic_error("jump along a non-edge");
            at = j.to;
            t = j.time;
        }
        if (t > horizon) throw std::logic_error("jump after horizon");
    }
};

/// Occupation time of `x` strictly before the first x -> y jump, or nullopt
/// when that jump never happens.
inline std::optional<double> occupation_before_first_jump(const Trajectory& traj, Vertex x, Vertex y) {
    auto k = traj.first_jump(x, y);
    if (!k) return std::nullopt;
    double total = 0.0;
    Vertex at = traj.start;
    double t = 0.0;
    for (std::size_t i = 0; i <= *k; ++i) {
        const auto& j = traj.jumps[i];
        if (at == x) total += j.time - t;
        at = j.to;
        t = j.time;
    }
    return total;
}

/// CSV export with columns jump_index,time,from,to.
inline void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    os << "jump_index,time,from,to\n";
    os.precision(17);
    for (std::size_t i = 0; i < traj.jumps.size(); ++i)
        os << i << ',' << traj.jumps[i].time << ',' << traj.jumps[i].from << ',' << traj.jumps[i].to << '\n';
}

}  // namespace vrjp
