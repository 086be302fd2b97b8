#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <cstddef>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace vrjp {

using Vertex = std::size_t;

struct Coord {
    int x = 0;
    int y = 0;
    friend bool operator==(const Coord&, const Coord&) = default;
    friend auto operator<=>(const Coord&, const Coord&) = default;
};

inline int l1_distance(Coord a, Coord b) { return std::abs(a.x - b.x) + std::abs(a.y - b.y); }

struct Edge {
    Vertex a;
    Vertex b;
    double weight;
};

struct Neighbour {
    Vertex to;
    double weight;
    std::size_t edge;
};

/// Finite connected graph with positive edge weights and a distinguished origin.
/// Immutable after construction.
class WeightedGraph {
public:
    WeightedGraph(std::size_t n_vertices, std::vector<Edge> edges, Vertex origin,
                  std::vector<std::optional<Coord>> coords = {})
        : edges_(std::move(edges)), origin_(origin), coords_(std::move(coords)) {
        if (n_vertices == 0) throw std::invalid_argument("graph must have at least one vertex");
        if (origin >= n_vertices) throw std::invalid_argument("origin is not a vertex");
        if (coords_.empty()) coords_.resize(n_vertices);
        if (coords_.size() != n_vertices) throw std::invalid_argument("coordinate table size mismatch");

        adjacency_.resize(n_vertices);
        std::map<std::pair<Vertex, Vertex>, std::size_t> seen;
        for (std::size_t i = 0; i < edges_.size(); ++i) {
            auto& e = edges_[i];
            if (e.a >= n_vertices || e.b >= n_vertices) throw std::invalid_argument("edge endpoint out of range");
            if (e.a == e.b) throw std::invalid_argument("self-loops are not allowed");
            if (!(e.weight > 0.0) || !std::isfinite(e.weight))
                throw std::invalid_argument("edge weights must be positive and finite");
            if (e.a > e.b) std::swap(e.a, e.b);
            if (!seen.emplace(std::pair{e.a, e.b}, i).second)
                throw std::invalid_argument("duplicate edge");
            adjacency_[e.a].push_back({e.b, e.weight, i});
            adjacency_[e.b].push_back({e.a, e.weight, i});
        }
        for (std::size_t v = 0; v < n_vertices; ++v)
            if (coords_[v]) coord_index_.emplace(*coords_[v], v);

        const auto dist = distances_from(origin_);
        if (std::find(dist.begin(), dist.end(), unreachable) != dist.end())
            throw std::invalid_argument("graph is not connected");
    }

    static constexpr int unreachable = std::numeric_limits<int>::max();

    std::size_t size() const { return adjacency_.size(); }
    std::size_t edge_count() const { return edges_.size(); }
    Vertex origin() const { return origin_; }
    std::span<const Edge> edges() const { return edges_; }
    const Edge& edge(std::size_t i) const { return edges_[i]; }
    std::span<const Neighbour> neighbours(Vertex v) const { return adjacency_[v]; }
    std::size_t degree(Vertex v) const { return adjacency_[v].size(); }

    std::optional<Coord> coord(Vertex v) const { return coords_[v]; }
    std::optional<Vertex> find(Coord c) const {
        auto it = coord_index_.find(c);
        if (it == coord_index_.end()) return std::nullopt;
        return it->second;
    }
    Vertex at(Coord c) const {
        auto v = find(c);
        if (!v) throw std::out_of_range("no vertex at coordinate (" + std::to_string(c.x) + "," + std::to_string(c.y) + ")");
        return *v;
    }

    /// Weight of {x, y}, or 0 if they are not adjacent.
    double weight(Vertex x, Vertex y) const {
        for (const auto& nb : adjacency_[x])
            if (nb.to == y) return nb.weight;
        return 0.0;
    }

    bool is_tree() const { return edges_.size() + 1 == size(); }

    /// Single-source BFS distances (unweighted).
    std::vector<int> distances_from(Vertex source) const {
        std::vector<int> dist(size(), unreachable);
        std::deque<Vertex> queue{source};
        dist[source] = 0;
        while (!queue.empty()) {
            Vertex v = queue.front();
            queue.pop_front();
            for (const auto& nb : adjacency_[v]) {
                if (dist[nb.to] == unreachable) {
                    dist[nb.to] = dist[v] + 1;
                    queue.push_back(nb.to);
                }
            }
        }
        return dist;
    }

    /// Vertices other than the origin, in increasing id order. This is the
    /// coordinate order used for fields, gradients and Hessians.
    std::vector<Vertex> free_vertices() const {
        std::vector<Vertex> out;
        out.reserve(size() - 1);
        for (Vertex v = 0; v < size(); ++v)
            if (v != origin_) out.push_back(v);
        return out;
    }

private:
    std::vector<Edge> edges_;
    Vertex origin_;
    std::vector<std::optional<Coord>> coords_;
    std::vector<std::vector<Neighbour>> adjacency_;
    std::map<Coord, Vertex> coord_index_;
};

inline int graph_distance(const WeightedGraph& g, Vertex x, Vertex y) {
    if (x == y) return 0;
    return g.distances_from(x)[y];
}

/// Memoized single-source distance tables. Not thread-safe; use one per worker.
class DistanceTable {
public:
    explicit DistanceTable(const WeightedGraph& g) : g_(&g), rows_(g.size()) {}

    int operator()(Vertex x, Vertex y) {
        if (rows_[x].empty()) rows_[x] = g_->distances_from(x);
        return rows_[x][y];
    }
    const std::vector<int>& from(Vertex x) {
        if (rows_[x].empty()) rows_[x] = g_->distances_from(x);
        return rows_[x];
    }

private:
    const WeightedGraph* g_;
    std::vector<std::vector<int>> rows_;
};

namespace detail {

inline std::size_t box_index(int L, int x, int y) {
    const int side = 2 * L + 1;
    return static_cast<std::size_t>((y + L) * side + (x + L));
}

inline std::pair<std::vector<Edge>, std::vector<std::optional<Coord>>> box_lattice(int L, double a) {
    const int side = 2 * L + 1;
    std::vector<std::optional<Coord>> coords(static_cast<std::size_t>(side * side));
    std::vector<Edge> edges;
    for (int y = -L; y <= L; ++y) {
        for (int x = -L; x <= L; ++x) {
            coords[box_index(L, x, y)] = Coord{x, y};
            if (x < L) edges.push_back({box_index(L, x, y), box_index(L, x + 1, y), a});
            if (y < L) edges.push_back({box_index(L, x, y), box_index(L, x, y + 1), a});
        }
    }
    return {std::move(edges), std::move(coords)};
}

}  // namespace detail

/// The box {-L..L}^2 with nearest-neighbour edges of weight a and origin (0,0).
inline WeightedGraph build_box_2d(int L, double a) {
    if (L < 0) throw std::invalid_argument("box half-side must be nonnegative");
    if (!(a > 0.0)) throw std::invalid_argument("box weight must be positive");
    auto [edges, coords] = detail::box_lattice(L, a);
    const auto n = coords.size();
    return WeightedGraph(n, std::move(edges), detail::box_index(L, 0, 0), std::move(coords));
}

/// The box plus a wired boundary vertex adjacent to every boundary site.
/// Corner-to-boundary edges carry weight 2a (they merge two lattice edges).
/// The wired vertex is the last vertex and has no coordinate.
inline WeightedGraph build_wired_box(int L, double a) {
    if (L < 1) throw std::invalid_argument("wired box needs L >= 1");
    if (!(a > 0.0)) throw std::invalid_argument("box weight must be positive");
    auto [edges, coords] = detail::box_lattice(L, a);
    const Vertex wired = coords.size();
    for (int y = -L; y <= L; ++y) {
        for (int x = -L; x <= L; ++x) {
            const bool on_boundary = std::abs(x) == L || std::abs(y) == L;
            if (!on_boundary) continue;
            const bool corner = std::abs(x) == L && std::abs(y) == L;
            edges.push_back({detail::box_index(L, x, y), wired, corner ? 2.0 * a : a});
        }
    }
    coords.emplace_back(std::nullopt);
    const std::size_t n = coords.size();
    return WeightedGraph(n, std::move(edges), detail::box_index(L, 0, 0), std::move(coords));
}

/// Path 0 - 1 - ... - (n-1) with origin 0.
inline WeightedGraph build_path(std::size_t n, double a, Vertex origin = 0) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1, a});
    return WeightedGraph(n, std::move(edges), origin);
}

inline WeightedGraph build_cycle(std::size_t n, double a) {
    if (n < 3) throw std::invalid_argument("cycle needs at least 3 vertices");
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n, a});
    return WeightedGraph(n, std::move(edges), 0);
}

inline WeightedGraph build_complete(std::size_t n, double a) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j, a});
    return WeightedGraph(n, std::move(edges), 0);
}

/// Star with centre 0 (the origin) and k leaves.
inline WeightedGraph build_star(std::size_t k, double a) {
    std::vector<Edge> edges;
    for (std::size_t i = 1; i <= k; ++i) edges.push_back({0, i, a});
    return WeightedGraph(k + 1, std::move(edges), 0);
}

/// Induced subgraph of Z^2 on the l1 ball of the given radius around (0,0).
inline WeightedGraph build_diamond(int radius, double a = 1.0) {
    if (radius < 0) throw std::invalid_argument("ball radius must be nonnegative");
    std::vector<std::optional<Coord>> coords;
    std::map<Coord, Vertex> index;
    for (int y = -radius; y <= radius; ++y)
        for (int x = -radius; x <= radius; ++x)
            if (std::abs(x) + std::abs(y) <= radius) {
                index.emplace(Coord{x, y}, coords.size());
                coords.emplace_back(Coord{x, y});
            }
    std::vector<Edge> edges;
    for (const auto& [c, v] : index) {
        if (auto it = index.find({c.x + 1, c.y}); it != index.end()) edges.push_back({v, it->second, a});
        if (auto it = index.find({c.x, c.y + 1}); it != index.end()) edges.push_back({v, it->second, a});
    }
    const Vertex o = index.at({0, 0});
    const std::size_t n = coords.size();
    return WeightedGraph(n, std::move(edges), o, std::move(coords));
}

inline nlohmann::json to_json(const WeightedGraph& g) {
    nlohmann::json vertices = nlohmann::json::array();
    for (Vertex v = 0; v < g.size(); ++v) {
        nlohmann::json jv{{"id", v}};
        if (auto c = g.coord(v)) jv["coord"] = {c->x, c->y};
        vertices.push_back(std::move(jv));
    }
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : g.edges()) edges.push_back({{"a", e.a}, {"b", e.b}, {"w", e.weight}});
    return {{"vertices", vertices}, {"edges", edges}, {"origin", g.origin()}};
}

inline WeightedGraph graph_from_json(const nlohmann::json& j) {
    const auto& jv = j.at("vertices");
    std::vector<std::optional<Coord>> coords(jv.size());
    for (const auto& v : jv) {
        const auto id = v.at("id").get<std::size_t>();
        if (id >= coords.size()) throw std::invalid_argument("vertex id out of range");
        if (v.contains("coord")) coords[id] = Coord{v["coord"][0].get<int>(), v["coord"][1].get<int>()};
    }
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges"))
        edges.push_back({e.at("a").get<Vertex>(), e.at("b").get<Vertex>(), e.at("w").get<double>()});
    const std::size_t n = coords.size();
    return WeightedGraph(n, std::move(edges), j.at("origin").get<Vertex>(), std::move(coords));
}

}  // namespace vrjp
