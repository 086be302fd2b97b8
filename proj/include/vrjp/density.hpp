#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "vrjp/graph.hpp"

namespace vrjp {

/// Environment field u on the vertices, pinned to 0 at the origin.
class UField {
public:
    UField() = default;

    explicit UField(const WeightedGraph& g) : origin_(g.origin()), values_(g.size(), 0.0) {}

    UField(Vertex origin, std::vector<double> values) : origin_(origin), values_(std::move(values)) {
        if (origin_ >= values_.size()) throw std::invalid_argument("origin outside field");
        if (values_[origin_] != 0.0) throw std::invalid_argument("field must vanish at the origin");
        for (double v : values_)
            if (!std::isfinite(v)) throw std::invalid_argument("field entries must be finite");
    }

    /// Builds a field from its values on G \ {o}, in free_vertices() order.
    static UField from_free(const WeightedGraph& g, std::span<const double> free) {
        if (free.size() + 1 != g.size()) throw std::invalid_argument("free coordinate count mismatch");
        std::vector<double> full(g.size(), 0.0);
        std::size_t i = 0;
        for (Vertex v = 0; v < g.size(); ++v)
            if (v != g.origin()) full[v] = free[i++];
        return UField(g.origin(), std::move(full));
    }

    double operator[](Vertex v) const { return values_[v]; }
    std::size_t size() const { return values_.size(); }
    Vertex origin() const { return origin_; }
    std::span<const double> values() const { return values_; }

    void set(Vertex v, double value) {
        if (v == origin_) throw std::invalid_argument("the origin is pinned at 0");
        values_[v] = value;
    }

    std::vector<double> free_values() const {
        std::vector<double> out;
        out.reserve(values_.size() - 1);
        for (Vertex v = 0; v < values_.size(); ++v)
            if (v != origin_) out.push_back(values_[v]);
        return out;
    }

    friend bool operator==(const UField&, const UField&) = default;

private:
    Vertex origin_ = 0;
    std::vector<double> values_;
};

inline nlohmann::json to_json(const UField& u) {
    nlohmann::json j = nlohmann::json::object();
    for (Vertex v = 0; v < u.size(); ++v) j[std::to_string(v)] = u[v];
    return j;
}

/// The magic-formula density on a weighted graph. `removed` selects the
/// diagonal minor of the Laplacian; every choice gives the same determinant.
struct DensityModel {
    WeightedGraph graph;
    Vertex removed;

    explicit DensityModel(WeightedGraph g, std::optional<Vertex> removed_vertex = std::nullopt)
        : graph(std::move(g)), removed(removed_vertex.value_or(graph.origin())) {
        if (removed >= graph.size()) throw std::invalid_argument("removed vertex is not in the graph");
    }
};

class NumericalFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The matrix A with a_xy = -W_xy e^{u_x+u_y} on edges and zero row sums.
inline Eigen::MatrixXd laplacian_matrix(const DensityModel& model, const UField& u) {
    const auto& g = model.graph;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g.size()));
    for (const auto& e : g.edges()) {
        const double w = e.weight * std::exp(u[e.a] + u[e.b]);
        const auto i = static_cast<Eigen::Index>(e.a), j = static_cast<Eigen::Index>(e.b);
        a(i, j) -= w;
        a(j, i) -= w;
        a(i, i) += w;
        a(j, j) += w;
    }
    return a;
}

/// Sparse LDL^T factorization of the minor A_r, computed by eliminating
/// vertices of the weighted graph with conductances c_xy = W_xy e^{u_x+u_y}
/// (vertex r grounded). Each pivot is the total conductance from the vertex
/// being eliminated to the rest of the reduced network, a sum of positive
/// terms, so no pivot is formed by cancellation even when e^{u} spans many
/// decades. The elimination order (minimum degree) and the fill pattern are
/// fixed at construction; factorize() only redoes the numbers.
class SparseMinorFactor {
public:
    SparseMinorFactor(const WeightedGraph& g, Vertex removed) : g_(&g), removed_(removed) {
        if (removed >= g.size()) throw std::invalid_argument("removed vertex is not in the graph");
        symbolic();
    }

    /// Refactorizes at u. Throws NumericalFailure if a pivot is not a
    /// positive finite number (only possible when conductances overflow).
    void factorize(const UField& u) {
        const auto& g = *g_;
        const std::size_t n = order_.size();
        shift_ = 0.0;
        for (double v : u.values()) shift_ = std::max(shift_, v);
        std::fill(value_.begin(), value_.end(), 0.0);
        ground_.assign(n, 0.0);
        for (std::size_t k = 0; k < g.edge_count(); ++k) {
            const auto& e = g.edge(k);
            conductance_[k] = e.weight * std::exp(u[e.a] + u[e.b] - 2.0 * shift_);
            if (edge_slot_[k] >= 0)
                value_[static_cast<std::size_t>(edge_slot_[k])] += conductance_[k];
            else
                ground_[static_cast<std::size_t>(pos_[e.a == removed_ ? e.b : e.a])] += conductance_[k];
        }

        double log_det = 0.0;
        std::size_t next_update = 0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto begin = col_ptr_[k], end = col_ptr_[k + 1];
            double total = ground_[k];
            for (auto p = begin; p < end; ++p) total += value_[p];
            if (!(total > 0.0) || !std::isfinite(total)) throw NumericalFailure("minor is not positive definite");
            pivot_[k] = total;
            log_det += std::log(total);
            for (auto pa = begin; pa < end; ++pa) {
                const double ca = value_[pa] / total;
                ground_[row_[pa]] += ca * ground_[k];
                for (auto pb = pa + 1; pb < end; ++pb) value_[update_slot_[next_update++]] += ca * value_[pb];
            }
            for (auto p = begin; p < end; ++p) lower_[p] = -value_[p] / total;
        }
        log_det_ = log_det + 2.0 * shift_ * static_cast<double>(n);
        factored_ = true;
    }

    /// log D(W,u) for the last factorized u.
    double log_det_a() const { return log_det_; }
    Vertex removed() const { return removed_; }
    std::size_t fill() const { return row_.size(); }

    /// Diagonal of A_r^{-1} indexed by vertex (NaN at the removed vertex).
    std::vector<double> inverse_diagonal() const {
        const auto sig = selected_inverse();
        const double scale = std::exp(-2.0 * shift_);
        std::vector<double> out(g_->size(), std::numeric_limits<double>::quiet_NaN());
        for (Vertex v = 0; v < g_->size(); ++v)
            if (v != removed_) out[v] = scale * sig.diag[static_cast<std::size_t>(pos_[v])];
        return out;
    }

    /// For each edge e = xy, beta_e R_e where R_e is the effective resistance
    /// of e in the network beta: the probability that e belongs to a
    /// beta-weighted random spanning tree. Also d log D / d log beta_e.
    std::vector<double> edge_tree_probabilities() const {
        const auto sig = selected_inverse();
        const auto& g = *g_;
        std::vector<double> out(g.edge_count());
        for (std::size_t k = 0; k < g.edge_count(); ++k) {
            const auto& e = g.edge(k);
            double r;
            if (edge_slot_[k] >= 0) {
                r = sig.diag[static_cast<std::size_t>(pos_[e.a])] + sig.diag[static_cast<std::size_t>(pos_[e.b])] -
                    2.0 * sig.off[static_cast<std::size_t>(edge_slot_[k])];
            } else {
                r = sig.diag[static_cast<std::size_t>(pos_[e.a == removed_ ? e.b : e.a])];
            }
            out[k] = std::clamp(conductance_[k] * r, 0.0, 1.0);
        }
        return out;
    }

private:
    struct Selected {
        std::vector<double> diag;
        std::vector<double> off;
    };

    void symbolic() {
        const auto& g = *g_;
        const std::size_t n = g.size() - 1;
        pos_.assign(g.size(), -1);

        // Minimum-degree elimination on the graph with r removed; ties go to
        // the smallest vertex id so the order is deterministic.
        std::vector<std::set<Vertex>> adj(g.size());
        for (const auto& e : g.edges()) {
            if (e.a == removed_ || e.b == removed_) continue;
            adj[e.a].insert(e.b);
            adj[e.b].insert(e.a);
        }
        std::set<std::pair<std::size_t, Vertex>> queue;
        for (Vertex v = 0; v < g.size(); ++v)
            if (v != removed_) queue.emplace(adj[v].size(), v);
        std::vector<std::vector<Vertex>> fronts;
        fronts.reserve(n);
        while (!queue.empty()) {
            const Vertex v = queue.begin()->second;
            queue.erase(queue.begin());
            pos_[v] = static_cast<int>(order_.size());
            order_.push_back(v);
            std::vector<Vertex> front(adj[v].begin(), adj[v].end());
            for (Vertex x : front) {
                queue.erase({adj[x].size(), x});
                adj[x].erase(v);
                for (Vertex y : front)
                    if (y != x) adj[x].insert(y);
                queue.emplace(adj[x].size(), x);
            }
            adj[v].clear();
            fronts.push_back(std::move(front));
        }

        col_ptr_.assign(n + 1, 0);
        for (std::size_t k = 0; k < n; ++k) {
            auto& f = fronts[k];
            std::vector<std::size_t> rows;
            for (Vertex x : f) rows.push_back(static_cast<std::size_t>(pos_[x]));
            std::sort(rows.begin(), rows.end());
            row_.insert(row_.end(), rows.begin(), rows.end());
            col_ptr_[k + 1] = row_.size();
        }
        auto slot = [&](std::size_t col, std::size_t row) {
            const auto first = row_.begin() + static_cast<std::ptrdiff_t>(col_ptr_[col]);
            const auto last = row_.begin() + static_cast<std::ptrdiff_t>(col_ptr_[col + 1]);
            const auto it = std::lower_bound(first, last, row);
            if (it == last || *it != row) throw std::logic_error("fill pattern is not closed");
            return static_cast<std::size_t>(it - row_.begin());
        };
        update_ptr_.assign(n + 1, 0);
        for (std::size_t k = 0; k < n; ++k) {
            update_ptr_[k] = update_slot_.size();
            for (auto pa = col_ptr_[k]; pa < col_ptr_[k + 1]; ++pa)
                for (auto pb = pa + 1; pb < col_ptr_[k + 1]; ++pb) update_slot_.push_back(slot(row_[pa], row_[pb]));
        }
        update_ptr_[n] = update_slot_.size();

        edge_slot_.assign(g.edge_count(), -1);
        for (std::size_t k = 0; k < g.edge_count(); ++k) {
            const auto& e = g.edge(k);
            if (e.a == removed_ || e.b == removed_) continue;
            const auto pa = static_cast<std::size_t>(pos_[e.a]), pb = static_cast<std::size_t>(pos_[e.b]);
            edge_slot_[k] = static_cast<long>(slot(std::min(pa, pb), std::max(pa, pb)));
        }
        value_.assign(row_.size(), 0.0);
        lower_.assign(row_.size(), 0.0);
        pivot_.assign(n, 0.0);
        conductance_.assign(g.edge_count(), 0.0);
    }

    // Takahashi's recurrence: the entries of (L D L^T)^{-1} on the filled
    // pattern, in the scaled units of the last factorization.
    Selected selected_inverse() const {
        if (!factored_) throw std::logic_error("factorize() has not been called");
        const std::size_t n = order_.size();
        Selected s{std::vector<double>(n, 0.0), std::vector<double>(row_.size(), 0.0)};
        // The rows of column j form a clique of the filled pattern, so every
        // entry needed below sits at an update slot recorded by symbolic().
        for (std::size_t j = n; j-- > 0;) {
            const auto begin = col_ptr_[j], end = col_ptr_[j + 1];
            for (auto pa = begin; pa < end; ++pa) s.off[pa] = -lower_[pa] * s.diag[row_[pa]];
            std::size_t next = update_ptr_[j];
            for (auto pa = begin; pa < end; ++pa)
                for (auto pb = pa + 1; pb < end; ++pb) {
                    const double sigma = s.off[update_slot_[next++]];
                    s.off[pa] -= lower_[pb] * sigma;
                    s.off[pb] -= lower_[pa] * sigma;
                }
            double d = 1.0 / pivot_[j];
            for (auto pa = begin; pa < end; ++pa) d -= lower_[pa] * s.off[pa];
            s.diag[j] = d;
        }
        return s;
    }

    const WeightedGraph* g_;
    Vertex removed_;
    std::vector<int> pos_;
    std::vector<Vertex> order_;
    std::vector<std::size_t> col_ptr_;
    std::vector<std::size_t> row_;
    std::vector<std::size_t> update_slot_;
    std::vector<std::size_t> update_ptr_;
    std::vector<long> edge_slot_;
    std::vector<double> value_;
    std::vector<double> lower_;
    std::vector<double> pivot_;
    std::vector<double> ground_;
    std::vector<double> conductance_;
    double shift_ = 0.0;
    double log_det_ = 0.0;
    bool factored_ = false;
};

/// log D(W,u): log of the determinant of the diagonal minor of A.
inline double minor_log_determinant(const DensityModel& model, const UField& u) {
    SparseMinorFactor f(model.graph, model.removed);
    f.factorize(u);
    return f.log_det_a();
}

inline double minor_determinant(const DensityModel& model, const UField& u) {
    return std::exp(minor_log_determinant(model, u));
}

/// Weighted spanning-tree sum  sum_T prod_{xy in T} W_xy e^{u_x+u_y}  by
/// explicit enumeration. Exponential cost; refuses graphs above `cap` vertices.
inline double spanning_tree_sum(const DensityModel& model, const UField& u, std::size_t cap = 8) {
    const auto& g = model.graph;
    if (g.size() > cap) throw std::invalid_argument("spanning tree enumeration above the vertex cap");
    if (g.size() == 1) return 1.0;
    const auto edges = g.edges();
    std::vector<double> factor(edges.size());
    for (std::size_t i = 0; i < edges.size(); ++i)
        factor[i] = edges[i].weight * std::exp(u[edges[i].a] + u[edges[i].b]);

    const std::size_t need = g.size() - 1;
    std::vector<Vertex> parent(g.size());
    auto find = [&](Vertex v) {
        while (parent[v] != v) v = parent[v];
        return v;
    };
    std::vector<std::size_t> chosen;
    double total = 0.0;
    // Depth-first over edge subsets in index order; a partial forest is
    // extended only by edges that join two components.
    auto recurse = [&](auto&& self, std::size_t next, double product) -> void {
        if (chosen.size() == need) {
            total += product;
            return;
        }
        if (edges.size() - next < need - chosen.size()) return;
        for (std::size_t i = next; i < edges.size(); ++i) {
            std::iota(parent.begin(), parent.end(), Vertex{0});
            for (auto c : chosen) parent[find(edges[c].a)] = find(edges[c].b);
            if (find(edges[i].a) == find(edges[i].b)) continue;
            chosen.push_back(i);
            self(self, i + 1, product * factor[i]);
            chosen.pop_back();
        }
    };
    recurse(recurse, 0, 1.0);
    return total;
}

namespace detail {

inline double field_energy(const WeightedGraph& g, const UField& u) {
    double s = 0.0;
    for (const auto& e : g.edges()) s += e.weight * (std::cosh(u[e.a] - u[e.b]) - 1.0);
    return s;
}

inline double field_sum(const UField& u) {
    double s = 0.0;
    for (double v : u.values()) s += v;
    return s;
}

inline double log_normalizer(const WeightedGraph& g) {
    return 0.5 * static_cast<double>(g.size() - 1) * std::log(2.0 * std::numbers::pi);
}

}  // namespace detail

namespace detail {

// Fields whose energy is this large sit where the density underflows; the
// minor can then lose its pivots to overflow in e^{u_y-u_x}, so report -inf
// instead of a factorization failure.
inline constexpr double negligible_energy = 1e6;

inline double log_density_with_energy(const DensityModel& model, const UField& u, double energy) {
    if (!(energy < negligible_energy)) return -std::numeric_limits<double>::infinity();
    double log_d = 0.0;
    try {
        log_d = minor_log_determinant(model, u);
    } catch (const NumericalFailure&) {
        if (energy > 1e3) return -std::numeric_limits<double>::infinity();
        throw;
    }
    return -field_sum(u) - energy + 0.5 * log_d - log_normalizer(model.graph);
}

}  // namespace detail

/// log rho(u) = -sum u - sum W (cosh(u_x-u_y) - 1) + 1/2 log D - (|G|-1)/2 log 2pi.
inline double log_density(const DensityModel& model, const UField& u) {
    return detail::log_density_with_energy(model, u, detail::field_energy(model.graph, u));
}

/// Same density written with 2 sinh^2((u_x-u_y)/2) in place of cosh(u_x-u_y) - 1.
inline double log_density_sinh_form(const DensityModel& model, const UField& u) {
    double energy = 0.0;
    for (const auto& e : model.graph.edges()) {
        const double s = std::sinh(0.5 * (u[e.a] - u[e.b]));
        energy += e.weight * 2.0 * s * s;
    }
    return detail::log_density_with_energy(model, u, energy);
}

/// Log-density and gradient evaluator that reuses one symbolic factorization.
class DensityEvaluator {
public:
    explicit DensityEvaluator(const DensityModel& model)
        : model_(&model), factor_(model.graph, model.removed), free_(model.graph.free_vertices()) {}

    double log_density(const UField& u) {
        factor_.factorize(u);
        return current_log_density(u);
    }

    /// Fills `grad` (free-vertex order) and returns log rho(u).
    double log_density_and_gradient(const UField& u, Eigen::VectorXd& grad) {
        factor_.factorize(u);
        const auto& g = model_->graph;
        const auto p = factor_.edge_tree_probabilities();
        grad.resize(static_cast<Eigen::Index>(free_.size()));
        for (std::size_t i = 0; i < free_.size(); ++i) {
            const Vertex z = free_[i];
            double sinh_sum = 0.0, dlog_d = 0.0;
            for (const auto& nb : g.neighbours(z)) {
                sinh_sum += nb.weight * std::sinh(u[z] - u[nb.to]);
                dlog_d += p[nb.edge];
            }
            grad[static_cast<Eigen::Index>(i)] = -1.0 - sinh_sum + 0.5 * dlog_d;
        }
        return current_log_density(u);
    }

    const SparseMinorFactor& factor() const { return factor_; }

private:
    double current_log_density(const UField& u) const {
        return -detail::field_sum(u) - detail::field_energy(model_->graph, u) + 0.5 * factor_.log_det_a() -
               detail::log_normalizer(model_->graph);
    }

    const DensityModel* model_;
    SparseMinorFactor factor_;
    std::vector<Vertex> free_;
};

/// Exact gradient of log rho over G \ {o} (free-vertex order).
inline Eigen::VectorXd grad_log_density(const DensityModel& model, const UField& u) {
    DensityEvaluator eval(model);
    Eigen::VectorXd grad;
    eval.log_density_and_gradient(u, grad);
    return grad;
}

/// Hessian of log D(W,u) over G \ {o}. With edge weights beta_e = W_e e^{u_x+u_y},
/// d log D / d log beta_e = beta_e R_e and the second derivative is
/// delta_ef beta_e R_e - (sqrt(beta_e beta_f) b_e^T A_r^{-1} b_f)^2, pulled back
/// through the vertex-edge incidence. Dense; refuses graphs above `cap`.
inline Eigen::MatrixXd hessian_log_minor(const DensityModel& model, const UField& u, std::size_t cap = 64) {
    const auto& g = model.graph;
    if (g.size() > cap) throw std::invalid_argument("dense Hessian above the vertex cap");
    const auto m = static_cast<Eigen::Index>(g.edge_count());
    const auto free = g.free_vertices();
    if (g.size() < 2) return Eigen::MatrixXd(0, 0);

    std::vector<Eigen::Index> row(g.size(), -1);
    Eigen::Index r = 0;
    for (Vertex v = 0; v < g.size(); ++v)
        if (v != model.removed) row[v] = r++;
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(r, r);
    for (const auto& e : g.edges()) {
        if (row[e.a] >= 0) b(row[e.a], row[e.a]) += e.weight * std::exp(u[e.b] - u[e.a]);
        if (row[e.b] >= 0) b(row[e.b], row[e.b]) += e.weight * std::exp(u[e.a] - u[e.b]);
        if (row[e.a] >= 0 && row[e.b] >= 0) {
            b(row[e.a], row[e.b]) -= e.weight;
            b(row[e.b], row[e.a]) -= e.weight;
        }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(b);
    if (llt.info() != Eigen::Success) throw NumericalFailure("minor is not positive definite");

    // Columns are diag(e^{-u}) sqrt(beta_e) (e_x - e_y), so C = cols^T B^{-1} cols.
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(r, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& e = g.edge(static_cast<std::size_t>(k));
        const double sw = std::sqrt(e.weight);
        const double half = 0.5 * (u[e.b] - u[e.a]);
        if (row[e.a] >= 0) cols(row[e.a], k) = sw * std::exp(half);
        if (row[e.b] >= 0) cols(row[e.b], k) = -sw * std::exp(-half);
    }
    const Eigen::MatrixXd c = cols.transpose() * llt.solve(cols);
    Eigen::MatrixXd inner = -c.cwiseProduct(c);
    inner.diagonal() += c.diagonal();

    std::vector<Eigen::Index> col(g.size(), -1);
    for (std::size_t i = 0; i < free.size(); ++i) col[free[i]] = static_cast<Eigen::Index>(i);
    Eigen::MatrixXd incidence = Eigen::MatrixXd::Zero(m, static_cast<Eigen::Index>(free.size()));
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& e = g.edge(static_cast<std::size_t>(k));
        if (col[e.a] >= 0) incidence(k, col[e.a]) = 1.0;
        if (col[e.b] >= 0) incidence(k, col[e.b]) = 1.0;
    }
    return incidence.transpose() * inner * incidence;
}

/// Log-density (unnormalized) of one edge increment s = u_child - u_parent on
/// a tree rooted at the origin. On a tree, D(W,u) is a single product, and the
/// linear terms collapse to -s/2 per edge.
inline double tree_increment_log_density(double s, double w) {
    return -0.5 * s - w * (std::cosh(s) - 1.0);
}

}  // namespace vrjp
