#include <gtest/gtest.h>

#include "vrjp/graph.hpp"
#include "vrjp/rng.hpp"

using namespace vrjp;

TEST(Box2d, DegenerateBoxIsASingleVertex) {
    const auto g = build_box_2d(0, 1.0);
    EXPECT_EQ(g.size(), 1u);
    EXPECT_EQ(g.edge_count(), 0u);
    EXPECT_EQ(g.origin(), g.at({0, 0}));
}

TEST(Box2d, ThreeByThreeHasTwelveEdges) {
    const auto g = build_box_2d(1, 1.0);
    EXPECT_EQ(g.size(), 9u);
    EXPECT_EQ(g.edge_count(), 12u);
}

TEST(Box2d, WeightsReadBack) {
    const auto g = build_box_2d(2, 2.5);
    for (const auto& e : g.edges()) EXPECT_EQ(e.weight, 2.5);
}

TEST(Box2d, RejectsBadParameters) {
    EXPECT_THROW(build_box_2d(-1, 1.0), std::invalid_argument);
    EXPECT_THROW(build_box_2d(2, 0.0), std::invalid_argument);
    EXPECT_THROW(build_box_2d(2, -1.0), std::invalid_argument);
}

TEST(WiredBox, CornerEdgesCarryDoubleWeight) {
    const double a = 0.7;
    const auto g = build_wired_box(1, a);
    EXPECT_EQ(g.size(), 10u);
    const Vertex wired = g.size() - 1;
    EXPECT_DOUBLE_EQ(g.weight(g.at({1, 1}), wired), 2.0 * a);
    EXPECT_EQ(g.degree(wired), 8u);
}

TEST(WiredBox, NonCornerBoundaryEdgeHasWeightA) {
    const auto g = build_wired_box(2, 1.0);
    EXPECT_DOUBLE_EQ(g.weight(g.at({2, 0}), g.size() - 1), 1.0);
    EXPECT_DOUBLE_EQ(g.weight(g.at({1, 0}), g.size() - 1), 0.0);
}

TEST(WiredBox, CountsMatchBoxPlusBoundary) {
    for (int L = 1; L <= 6; ++L) {
        const auto box = build_box_2d(L, 1.0);
        const auto wired = build_wired_box(L, 1.0);
        EXPECT_EQ(wired.size(), static_cast<std::size_t>((2 * L + 1) * (2 * L + 1) + 1));
        const Vertex d = wired.size() - 1;
        EXPECT_EQ(wired.degree(d), static_cast<std::size_t>(8 * L));
        EXPECT_EQ(wired.edge_count() - wired.degree(d), box.edge_count());
        int corners = 0;
        for (const auto& nb : wired.neighbours(d)) corners += nb.weight == 2.0;
        EXPECT_EQ(corners, 4);
    }
    EXPECT_THROW(build_wired_box(0, 1.0), std::invalid_argument);
}

TEST(Distance, Basics) {
    const auto box = build_box_2d(3, 1.0);
    EXPECT_EQ(graph_distance(box, box.origin(), box.origin()), 0);
    EXPECT_EQ(graph_distance(box, box.at({0, 0}), box.at({2, 1})), 3);
    const auto wired = build_wired_box(2, 1.0);
    EXPECT_EQ(graph_distance(wired, wired.origin(), wired.size() - 1), 3);
}

TEST(Distance, BoxDistanceIsL1) {
    const auto g = build_box_2d(3, 1.0);
    for (Vertex x = 0; x < g.size(); ++x) {
        const auto d = g.distances_from(x);
        for (Vertex y = 0; y < g.size(); ++y) EXPECT_EQ(d[y], l1_distance(*g.coord(x), *g.coord(y)));
    }
}

TEST(Distance, TriangleInequalityOnSampledTriples) {
    const auto g = build_wired_box(4, 1.0);
    DistanceTable dist(g);
    auto rng = make_rng(7);
    for (int i = 0; i < 500; ++i) {
        const Vertex x = uniform_index(rng, g.size()), y = uniform_index(rng, g.size()),
                     z = uniform_index(rng, g.size());
        EXPECT_LE(dist(x, z), dist(x, y) + dist(y, z));
        EXPECT_EQ(dist(x, y), dist(y, x));
    }
}

TEST(WeightedGraph, RejectsInvalidInput) {
    EXPECT_THROW(WeightedGraph(3, {{0, 1, 1.0}}, 0), std::invalid_argument);  // disconnected
    EXPECT_THROW(WeightedGraph(2, {{0, 1, 0.0}}, 0), std::invalid_argument);
    EXPECT_THROW(WeightedGraph(2, {{0, 1, 1.0}}, 2), std::invalid_argument);
    EXPECT_THROW(WeightedGraph(2, {{0, 1, 1.0}, {1, 0, 1.0}}, 0), std::invalid_argument);
    EXPECT_THROW(WeightedGraph(2, {{0, 0, 1.0}, {0, 1, 1.0}}, 0), std::invalid_argument);
}

TEST(WeightedGraph, JsonRoundTripPreservesStructure) {
    const auto g = build_wired_box(2, 1.5);
    const auto back = graph_from_json(to_json(g));
    ASSERT_EQ(back.size(), g.size());
    ASSERT_EQ(back.edge_count(), g.edge_count());
    EXPECT_EQ(back.origin(), g.origin());
    for (std::size_t i = 0; i < g.edge_count(); ++i) {
        EXPECT_EQ(back.edge(i).a, g.edge(i).a);
        EXPECT_EQ(back.edge(i).b, g.edge(i).b);
        EXPECT_EQ(back.edge(i).weight, g.edge(i).weight);
    }
    EXPECT_EQ(back.coord(back.origin()), (Coord{0, 0}));
}
