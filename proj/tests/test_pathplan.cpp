#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <queue>
#include <set>

#include "hyplan/pathplan.hpp"
#include "hyplan/rng.hpp"

using namespace hyplan;

namespace {

AgentState make_ego(Vec2 pos, double heading) {
    AgentState s;
    s.pos = pos;
    s.heading = heading;
    s.vel = Vec2{std::cos(heading), std::sin(heading)} * 3.0;
    return s;
}

Costmap empty_map(double side, const PathPlanConfig& cfg) {
    Costmap map;
    map.resolution = cfg.resolution;
    map.origin = Vec2{-side / 2, -side / 2};
    map.width = static_cast<int>(side / cfg.resolution) + 1;
    map.height = static_cast<int>(side / cfg.resolution) + 1;
    map.cost.assign(static_cast<std::size_t>(map.width) * map.height, 0.0f);
    map.blocked.assign(static_cast<std::size_t>(map.width) * map.height, 0);
    return map;
}

std::uint64_t key_of(const LatticeState& s) {
    return (static_cast<std::uint64_t>(s.x + 4096) << 40) |
           (static_cast<std::uint64_t>(s.y + 4096) << 16) |
           (static_cast<std::uint64_t>(s.heading) << 4) | static_cast<std::uint64_t>(s.steer);
}

// Independent exhaustive Dijkstra over the identical primitive graph.
double dijkstra_cost(const LatticeState& start, const Vec2& goal, const Costmap& map,
                     const PathPlanConfig& cfg) {
    std::map<std::uint64_t, double> dist;
    using Item = std::pair<double, std::uint64_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<Item>> open;
    std::map<std::uint64_t, LatticeState> states;
    dist[key_of(start)] = 0.0;
    states[key_of(start)] = start;
    open.emplace(0.0, key_of(start));
    while (!open.empty()) {
        const auto [g, k] = open.top();
        open.pop();
        if (g > dist[k] + 1e-12) continue;
        const LatticeState cur = states[k];
        if (lattice_at_goal(cur, goal, map, cfg)) return g;
        for (const auto& e : lattice_successors(cur, map, cfg)) {
            const auto k2 = key_of(e.to);
            const double g2 = g + e.cost;
            auto it = dist.find(k2);
            if (it == dist.end() || g2 < it->second - 1e-12) {
                dist[k2] = g2;
                states[k2] = e.to;
                open.emplace(g2, k2);
            }
        }
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace

TEST_CASE("costmap construction") {
    PathPlanConfig cfg;
    AgentState ego = make_ego({0, 0}, 0.0);
    ego.goal = {10, 0};

    SUBCASE("no exo, no obstacles: all zero") {
        const Costmap map = build_costmap(ego, {}, TrajPrediction{}, cfg);
        for (const float c : map.cost) CHECK(c == 0.0f);
        for (const auto b : map.blocked) CHECK(b == 0);
        CHECK(map.in_bounds(map.cell_x(0), map.cell_y(0)));
        CHECK(map.in_bounds(map.cell_x(10), map.cell_y(0)));
    }
    SUBCASE("obstacle rasterization covers exactly its cells") {
        std::vector<Rect> obstacles{{2.0, 1.0, 4.0, 2.0}};
        const Costmap map = build_costmap(ego, obstacles, TrajPrediction{}, cfg);
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x) {
                const Vec2 c = map.cell_center(x, y);
                const bool inside = obstacles[0].contains(c);
                CHECK(map.blocked[map.index(x, y)] == (inside ? 1 : 0));
            }
    }
    SUBCASE("prediction decay costs") {
        TrajPrediction preds;
        preds.traj = {{}};
        for (int k = 0; k < 12; ++k) preds.traj[0].push_back(Vec2{k * 3.0, 3.0});
        const Costmap map = build_costmap(ego, {}, preds, cfg);
        const int x0 = map.cell_x(0.0), y0 = map.cell_y(3.0);
        CHECK(map.cost[map.index(x0, y0)] == doctest::Approx(0.8));
        const int x10 = map.cell_x(30.0), y10 = map.cell_y(3.0);
        CHECK(map.cost[map.index(x10, y10)] ==
              doctest::Approx(0.8 * std::pow(0.9, 10)).epsilon(1e-6));
        CHECK(map.cost[map.index(x10, y10)] == doctest::Approx(0.279).epsilon(1e-2));
    }
}

TEST_CASE("straight line on an empty map") {
    PathPlanConfig cfg;
    Costmap map = empty_map(30.0, cfg);
    const AgentState ego = make_ego({-5, 0}, 0.0);
    const auto res = hybrid_astar(ego, Vec2{5, 0}, map, cfg);
    CHECK(res.path.cost <= 10.0 + 2.0 * cfg.resolution);
    CHECK(res.path.poses.size() >= 8);
    CHECK(res.path.poses.front().pos == ego.pos);
    // Straight primitives only.
    for (std::size_t i = 1; i < res.path.poses.size(); ++i)
        CHECK(res.path.poses[i].steer_deg == 0.0);
    CHECK(extract_steering(res.path) == 0.0);
}

TEST_CASE("walled goal yields NoPath") {
    PathPlanConfig cfg;
    Costmap map = empty_map(20.0, cfg);
    // Solid box around the goal.
    for (int y = 0; y < map.height; ++y)
        for (int x = 0; x < map.width; ++x) {
            const Vec2 c = map.cell_center(x, y);
            if (std::abs(c.x - 6.0) <= 3.5 && std::abs(c.y) <= 3.5 &&
                !(std::abs(c.x - 6.0) <= 2.5 && std::abs(c.y) <= 2.5))
                map.blocked[map.index(x, y)] = 1;
        }
    const AgentState ego = make_ego({-7, 0}, 0.0);
    CHECK_THROWS_AS(hybrid_astar(ego, Vec2{6, 0}, map, cfg), NoPath);
}

TEST_CASE("start outside the map throws") {
    PathPlanConfig cfg;
    Costmap map = empty_map(10.0, cfg);
    CHECK_THROWS_AS(hybrid_astar(make_ego({100, 100}, 0), Vec2{0, 0}, map, cfg), NoPath);
}

TEST_CASE("w=1 equals exhaustive Dijkstra on random 30x30 maps") {
    PathPlanConfig cfg;
    cfg.budget_ms = 0.0;  // no cutoff: criterion checks exact optimality
    Rng rng(99);
    int solved = 0;
    for (int trial = 0; trial < 20; ++trial) {
        Costmap map;
        map.resolution = cfg.resolution;
        map.origin = Vec2{0, 0};
        map.width = 30;
        map.height = 30;
        map.cost.assign(900, 0.0f);
        map.blocked.assign(900, 0);
        for (int i = 0; i < 900; ++i) {
            if (rng.bernoulli(0.05)) map.blocked[i] = 1;
            else if (rng.bernoulli(0.3)) map.cost[i] = static_cast<float>(rng.uniform());
        }
        const AgentState ego = make_ego({0.5, 0.5}, 0.0);
        const Vec2 goal{5.5, 5.5};
        map.blocked[map.index(map.cell_x(0.5), map.cell_y(0.5))] = 0;

        LatticeState start;
        start.x = map.cell_x(ego.pos.x);
        start.y = map.cell_y(ego.pos.y);
        start.heading = 0;
        start.steer = 2;
        const double oracle = dijkstra_cost(start, goal, map, cfg);
        if (!std::isfinite(oracle)) {
            CHECK_THROWS_AS(hybrid_astar(ego, goal, map, cfg), NoPath);
            continue;
        }
        PathPlanConfig w1 = cfg;
        w1.weights = {1.0};
        const auto res = hybrid_astar(ego, goal, map, w1);
        CHECK(std::abs(res.path.cost - oracle) <= 1e-9);
        ++solved;
    }
    CHECK(solved >= 10);
}

TEST_CASE("anytime schedule produces non-increasing best costs") {
    PathPlanConfig cfg;
    Rng rng(123);
    for (int trial = 0; trial < 10; ++trial) {
        Costmap map;
        map.resolution = cfg.resolution;
        map.origin = Vec2{0, 0};
        map.width = 30;
        map.height = 30;
        map.cost.assign(900, 0.0f);
        map.blocked.assign(900, 0);
        for (int i = 0; i < 900; ++i)
            if (rng.bernoulli(0.1)) map.blocked[i] = 1;
        map.blocked[map.index(2, 2)] = 0;
        const AgentState ego = make_ego({0.5, 0.5}, 0.0);
        try {
            const auto res = hybrid_astar(ego, Vec2{5.5, 5.5}, map, cfg);
            for (std::size_t i = 1; i < res.schedule_costs.size(); ++i)
                CHECK(res.schedule_costs[i] <= res.schedule_costs[i - 1] + 1e-12);
            CHECK(res.path.cost == doctest::Approx(res.schedule_costs.back()));
        } catch (const NoPath&) {
            // Random walls may seal the goal; that is fine here.
        }
    }
}

TEST_CASE("paths never enter blocked cells") {
    PathPlanConfig cfg;
    Rng rng(321);
    for (int trial = 0; trial < 10; ++trial) {
        Costmap map;
        map.resolution = cfg.resolution;
        map.origin = Vec2{0, 0};
        map.width = 40;
        map.height = 40;
        map.cost.assign(1600, 0.0f);
        map.blocked.assign(1600, 0);
        for (int i = 0; i < 1600; ++i)
            if (rng.bernoulli(0.15)) map.blocked[i] = 1;
        const AgentState ego = make_ego({0.5, 0.5}, 0.0);
        map.blocked[map.index(map.cell_x(0.5), map.cell_y(0.5))] = 0;
        try {
            const auto res = hybrid_astar(ego, Vec2{7.0, 7.0}, map, cfg);
            for (std::size_t i = 1; i < res.path.poses.size(); ++i) {
                const auto& p = res.path.poses[i];
                CHECK(map.blocked[map.index(map.cell_x(p.pos.x), map.cell_y(p.pos.y))] == 0);
            }
        } catch (const NoPath&) {
        }
    }
}

TEST_CASE("extract_steering") {
    SUBCASE("degenerate single pose") {
        PlannedPath p;
        p.poses.push_back(PathPose{{0, 0}, 0, 0});
        CHECK(extract_steering(p) == 0.0);
    }
    SUBCASE("first primitive label passes through") {
        PlannedPath p;
        p.poses.push_back(PathPose{{0, 0}, 0, 0});
        p.poses.push_back(PathPose{{1, 0.1}, 0.2, 25.0});
        p.poses.push_back(PathPose{{2, 0.3}, 0.4, 50.0});
        CHECK(extract_steering(p) == doctest::Approx(25.0));
    }
    SUBCASE("closed-loop consistency on an empty map") {
        PathPlanConfig cfg;
        Costmap map = empty_map(40.0, cfg);
        AgentState ego = make_ego({-10, 0}, 0.0);
        const Vec2 goal{10, 0};
        const auto first = hybrid_astar(ego, goal, map, cfg);
        CHECK(extract_steering(first.path) == 0.0);
        // Execute the first primitive: advance 1 m straight.
        ego.pos = ego.pos + Vec2{1.0, 0.0};
        const auto second = hybrid_astar(ego, goal, map, cfg);
        CHECK(extract_steering(second.path) == 0.0);
    }
}
