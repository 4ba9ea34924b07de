#include "hyplan/pathplan.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <unordered_map>

namespace hyplan {

namespace {

std::uint64_t state_key(const LatticeState& s) {
    // Offsets keep coordinates nonnegative for packing.
    const std::uint64_t x = static_cast<std::uint64_t>(s.x + 32768);
    const std::uint64_t y = static_cast<std::uint64_t>(s.y + 32768);
    return (x << 40) | (y << 16) | (static_cast<std::uint64_t>(s.heading) << 4) |
           static_cast<std::uint64_t>(s.steer);
}

struct OpenItem {
    double f = 0.0;
    double g = 0.0;
    std::uint64_t key = 0;

    bool operator>(const OpenItem& o) const {
        if (f != o.f) return f > o.f;
        if (g != o.g) return g < o.g;  // prefer deeper on f-ties
        return key > o.key;
    }
};

struct NodeRecord {
    double g = std::numeric_limits<double>::infinity();
    std::uint64_t parent = 0;
    bool has_parent = false;
    int steer = 2;
    LatticeState state;
};

}  // namespace

Costmap build_costmap(const AgentState& ego, const std::vector<Rect>& obstacles,
                      const TrajPrediction& preds, const PathPlanConfig& cfg) {
    double xmin = std::min(ego.pos.x, ego.goal.x);
    double xmax = std::max(ego.pos.x, ego.goal.x);
    double ymin = std::min(ego.pos.y, ego.goal.y);
    double ymax = std::max(ego.pos.y, ego.goal.y);
    for (const auto& r : obstacles) {
        xmin = std::min(xmin, r.xmin);
        xmax = std::max(xmax, r.xmax);
        ymin = std::min(ymin, r.ymin);
        ymax = std::max(ymax, r.ymax);
    }
    for (const auto& traj : preds.traj)
        for (const auto& p : traj) {
            xmin = std::min(xmin, p.x);
            xmax = std::max(xmax, p.x);
            ymin = std::min(ymin, p.y);
            ymax = std::max(ymax, p.y);
        }
    const double margin = 6.0;
    xmin -= margin;
    ymin -= margin;
    xmax += margin;
    ymax += margin;

    Costmap map;
    map.resolution = cfg.resolution;
    map.origin = Vec2{std::floor(xmin / cfg.resolution) * cfg.resolution,
                      std::floor(ymin / cfg.resolution) * cfg.resolution};
    map.width = static_cast<int>(std::ceil((xmax - map.origin.x) / cfg.resolution)) + 1;
    map.height = static_cast<int>(std::ceil((ymax - map.origin.y) / cfg.resolution)) + 1;
    map.cost.assign(static_cast<std::size_t>(map.width) * map.height, 0.0f);
    map.blocked.assign(static_cast<std::size_t>(map.width) * map.height, 0);

    for (const auto& r : obstacles) {
        const int x0 = std::max(0, map.cell_x(r.xmin) - 1);
        const int x1 = std::min(map.width - 1, map.cell_x(r.xmax) + 1);
        const int y0 = std::max(0, map.cell_y(r.ymin) - 1);
        const int y1 = std::min(map.height - 1, map.cell_y(r.ymax) + 1);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x)
                if (r.contains(map.cell_center(x, y))) map.blocked[map.index(x, y)] = 1;
    }

    for (const auto& traj : preds.traj) {
        for (std::size_t k = 0; k < traj.size(); ++k) {
            const float c =
                static_cast<float>(cfg.ped_cost_base * std::pow(cfg.ped_cost_decay, double(k)));
            const Vec2& p = traj[k];
            const int x0 = std::max(0, map.cell_x(p.x - cfg.ped_cost_radius));
            const int x1 = std::min(map.width - 1, map.cell_x(p.x + cfg.ped_cost_radius));
            const int y0 = std::max(0, map.cell_y(p.y - cfg.ped_cost_radius));
            const int y1 = std::min(map.height - 1, map.cell_y(p.y + cfg.ped_cost_radius));
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    if (dist(map.cell_center(x, y), p) <= cfg.ped_cost_radius) {
                        auto& cell = map.cost[map.index(x, y)];
                        cell = std::max(cell, c);
                    }
                }
        }
    }
    return map;
}

std::vector<LatticeEdge> lattice_successors(const LatticeState& s, const Costmap& map,
                                            const PathPlanConfig& cfg) {
    std::vector<LatticeEdge> edges;
    const double bin = kTwoPi / cfg.heading_bins;
    const Vec2 start = map.cell_center(s.x, s.y);
    const double theta0 = s.heading * bin;

    for (int pi = 0; pi < 5; ++pi) {
        const double steer_deg = kSteerPrimitives[pi];
        const double kappa = std::tan(steer_deg * kPi / 180.0) / cfg.wheelbase;

        double cell_sum = 0.0;
        bool valid = true;
        int last_cell = -1;
        const int samples = 20;
        Vec2 end = start;
        double theta_end = theta0;
        for (int i = 1; i <= samples; ++i) {
            const double ds = cfg.arc_length * i / samples;
            double px, py;
            if (std::abs(kappa) < 1e-12) {
                px = start.x + ds * std::cos(theta0);
                py = start.y + ds * std::sin(theta0);
                theta_end = theta0;
            } else {
                theta_end = theta0 + kappa * ds;
                px = start.x + (std::sin(theta_end) - std::sin(theta0)) / kappa;
                py = start.y - (std::cos(theta_end) - std::cos(theta0)) / kappa;
            }
            const int cx = map.cell_x(px);
            const int cy = map.cell_y(py);
            if (!map.in_bounds(cx, cy)) {
                valid = false;
                break;
            }
            const int idx = map.index(cx, cy);
            if (idx != last_cell && !(cx == s.x && cy == s.y)) {
                if (map.blocked[idx]) {
                    valid = false;
                    break;
                }
                cell_sum += map.cost[idx];
                last_cell = idx;
            }
            end = Vec2{px, py};
        }
        if (!valid) continue;

        LatticeEdge e;
        e.to.x = map.cell_x(end.x);
        e.to.y = map.cell_y(end.y);
        const double norm = normalize_angle(theta_end);
        e.to.heading = static_cast<int>(std::lround(norm / bin)) % cfg.heading_bins;
        e.to.steer = pi;
        e.steer = pi;
        if (e.to.x == s.x && e.to.y == s.y && e.to.heading == s.heading && e.to.steer == s.steer)
            continue;
        const double dsteer = std::abs(steer_deg - kSteerPrimitives[s.steer]);
        e.cost = cfg.arc_length + cfg.cell_cost_weight * cell_sum +
                 cfg.steer_change_weight * dsteer;
        edges.push_back(e);
    }
    return edges;
}

double lattice_heuristic(const LatticeState& s, const Vec2& goal, const Costmap& map,
                         const PathPlanConfig& cfg) {
    // Each 1 m edge can reduce the center distance by at most arc_length plus
    // one quantization jump, so scale down to stay admissible.
    const double slack = 1.0 + map.resolution * 1.4143 / cfg.arc_length;
    const double d = dist(map.cell_center(s.x, s.y), goal) - cfg.goal_radius;
    return std::max(0.0, d) / slack;
}

bool lattice_at_goal(const LatticeState& s, const Vec2& goal, const Costmap& map,
                     const PathPlanConfig& cfg) {
    return dist(map.cell_center(s.x, s.y), goal) < cfg.goal_radius;
}

AstarResult hybrid_astar(const AgentState& start, const Vec2& goal, const Costmap& map,
                         const PathPlanConfig& cfg) {
    AstarResult result;
    VirtualClock clock(cfg.budget_ms);
    const auto& em = effort_model();

    LatticeState s0;
    s0.x = map.cell_x(start.pos.x);
    s0.y = map.cell_y(start.pos.y);
    if (!map.in_bounds(s0.x, s0.y)) throw NoPath("start outside costmap");
    const double bin = kTwoPi / cfg.heading_bins;
    s0.heading = static_cast<int>(std::lround(normalize_angle(start.heading) / bin)) %
                 cfg.heading_bins;
    s0.steer = 2;

    if (dist(start.pos, goal) < cfg.goal_radius) {
        result.path.poses.push_back(PathPose{start.pos, start.heading, 0.0});
        result.path.cost = 0.0;
        result.schedule_costs.assign(cfg.weights.size(), 0.0);
        return result;
    }

    bool found_any = false;
    bool exhausted_without_solution = false;
    double best_cost = std::numeric_limits<double>::infinity();
    PlannedPath best_path;

    for (double w : cfg.weights) {
        if (!clock.has_budget()) break;

        std::unordered_map<std::uint64_t, NodeRecord> nodes;
        std::priority_queue<OpenItem, std::vector<OpenItem>, std::greater<OpenItem>> open;
        auto& root = nodes[state_key(s0)];
        root.g = 0.0;
        root.state = s0;
        open.push(OpenItem{w * lattice_heuristic(s0, goal, map, cfg), 0.0, state_key(s0)});

        bool found = false;
        std::uint64_t goal_key = 0;
        while (!open.empty()) {
            if (clock.would_exceed(em.astar_expand_ms)) break;
            const OpenItem top = open.top();
            open.pop();
            auto it = nodes.find(top.key);
            if (it == nodes.end() || top.g > it->second.g + 1e-12) continue;  // stale entry
            const LatticeState cur = it->second.state;
            const double gcur = it->second.g;

            if (lattice_at_goal(cur, goal, map, cfg)) {
                found = true;
                goal_key = top.key;
                break;
            }

            clock.charge(em.astar_expand_ms);
            ++result.expansions;
            for (const auto& e : lattice_successors(cur, map, cfg)) {
                const double g2 = gcur + e.cost;
                const std::uint64_t k2 = state_key(e.to);
                auto& rec = nodes[k2];
                if (g2 < rec.g - 1e-12) {
                    rec.g = g2;
                    rec.parent = top.key;
                    rec.has_parent = true;
                    rec.steer = e.steer;
                    rec.state = e.to;
                    open.push(OpenItem{g2 + w * lattice_heuristic(e.to, goal, map, cfg), g2, k2});
                }
            }
        }

        if (found) {
            const double cost = nodes[goal_key].g;
            if (cost < best_cost) {
                best_cost = cost;
                // Reconstruct: chain of lattice states, ego pose first.
                std::vector<std::pair<LatticeState, int>> chain;
                std::uint64_t k = goal_key;
                while (true) {
                    const auto& rec = nodes[k];
                    chain.emplace_back(rec.state, rec.steer);
                    if (!rec.has_parent) break;
                    k = rec.parent;
                }
                std::reverse(chain.begin(), chain.end());
                best_path.poses.clear();
                best_path.poses.push_back(PathPose{start.pos, start.heading, 0.0});
                for (std::size_t i = 1; i < chain.size(); ++i) {
                    const auto& [st, steer] = chain[i];
                    best_path.poses.push_back(PathPose{map.cell_center(st.x, st.y),
                                                       st.heading * bin,
                                                       kSteerPrimitives[steer]});
                }
                best_path.cost = cost;
            }
            found_any = true;
        } else if (open.empty()) {
            // Open list exhausted: the graph has no path at all.
            exhausted_without_solution = !found_any;
            break;
        }
        result.schedule_costs.push_back(found_any ? best_cost
                                                  : std::numeric_limits<double>::infinity());
    }

    result.virtual_ms = clock.used_ms();
    if (!found_any) {
        if (exhausted_without_solution) throw NoPath("open list exhausted");
        throw NoPath("budget exhausted before any solution");
    }
    result.path = std::move(best_path);
    return result;
}

double extract_steering(const PlannedPath& path) {
    if (path.poses.size() < 2) return 0.0;
    return path.poses[1].steer_deg;
}

}  // namespace hyplan
