#pragma once

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hyplan/effort.hpp"
#include "hyplan/prediction.hpp"
#include "hyplan/world.hpp"

namespace hyplan {

struct PathPlanConfig {
    double resolution = 0.2;  // m/cell
    int heading_bins = 16;
    double arc_length = 1.0;         // m per motion primitive
    double cell_cost_weight = 5.0;   // g-cost multiplier on summed cell costs
    double steer_change_weight = 0.02;  // per degree of |delta steer|
    double ped_cost_radius = 1.0;    // m around predicted positions
    double ped_cost_base = 0.8;
    double ped_cost_decay = 0.9;     // per horizon step
    double budget_ms = 50.0;         // virtual budget for the anytime schedule
    double goal_radius = 2.0;        // matches RewardConfig::d_goal
    std::vector<double> weights = {2.0, 1.5, 1.2, 1.0};
    double wheelbase = 2.5;
};

constexpr double kSteerPrimitives[5] = {-50.0, -25.0, 0.0, 25.0, 50.0};

struct Costmap {
    Vec2 origin;  // world position of cell (0, 0) corner
    double resolution = 0.2;
    int width = 0;
    int height = 0;
    std::vector<float> cost;   // [y * width + x], in [0, 1]
    std::vector<uint8_t> blocked;

    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    int index(int x, int y) const { return y * width + x; }
    int cell_x(double wx) const {
        return static_cast<int>(std::floor((wx - origin.x) / resolution));
    }
    int cell_y(double wy) const {
        return static_cast<int>(std::floor((wy - origin.y) / resolution));
    }
    Vec2 cell_center(int x, int y) const {
        return {origin.x + (x + 0.5) * resolution, origin.y + (y + 0.5) * resolution};
    }
};

struct PathPose {
    Vec2 pos;
    double heading = 0.0;
    double steer_deg = 0.0;  // primitive that leads into this pose (0 for the first)
};

struct PlannedPath {
    std::vector<PathPose> poses;
    double cost = 0.0;
};

struct NoPath : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Costmap build_costmap(const AgentState& ego, const std::vector<Rect>& obstacles,
                      const TrajPrediction& preds, const PathPlanConfig& cfg);

// Discrete lattice state of the hybrid A* search: grid cell, heading bin and
// the last applied primitive (for the steer-change cost term).
struct LatticeState {
    int x = 0;
    int y = 0;
    int heading = 0;
    int steer = 2;  // index into kSteerPrimitives; 2 = straight

    bool operator==(const LatticeState& o) const {
        return x == o.x && y == o.y && heading == o.heading && steer == o.steer;
    }
};

struct LatticeEdge {
    LatticeState to;
    double cost = 0.0;
    int steer = 2;
};

// Expands the motion primitives from the canonical pose of `s`. Exposed so
// tests can run an independent Dijkstra over the identical graph.
std::vector<LatticeEdge> lattice_successors(const LatticeState& s, const Costmap& map,
                                            const PathPlanConfig& cfg);

double lattice_heuristic(const LatticeState& s, const Vec2& goal, const Costmap& map,
                         const PathPlanConfig& cfg);

bool lattice_at_goal(const LatticeState& s, const Vec2& goal, const Costmap& map,
                     const PathPlanConfig& cfg);

struct AstarResult {
    PlannedPath path;
    std::vector<double> schedule_costs;  // best cost found per anytime weight
    int expansions = 0;
    double virtual_ms = 0.0;
};

AstarResult hybrid_astar(const AgentState& start, const Vec2& goal, const Costmap& map,
                         const PathPlanConfig& cfg);

double extract_steering(const PlannedPath& path);

}  // namespace hyplan
