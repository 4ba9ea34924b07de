#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hyplan/geom.hpp"

namespace hyplan {

enum class Acc : int { Accelerate = 0, Decelerate = 1, Maintain = 2 };

constexpr int kNumAccActions = 3;

const char* acc_name(Acc a);
std::optional<Acc> acc_from_name(const std::string& s);

enum class AgentKind : int { Pedestrian = 0, Car = 1 };

struct AgentState {
    Vec2 pos;
    Vec2 goal;
    Vec2 vel;
    double heading = 0.0;  // [0, 2*pi)

    double speed() const { return vel.norm(); }
};

struct ExoAgent {
    AgentState state;
    AgentKind kind = AgentKind::Pedestrian;
};

struct WorldState {
    AgentState ego;
    std::vector<ExoAgent> exo;
    std::vector<Rect> obstacles;  // static over an episode
    int t = 0;
};

struct Action {
    double steer_deg = 0.0;  // magnitude <= 50, sign = turn direction
    Acc acc = Acc::Maintain;
};

struct Observation {
    AgentState ego;
    std::vector<std::optional<Vec2>> exo_pos;  // absent = occluded
};

struct RewardConfig {
    double gamma = 0.98;
    double r_crash = -1000.0;
    double r_near_miss = -200.0;
    double r_goal = 1000.0;
    double r_step = -1.0;
    double r_acc_switch = -0.1;
    double d_crash = 1.3;    // m
    double d_near = 2.0;     // m
    double v_near_min = 0.5; // m/s
    double d_goal = 2.0;     // m
    double dt = 0.25;        // s (4 Hz)
    double v_max_ego = 8.33; // m/s
    double accel_rate = 1.5;  // m/s^2
    double decel_rate = -3.0; // m/s^2
    double wheelbase = 2.5;   // m
};

enum class Outcome : int { Crash = 0, NearMiss = 1, Goal = 2, Timeout = 3 };

const char* outcome_name(Outcome o);

// Rear-axle kinematic bicycle step; speed updated before pose.
AgentState bicycle_step(const AgentState& ego, const Action& a, const RewardConfig& cfg);

// Straight-line motion toward the goal; stops exactly at the goal.
AgentState exo_step(const AgentState& agent, double dt);

// Deterministic world step: ego via bicycle model, exo agents straight-line.
WorldState transition(const WorldState& s, const Action& a, const RewardConfig& cfg);

// Noiseless observation with rectangle occlusion (open-segment rule).
Observation observe(const WorldState& s);

double reward(const WorldState& s, const Action& a, const WorldState& s_next, Acc prev_acc,
              const RewardConfig& cfg);

// Per-state event tests shared by reward and outcome classification.
bool is_crash_state(const WorldState& s, const RewardConfig& cfg);
bool is_near_miss_state(const WorldState& s, const RewardConfig& cfg);
bool is_goal_state(const WorldState& s, const RewardConfig& cfg);

Outcome classify_outcome(const std::vector<WorldState>& episode, const RewardConfig& cfg,
                         int t_max = 120);

}  // namespace hyplan
