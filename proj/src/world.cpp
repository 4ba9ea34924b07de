#include "hyplan/world.hpp"

#include <limits>

namespace hyplan {

const char* acc_name(Acc a) {
    switch (a) {
        case Acc::Accelerate: return "Accelerate";
        case Acc::Decelerate: return "Decelerate";
        case Acc::Maintain: return "Maintain";
    }
    return "?";
}

std::optional<Acc> acc_from_name(const std::string& s) {
    if (s == "Accelerate") return Acc::Accelerate;
    if (s == "Decelerate") return Acc::Decelerate;
    if (s == "Maintain") return Acc::Maintain;
    return std::nullopt;
}

const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Crash: return "Crash";
        case Outcome::NearMiss: return "NearMiss";
        case Outcome::Goal: return "Goal";
        case Outcome::Timeout: return "Timeout";
    }
    return "?";
}

AgentState bicycle_step(const AgentState& ego, const Action& a, const RewardConfig& cfg) {
    const double steer = std::clamp(a.steer_deg, -50.0, 50.0);
    double rate = 0.0;
    if (a.acc == Acc::Accelerate) rate = cfg.accel_rate;
    else if (a.acc == Acc::Decelerate) rate = cfg.decel_rate;

    AgentState out = ego;
    const double speed = std::clamp(ego.speed() + rate * cfg.dt, 0.0, cfg.v_max_ego);
    const double steer_rad = steer * kPi / 180.0;
    const double omega = (speed / cfg.wheelbase) * std::tan(steer_rad);
    const double heading = normalize_angle(ego.heading + omega * cfg.dt);
    out.heading = heading;
    const Vec2 dir{std::cos(heading), std::sin(heading)};
    if (std::abs(omega) < 1e-12) {
        out.pos = ego.pos + dir * (speed * cfg.dt);
    } else {
        // Exact constant-curvature arc at the post-update speed.
        const double t0 = ego.heading;
        const double t1 = ego.heading + omega * cfg.dt;
        out.pos = ego.pos + Vec2{(std::sin(t1) - std::sin(t0)) * (speed / omega),
                                 (std::cos(t0) - std::cos(t1)) * (speed / omega)};
    }
    out.vel = dir * speed;
    return out;
}

AgentState exo_step(const AgentState& agent, double dt) {
    if (agent.pos == agent.goal) return agent;
    const Vec2 to_goal = agent.goal - agent.pos;
    const double d = to_goal.norm();
    const double speed = agent.speed();
    const double step = speed * dt;
    const Vec2 dir = to_goal * (1.0 / d);

    AgentState out = agent;
    out.heading = normalize_angle(std::atan2(dir.y, dir.x));
    out.vel = dir * speed;
    out.pos = (d <= step) ? agent.goal : agent.pos + dir * step;
    return out;
}

WorldState transition(const WorldState& s, const Action& a, const RewardConfig& cfg) {
    WorldState out = s;
    out.ego = bicycle_step(s.ego, a, cfg);
    for (auto& e : out.exo) e.state = exo_step(e.state, cfg.dt);
    out.t = s.t + 1;
    return out;
}

Observation observe(const WorldState& s) {
    Observation o;
    o.ego = s.ego;
    o.exo_pos.reserve(s.exo.size());
    for (const auto& e : s.exo) {
        bool visible = true;
        for (const auto& r : s.obstacles) {
            if (segment_crosses_rect(s.ego.pos, e.state.pos, r)) {
                visible = false;
                break;
            }
        }
        o.exo_pos.push_back(visible ? std::optional<Vec2>(e.state.pos) : std::nullopt);
    }
    return o;
}

static double min_ped_distance(const WorldState& s) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : s.exo) {
        if (e.kind != AgentKind::Pedestrian) continue;
        best = std::min(best, dist(s.ego.pos, e.state.pos));
    }
    return best;
}

bool is_crash_state(const WorldState& s, const RewardConfig& cfg) {
    return min_ped_distance(s) < cfg.d_crash;
}

bool is_near_miss_state(const WorldState& s, const RewardConfig& cfg) {
    return min_ped_distance(s) < cfg.d_near && s.ego.speed() > cfg.v_near_min;
}

bool is_goal_state(const WorldState& s, const RewardConfig& cfg) {
    return dist(s.ego.pos, s.ego.goal) < cfg.d_goal;
}

double reward(const WorldState& /*s*/, const Action& a, const WorldState& s_next, Acc prev_acc,
              const RewardConfig& cfg) {
    if (is_crash_state(s_next, cfg)) return cfg.r_crash;
    if (is_near_miss_state(s_next, cfg)) return cfg.r_near_miss;
    if (is_goal_state(s_next, cfg)) return cfg.r_goal;
    return cfg.r_step + (a.acc != prev_acc ? cfg.r_acc_switch : 0.0);
}

Outcome classify_outcome(const std::vector<WorldState>& episode, const RewardConfig& cfg,
                         int t_max) {
    bool near_miss_seen = false;
    int steps = 0;
    for (const auto& s : episode) {
        if (is_crash_state(s, cfg)) return Outcome::Crash;
        if (is_near_miss_state(s, cfg)) near_miss_seen = true;
        if (is_goal_state(s, cfg)) return near_miss_seen ? Outcome::NearMiss : Outcome::Goal;
        if (++steps > t_max) break;
    }
    return near_miss_seen ? Outcome::NearMiss : Outcome::Timeout;
}

}  // namespace hyplan
