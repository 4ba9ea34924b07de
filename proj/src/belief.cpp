#include "hyplan/belief.hpp"

#include <algorithm>
#include <cmath>

namespace hyplan {

namespace {

bool visible_from(const Vec2& eye, const Vec2& p, const std::vector<Rect>& obstacles) {
    for (const auto& r : obstacles)
        if (segment_crosses_rect(eye, p, r)) return false;
    return true;
}

// Samples a position hidden from the ego. Falls back to a point behind the
// nearest obstacle if rejection sampling fails (possible only in degenerate
// geometry where nothing is occluded).
Vec2 sample_occluded_position(const Vec2& eye, const std::vector<Rect>& obstacles, Rng& rng) {
    if (!obstacles.empty()) {
        for (int attempt = 0; attempt < 256; ++attempt) {
            const auto& r = obstacles[rng.uniform_int(obstacles.size())];
            // Sample around the obstacle, biased to its shadow side.
            const double margin = 3.0;
            Vec2 p{rng.uniform(r.xmin - margin, r.xmax + margin),
                   rng.uniform(r.ymin - margin, r.ymax + margin)};
            if (r.contains(p)) continue;
            if (!visible_from(eye, p, obstacles)) return p;
        }
        const Vec2 c = obstacles.front().center();
        const Vec2 d = c - eye;
        const double n = std::max(d.norm(), 1e-9);
        return c + d * (1.5 / n);
    }
    return eye;  // no obstacles: nothing is occluded, degenerate fallback
}

AgentState make_hypothesis(const Vec2& pos, const Vec2& goal, double speed) {
    AgentState h;
    h.pos = pos;
    h.goal = goal;
    const Vec2 d = goal - pos;
    const double n = d.norm();
    if (n > 1e-12) {
        h.vel = d * (speed / n);
        h.heading = normalize_angle(std::atan2(d.y, d.x));
    } else {
        h.vel = Vec2{speed, 0.0};
        h.heading = 0.0;
    }
    return h;
}

void sample_agent_hypothesis(AgentState& out, std::size_t agent, const Observation& o,
                             const Scene& scene, const std::vector<Rect>& obstacles, Rng& rng) {
    const auto& candidates = scene.goal_candidates[agent];
    const Vec2 goal = candidates[rng.uniform_int(candidates.size())];
    const double speed = rng.uniform(0.5, 2.0);
    Vec2 pos;
    if (o.exo_pos[agent].has_value()) {
        pos = *o.exo_pos[agent];
    } else {
        pos = sample_occluded_position(o.ego.pos, obstacles, rng);
    }
    out = make_hypothesis(pos, goal, speed);
}

void systematic_resample(Belief& b, Rng& rng) {
    const int k = static_cast<int>(b.particles.size());
    std::vector<Particle> out;
    out.reserve(k);
    const double u0 = rng.uniform() / k;
    double cum = 0.0;
    int i = -1;
    for (int j = 0; j < k; ++j) {
        const double u = u0 + static_cast<double>(j) / k;
        while (cum < u && i + 1 < k) {
            ++i;
            cum += b.particles[i].weight;
        }
        Particle p = b.particles[std::max(i, 0)];
        p.weight = 1.0 / k;
        out.push_back(std::move(p));
    }
    b.particles = std::move(out);
}

}  // namespace

Belief init_belief(const Observation& o0, const Scene& scene, Rng& rng) {
    Belief b;
    b.ego = o0.ego;
    b.t = 0;
    b.particles.resize(kNumParticles);
    const auto& obstacles = scene.initial.obstacles;
    for (auto& p : b.particles) {
        p.weight = 1.0 / kNumParticles;
        p.exo.resize(o0.exo_pos.size());
        for (std::size_t a = 0; a < o0.exo_pos.size(); ++a)
            sample_agent_hypothesis(p.exo[a], a, o0, scene, obstacles, rng);
    }
    return b;
}

Belief predict_particles(const Belief& b, const Action& a, const std::vector<Rect>& /*obstacles*/,
                         const RewardConfig& cfg) {
    Belief out = b;
    out.ego = bicycle_step(b.ego, a, cfg);
    out.t = b.t + 1;
    for (auto& p : out.particles)
        for (auto& e : p.exo) e = exo_step(e, cfg.dt);
    return out;
}

double effective_sample_size(const Belief& b) {
    double sum_sq = 0.0;
    for (const auto& p : b.particles) sum_sq += p.weight * p.weight;
    return sum_sq > 0.0 ? 1.0 / sum_sq : 0.0;
}

int mode_particle(const Belief& b) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(b.particles.size()); ++i)
        if (b.particles[i].weight > b.particles[best].weight) best = i;
    return best;
}

Belief update_belief(const Belief& b, const Observation& o, const Scene& scene,
                     const std::vector<Rect>& obstacles, Rng& rng) {
    Belief out = b;
    out.ego = o.ego;

    const std::size_t n_agents = o.exo_pos.size();
    for (std::size_t a = 0; a < n_agents; ++a) {
        bool all_zero = true;
        for (auto& p : out.particles) {
            const Vec2 hyp = p.exo[a].pos;
            if (o.exo_pos[a].has_value()) {
                const double d2 = (hyp - *o.exo_pos[a]).norm_sq();
                p.weight *= std::exp(-d2 / (2.0 * kObsSigma * kObsSigma));
            } else if (visible_from(o.ego.pos, hyp, obstacles)) {
                // A visible hypothesis contradicts the occlusion.
                p.weight = 0.0;
            }
            if (p.weight > 0.0) all_zero = false;
        }
        if (all_zero) {
            // Degenerate: reinitialize this agent's hypotheses.
            ++out.reset_count;
            for (auto& p : out.particles) {
                sample_agent_hypothesis(p.exo[a], a, o, scene, obstacles, rng);
                p.weight = 1.0;
            }
        }
        if (o.exo_pos[a].has_value()) {
            // Noiseless world: snap positions; uncertainty persists in goal/speed.
            for (auto& p : out.particles) {
                const double speed = p.exo[a].speed();
                p.exo[a] = make_hypothesis(*o.exo_pos[a], p.exo[a].goal, speed);
            }
        }
    }

    double total = 0.0;
    for (const auto& p : out.particles) total += p.weight;
    if (total <= 0.0) {
        ++out.reset_count;
        for (auto& p : out.particles) p.weight = 1.0;
        total = static_cast<double>(out.particles.size());
    }
    for (auto& p : out.particles) p.weight /= total;

    if (effective_sample_size(out) < kNumParticles / 2.0) systematic_resample(out, rng);
    return out;
}

}  // namespace hyplan
