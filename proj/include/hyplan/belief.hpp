#pragma once

#include <vector>

#include "hyplan/rng.hpp"
#include "hyplan/scenarios.hpp"
#include "hyplan/world.hpp"

namespace hyplan {

struct Particle {
    std::vector<AgentState> exo;  // one hypothesis per exo agent
    double weight = 0.0;
};

struct Belief {
    std::vector<Particle> particles;  // kNumParticles after init
    AgentState ego;                   // fully observed
    int t = 0;
    int reset_count = 0;  // degenerate-weight reinitializations
};

constexpr int kNumParticles = 100;
constexpr double kObsSigma = 0.5;  // m, likelihood kernel before snapping

// Samples goal/speed hypotheses per agent; occluded agents get positions
// drawn from the region hidden from the ego.
Belief init_belief(const Observation& o0, const Scene& scene, Rng& rng);

// Propagates every particle one step: ego via the bicycle model, exo agents
// straight toward their hypothesized goals. Weights unchanged.
Belief predict_particles(const Belief& b, const Action& a, const std::vector<Rect>& obstacles,
                         const RewardConfig& cfg);

// Bayes update for one observation; resamples when ESS < K/2.
Belief update_belief(const Belief& b, const Observation& o, const Scene& scene,
                     const std::vector<Rect>& obstacles, Rng& rng);

double effective_sample_size(const Belief& b);

// Index of the highest-weight particle, ties broken by lowest index.
int mode_particle(const Belief& b);

}  // namespace hyplan
