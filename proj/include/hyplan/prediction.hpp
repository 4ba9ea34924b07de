#pragma once

#include <functional>
#include <vector>

#include "hyplan/belief.hpp"
#include "hyplan/world.hpp"

namespace hyplan {

constexpr int kPredictionHorizon = 20;

struct TrajPrediction {
    // traj[agent][k] = predicted position at horizon step k+1.
    std::vector<std::vector<Vec2>> traj;
};

// Pluggable predictor seam; the default rolls the belief's mode hypothesis.
using Predictor = std::function<TrajPrediction(const Belief&, int horizon, double dt)>;

TrajPrediction predict_trajectories(const Belief& b, int horizon, double dt);

Predictor default_predictor();

}  // namespace hyplan
