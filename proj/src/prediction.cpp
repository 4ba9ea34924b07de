#include "hyplan/prediction.hpp"

namespace hyplan {

TrajPrediction predict_trajectories(const Belief& b, int horizon, double dt) {
    TrajPrediction out;
    if (b.particles.empty()) return out;
    const Particle& mode = b.particles[mode_particle(b)];
    out.traj.resize(mode.exo.size());
    for (std::size_t a = 0; a < mode.exo.size(); ++a) {
        AgentState s = mode.exo[a];
        out.traj[a].reserve(horizon);
        for (int k = 0; k < horizon; ++k) {
            s = exo_step(s, dt);
            out.traj[a].push_back(s.pos);
        }
    }
    return out;
}

Predictor default_predictor() {
    return [](const Belief& b, int horizon, double dt) {
        return predict_trajectories(b, horizon, dt);
    };
}

}  // namespace hyplan
