#pragma once

#include <memory>
#include <optional>

#include "hyplan/belief.hpp"
#include "hyplan/calibration.hpp"
#include "hyplan/despot.hpp"
#include "hyplan/intention.hpp"
#include "hyplan/learner.hpp"
#include "hyplan/net.hpp"
#include "hyplan/pathplan.hpp"
#include "hyplan/prediction.hpp"
#include "hyplan/world.hpp"

namespace hyplan {

struct EmptyBelief : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One determinized world hypothesis: shared ego plus per-scenario exo states.
struct DrivingState {
    AgentState ego;
    std::vector<AgentState> exo;
};

// Deterministic step model over belief scenarios. Steering follows the
// current planned path; the search varies only the acceleration choice.
class DrivingModel {
public:
    using State = DrivingState;

    DrivingModel(const PlannedPath* path, const std::vector<Rect>* obstacles,
                 const std::vector<AgentKind>* kinds, const RewardConfig& cfg,
                 const PlannerConfig& pcfg);

    struct StepOut {
        DrivingState next;
        double reward = 0.0;
        std::uint64_t obs_key = 0;
        bool terminal = false;
    };

    StepOut step(const DrivingState& s, int action, int prev_action, std::uint64_t seed,
                 int depth) const;
    int num_actions() const { return kNumAccActions; }
    const std::vector<int>& action_preference() const { return pref_; }

    double steer_for(const Vec2& pos) const;

private:
    const PlannedPath* path_;
    const std::vector<Rect>* obstacles_;
    const std::vector<AgentKind>* kinds_;
    RewardConfig cfg_;
    PlannerConfig pcfg_;
    // Safety order: Decelerate > Maintain > Accelerate.
    std::vector<int> pref_{static_cast<int>(Acc::Decelerate), static_cast<int>(Acc::Maintain),
                           static_cast<int>(Acc::Accelerate)};
};

using DrivingNodeView = NodeView<DrivingState>;

// Collision-course heuristic: crash penalty discounted by the steps until a
// straight-line extrapolation first brings ego and a pedestrian within the
// crash distance; 0 for scenarios with no collision course.
double heuristic_l_tr(const DrivingNodeView& view, const std::vector<AgentKind>& kinds,
                      const RewardConfig& cfg, VirtualClock* clock = nullptr);

// Per-decision context the bound providers render node images from.
struct TickContext {
    const PlannedPath* path = nullptr;
    const TrajPrediction* preds = nullptr;
    const std::vector<PathPose>* past = nullptr;
    const std::vector<Rect>* obstacles = nullptr;
    const std::vector<AgentKind>* kinds = nullptr;
    const LstmState* lstm = nullptr;  // episode recurrent state s_{t-1}
    Vec2 ego_goal;
};

class BoundsProvider {
public:
    virtual ~BoundsProvider() = default;
    virtual Bounds evaluate(const DrivingNodeView& view) = 0;
    virtual double eval_cost_estimate() const = 0;
    virtual double net_ms() const { return 0.0; }
    void attach(VirtualClock* clock) { clock_ = clock; }

protected:
    VirtualClock* clock_ = nullptr;
};

// Training bounds: L_tr and the raw critic value of the node image.
class TrainingBounds : public BoundsProvider {
public:
    TrainingBounds(const FloatNet* net, const TickContext& ctx, const RewardConfig& cfg);
    Bounds evaluate(const DrivingNodeView& view) override;
    double eval_cost_estimate() const override;
    double net_ms() const override { return net_ms_; }

private:
    const FloatNet* net_;
    TickContext ctx_;
    RewardConfig cfg_;
    double net_ms_ = 0.0;
};

// Deployment bounds: MC-dropout statistics, CRUDE calibration and the
// confidence-weighted lower bound.
class DeploymentBounds : public BoundsProvider {
public:
    DeploymentBounds(const FloatNet* net, const CalibrationTable* table, int f_passes,
                     std::uint64_t seed, const TickContext& ctx, const RewardConfig& cfg);
    Bounds evaluate(const DrivingNodeView& view) override;
    double eval_cost_estimate() const override;
    double net_ms() const override { return net_ms_; }

    void force_phi_zero(bool on) { force_phi_zero_ = on; }  // no-pruning ablation
    void skip_calibration(bool on) { skip_calibration_ = on; }  // no-calibration ablation

private:
    const FloatNet* net_;
    const CalibrationTable* table_;
    int f_passes_;
    Rng rng_;
    TickContext ctx_;
    RewardConfig cfg_;
    double net_ms_ = 0.0;
    bool force_phi_zero_ = false;
    bool skip_calibration_ = false;
};

// Planner-only bounds for the despot-ltr ablation: L_tr plus an optimistic
// earliest-goal upper bound; never touches the network.
class StaticBounds : public BoundsProvider {
public:
    StaticBounds(const TickContext& ctx, const RewardConfig& cfg);
    Bounds evaluate(const DrivingNodeView& view) override;
    double eval_cost_estimate() const override;

private:
    TickContext ctx_;
    RewardConfig cfg_;
};

IntentionImage render_node_image(const DrivingNodeView& view, const TickContext& ctx);
FeatureVector node_features(const DrivingNodeView& view, const RewardConfig& cfg);

std::vector<DespotSearch<DrivingModel>::Scenario> sample_scenarios(const Belief& b, int k,
                                                                   std::uint64_t seed);

struct VelocityPlan {
    std::array<double, 3> policy{};
    Acc chosen = Acc::Maintain;
    EffortStats effort;
    std::array<double, 3> action_lower{};
    std::array<double, 3> action_upper{};
};

VelocityPlan plan_velocity(const Belief& b, const PlannedPath& path, BoundsProvider& bounds,
                           const TickContext& ctx, const PlannerConfig& pcfg,
                           const RewardConfig& cfg, std::uint64_t seed, Acc prev_acc,
                           double prev_reward, SearchTrace* trace = nullptr);

std::string trace_to_json(const SearchTrace& trace);

}  // namespace hyplan
