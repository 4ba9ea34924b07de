#pragma once

namespace hyplan {

// Deterministic cost model for reported timing metrics. Every timed metric
// (PT, NNET, executionMs) is accounted in virtual milliseconds by counting
// elementary operations at these fixed rates, so identical inputs produce
// bit-identical reports. Constants approximate measured desk-CPU costs.
struct EffortModel {
    double forward_ms = 0.6;      // one network forward pass
    double render_ms = 0.005;     // one intention-image render
    double sim_step_ms = 0.0004;  // one scenario world step
    double ltr_step_ms = 0.0002;  // one step of the collision-course rollout
    double node_ms = 0.01;        // belief-node bookkeeping
    double astar_expand_ms = 0.004;  // one lattice expansion
};

inline const EffortModel& effort_model() {
    static const EffortModel m;
    return m;
}

// Accumulates virtual time; `would_exceed` lets callers stop before starting
// an operation that does not fit in the budget.
class VirtualClock {
public:
    explicit VirtualClock(double budget_ms = 0.0) : budget_ms_(budget_ms) {}

    void charge(double ms) { used_ms_ += ms; }
    double used_ms() const { return used_ms_; }
    double budget_ms() const { return budget_ms_; }
    bool has_budget() const { return budget_ms_ <= 0.0 || used_ms_ < budget_ms_; }
    bool would_exceed(double ms) const {
        return budget_ms_ > 0.0 && used_ms_ + ms > budget_ms_;
    }

private:
    double budget_ms_ = 0.0;
    double used_ms_ = 0.0;
};

}  // namespace hyplan
