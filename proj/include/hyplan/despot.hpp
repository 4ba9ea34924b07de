#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "hyplan/effort.hpp"

namespace hyplan {

struct PlannerConfig {
    int scenarios = 32;            // K
    int max_depth = 20;            // D
    double eps_term = 0.05;        // gap fraction
    double budget_ms = 100.0;      // virtual wall budget per decision
    int trial_cap = 200;
    double prune_confidence = 0.95;
    double obs_pos_bin = 1.0;      // m
    double obs_speed_bin = 0.5;    // m/s
    double t_soft = 0.5;
    double gamma = 0.98;
    // Stop planning once no alternative action's upper bound can overtake the
    // chosen action's lower bound. Sound for action selection; disable when
    // fully converged root values are needed.
    bool early_action_settle = true;
};

struct Bounds {
    double lower = 0.0;
    double upper = 0.0;
    double phi = 0.0;  // learner confidence; 0 disables pruning
};

struct EffortStats {
    double planning_ms = 0.0;       // PT
    int trial_count = 0;            // PTN
    double mean_trial_depth = 0.0;  // PTD
    int nodes_created = 0;          // BNN
    double mean_obs_branching = 0.0;  // OBF
    double net_eval_ms = 0.0;       // NNET
};

// Node snapshot recorded when tracing is enabled; used by the pruning
// acceptance checks to compare runs byte-for-byte.
struct TraceNode {
    int id = 0;
    int parent = -1;
    int action = -1;
    std::uint64_t obs = 0;
    int depth = 0;
    double weight = 0.0;
    double lower = 0.0, upper = 0.0, phi = 0.0;
};

struct SearchTrace {
    std::vector<TraceNode> nodes;
    std::vector<std::vector<int>> trials;  // node-id path per trial
    std::vector<std::string> trial_end;    // termination reason per trial
    std::vector<double> root_gaps;         // root gap after each trial's backup
    int chosen_action = -1;
};

template <class State>
struct NodeView {
    const std::vector<State>* states = nullptr;
    const std::vector<double>* weights = nullptr;
    double weight_sum = 0.0;
    int depth = 0;
    int prev_action = -1;
    double prev_reward = 0.0;
};

// Model concept:
//   struct State;
//   struct StepOut { State next; double reward; std::uint64_t obs_key; bool terminal; };
//   StepOut step(const State&, int action, int prev_action, std::uint64_t seed, int depth);
//   int num_actions() const;
//   const std::vector<int>& action_preference() const;  // tie-break order
template <class Model>
class DespotSearch {
public:
    using State = typename Model::State;
    using BoundsFn = std::function<Bounds(const NodeView<State>&)>;

    struct Scenario {
        State state;
        double weight = 0.0;
        std::uint64_t seed = 0;
    };

    struct Result {
        int chosen_action = 0;
        std::vector<double> action_lower;
        std::vector<double> action_upper;
        double root_lower = 0.0, root_upper = 0.0;
        EffortStats effort;
    };

    DespotSearch(Model& model, BoundsFn bounds, double bounds_cost_estimate,
                 const PlannerConfig& cfg, VirtualClock& clock, SearchTrace* trace = nullptr)
        : model_(model),
          bounds_(std::move(bounds)),
          bounds_cost_(bounds_cost_estimate),
          cfg_(cfg),
          clock_(clock),
          trace_(trace) {}

    Result run(std::vector<Scenario> root_scenarios, int root_prev_action = -1,
               double root_prev_reward = 0.0) {
        nodes_.clear();
        const auto& em = effort_model();
        const int n_actions = model_.num_actions();

        const int root =
            make_node(std::move(root_scenarios), 0, root_prev_action, root_prev_reward, -1, 0);
        const double initial_gap = gap(nodes_[root]);

        int trials = 0;
        long total_depth = 0;
        bool budget_stop = false;
        while (true) {
            if (trials >= cfg_.trial_cap) break;
            if (trials > 0) {
                if (gap(nodes_[root]) <= cfg_.eps_term * initial_gap) break;
                if (cfg_.early_action_settle && action_settled(root)) break;
                if (!clock_.has_budget()) break;
            }

            // One trial: descend, expanding at the frontier.
            std::vector<int> path{root};
            int cur = root;
            std::string reason = "depth";
            while (true) {
                Node& n = nodes_[cur];
                if (n.closed && !(cur == root && trials == 0)) {
                    reason = "closed";
                    break;
                }
                if (n.depth >= cfg_.max_depth) {
                    reason = "depth";
                    break;
                }
                if (cur != root &&
                    n.weight * std::pow(cfg_.gamma, n.depth) * gap(n) <=
                        cfg_.eps_term * initial_gap) {
                    reason = "gap";
                    break;
                }
                if (!n.expanded) {
                    // The root must always expand so an action exists; other
                    // expansions only start if they fit the budget.
                    const double est =
                        n.states.size() * n_actions * em.sim_step_ms +
                        n_actions * (2.0 * (em.node_ms + bounds_cost_));
                    if (cur != root && clock_.would_exceed(est)) {
                        budget_stop = true;
                        reason = "budget";
                        break;
                    }
                    expand(cur);
                }
                Node& n2 = nodes_[cur];  // expand may reallocate
                const int a = best_action_upper(cur);
                if (a < 0 || n2.children[a].empty()) {
                    reason = "leaf";
                    break;
                }
                // Child with the largest weighted discounted gap.
                int best_child = -1;
                double best_score = -1.0;
                for (const int c : n2.children[a]) {
                    const Node& ch = nodes_[c];
                    const double score =
                        ch.weight * std::pow(cfg_.gamma, ch.depth) * gap(ch);
                    if (score > best_score + 1e-15) {
                        best_score = score;
                        best_child = c;
                    }
                }
                if (best_child < 0) {
                    reason = "leaf";
                    break;
                }
                cur = best_child;
                path.push_back(cur);
            }

            total_depth += nodes_[cur].depth;
            ++trials;
            if (trace_) {
                trace_->trials.push_back(path);
                trace_->trial_end.push_back(reason);
            }

            // Backup along the trial path, leaf to root.
            for (auto it = path.rbegin(); it != path.rend(); ++it) backup(*it);
            if (trace_) trace_->root_gaps.push_back(gap(nodes_[root]));

            if (budget_stop) break;
        }

        Result res;
        res.action_lower.assign(n_actions, 0.0);
        res.action_upper.assign(n_actions, 0.0);
        for (int a = 0; a < n_actions; ++a) {
            res.action_lower[a] = action_value(root, a, /*upper=*/false);
            res.action_upper[a] = action_value(root, a, /*upper=*/true);
        }
        res.chosen_action = argmax_pref(res.action_lower);
        res.root_lower = nodes_[root].lower;
        res.root_upper = nodes_[root].upper;
        res.effort.planning_ms = clock_.used_ms();
        res.effort.trial_count = trials;
        res.effort.mean_trial_depth =
            trials > 0 ? static_cast<double>(total_depth) / trials : 0.0;
        res.effort.nodes_created = static_cast<int>(nodes_.size());
        res.effort.mean_obs_branching =
            expanded_pairs_ > 0 ? static_cast<double>(children_total_) / expanded_pairs_ : 0.0;
        if (trace_) trace_->chosen_action = res.chosen_action;
        return res;
    }

private:
    struct Node {
        std::vector<State> states;  // live scenarios only
        std::vector<double> weights;
        std::vector<std::uint64_t> seeds;
        double weight = 0.0;
        int depth = 0;
        int prev_action = -1;
        double prev_reward = 0.0;
        double lower = 0.0, upper = 0.0, phi = 0.0;
        bool closed = false;
        bool expanded = false;
        std::vector<double> step_reward;         // per action
        std::vector<std::vector<int>> children;  // per action
    };

    double gap(const Node& n) const { return std::max(0.0, n.upper - n.lower); }

    int make_node(std::vector<Scenario> scens, int depth, int prev_action, double prev_reward,
                  int parent, std::uint64_t obs) {
        const auto& em = effort_model();
        clock_.charge(em.node_ms);
        Node n;
        n.depth = depth;
        n.prev_action = prev_action;
        n.prev_reward = prev_reward;
        for (auto& s : scens) {
            n.states.push_back(std::move(s.state));
            n.weights.push_back(s.weight);
            n.seeds.push_back(s.seed);
            n.weight += s.weight;
        }
        if (n.states.empty()) {
            n.lower = n.upper = 0.0;
            n.phi = 1.0;
            n.closed = true;
        } else {
            NodeView<State> view{&n.states, &n.weights, n.weight, depth, prev_action,
                                 prev_reward};
            const Bounds b = bounds_(view);
            n.lower = std::min(b.lower, b.upper);
            n.upper = b.upper;
            n.phi = b.phi;
            if (depth >= cfg_.max_depth) n.upper = n.lower;  // horizon leaf closes
            n.closed = n.phi >= cfg_.prune_confidence || gap(n) <= 0.0;
        }
        nodes_.push_back(std::move(n));
        const int id = static_cast<int>(nodes_.size()) - 1;
        if (trace_) {
            const Node& nn = nodes_[id];
            trace_->nodes.push_back(TraceNode{id, parent, prev_action, obs, nn.depth, nn.weight,
                                              nn.lower, nn.upper, nn.phi});
        }
        return id;
    }

    void expand(int id) {
        const auto& em = effort_model();
        const int n_actions = model_.num_actions();
        // Collect child groupings first: nodes_ may reallocate while creating.
        std::vector<double> step_reward(n_actions, 0.0);
        struct Group {
            std::vector<Scenario> scens;
            double reward_sum = 0.0;
        };
        std::vector<std::map<std::uint64_t, Group>> groups(n_actions);
        {
            const Node& n = nodes_[id];
            for (int a = 0; a < n_actions; ++a) {
                for (std::size_t i = 0; i < n.states.size(); ++i) {
                    clock_.charge(em.sim_step_ms);
                    auto out =
                        model_.step(n.states[i], a, n.prev_action, n.seeds[i], n.depth);
                    step_reward[a] += n.weights[i] * out.reward;
                    if (!out.terminal) {
                        auto& g = groups[a][out.obs_key];
                        g.scens.push_back(Scenario{std::move(out.next), n.weights[i],
                                                   splitmix_seed(n.seeds[i], a)});
                        g.reward_sum += n.weights[i] * out.reward;
                    }
                }
                step_reward[a] /= nodes_[id].weight;
            }
        }
        nodes_[id].step_reward = step_reward;
        nodes_[id].children.assign(n_actions, {});
        for (int a = 0; a < n_actions; ++a) {
            expanded_pairs_ += 1;
            for (auto& [obs, g] : groups[a]) {
                double gw = 0.0;
                for (const auto& s : g.scens) gw += s.weight;
                const double mean_r = gw > 0.0 ? g.reward_sum / gw : 0.0;
                const int child = make_node(std::move(g.scens), nodes_[id].depth + 1, a, mean_r,
                                            id, obs);
                nodes_[id].children[a].push_back(child);
                children_total_ += 1;
            }
        }
        nodes_[id].expanded = true;
    }

    double action_value(int id, int a, bool upper) const {
        const Node& n = nodes_[id];
        if (!n.expanded) return upper ? n.upper : n.lower;
        double v = n.step_reward[a];
        for (const int c : n.children[a]) {
            const Node& ch = nodes_[c];
            v += cfg_.gamma * (ch.weight / n.weight) * (upper ? ch.upper : ch.lower);
        }
        return v;
    }

    int best_action_upper(int id) const {
        const Node& n = nodes_[id];
        if (!n.expanded) return -1;
        int best = -1;
        double best_v = -std::numeric_limits<double>::infinity();
        for (const int a : model_.action_preference()) {
            const double v = action_value(id, a, /*upper=*/true);
            if (v > best_v + 1e-15) {
                best_v = v;
                best = a;
            }
        }
        return best;
    }

    int argmax_pref(const std::vector<double>& values) const {
        int best = model_.action_preference().front();
        double best_v = -std::numeric_limits<double>::infinity();
        for (const int a : model_.action_preference()) {
            if (values[a] > best_v + 1e-15) {
                best_v = values[a];
                best = a;
            }
        }
        return best;
    }

    void backup(int id) {
        Node& n = nodes_[id];
        if (!n.expanded) return;
        double best_l = -std::numeric_limits<double>::infinity();
        double best_u = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < model_.num_actions(); ++a) {
            best_l = std::max(best_l, action_value(id, a, false));
            best_u = std::max(best_u, action_value(id, a, true));
        }
        // Monotone refinement keeps the root gap non-increasing.
        n.lower = std::max(n.lower, best_l);
        n.upper = std::min(n.upper, best_u);
        if (n.lower > n.upper) n.lower = n.upper;
        if (gap(n) <= 0.0) n.closed = true;
    }

    // Planning cannot change the chosen action once every alternative's upper
    // bound sits at or below the best action's lower bound.
    bool action_settled(int root) const {
        const Node& n = nodes_[root];
        if (!n.expanded) return false;
        std::vector<double> lo(model_.num_actions()), hi(model_.num_actions());
        for (int a = 0; a < model_.num_actions(); ++a) {
            lo[a] = action_value(root, a, false);
            hi[a] = action_value(root, a, true);
        }
        const int a_star = argmax_pref(lo);
        for (int a = 0; a < model_.num_actions(); ++a) {
            if (a == a_star) continue;
            if (hi[a] > lo[a_star] + 1e-12) return false;
        }
        return true;
    }

    static std::uint64_t splitmix_seed(std::uint64_t s, int salt) {
        s ^= 0x9e3779b97f4a7c15ull + (static_cast<std::uint64_t>(salt) << 17);
        s ^= s >> 30;
        s *= 0xbf58476d1ce4e5b9ull;
        s ^= s >> 27;
        return s;
    }

    Model& model_;
    BoundsFn bounds_;
    double bounds_cost_ = 0.0;
    PlannerConfig cfg_;
    VirtualClock& clock_;
    SearchTrace* trace_ = nullptr;
    std::vector<Node> nodes_;
    long expanded_pairs_ = 0;
    long children_total_ = 0;
};

}  // namespace hyplan
