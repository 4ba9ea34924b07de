#include "hyplan/planner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace hyplan {

DrivingModel::DrivingModel(const PlannedPath* path, const std::vector<Rect>* obstacles,
                           const std::vector<AgentKind>* kinds, const RewardConfig& cfg,
                           const PlannerConfig& pcfg)
    : path_(path), obstacles_(obstacles), kinds_(kinds), cfg_(cfg), pcfg_(pcfg) {}

double DrivingModel::steer_for(const Vec2& pos) const {
    if (!path_ || path_->poses.size() < 2) return 0.0;
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < path_->poses.size(); ++i) {
        const double d = dist(path_->poses[i].pos, pos);
        if (d < best_d) {
            best_d = d;
            best = i;
        }
    }
    const std::size_t next = std::min(best + 1, path_->poses.size() - 1);
    return path_->poses[next].steer_deg;
}

DrivingModel::StepOut DrivingModel::step(const DrivingState& s, int action, int prev_action,
                                         std::uint64_t /*seed*/, int /*depth*/) const {
    StepOut out;
    Action act;
    act.acc = static_cast<Acc>(action);
    act.steer_deg = steer_for(s.ego.pos);

    out.next.ego = bicycle_step(s.ego, act, cfg_);
    out.next.exo.reserve(s.exo.size());
    for (const auto& e : s.exo) out.next.exo.push_back(exo_step(e, cfg_.dt));

    // Reward and terminality against the hypothesized exo states.
    double min_ped = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < out.next.exo.size(); ++i)
        if ((*kinds_)[i] == AgentKind::Pedestrian)
            min_ped = std::min(min_ped, dist(out.next.ego.pos, out.next.exo[i].pos));
    const double goal_d = dist(out.next.ego.pos, out.next.ego.goal);

    if (min_ped < cfg_.d_crash) {
        out.reward = cfg_.r_crash;
        out.terminal = true;
    } else if (min_ped < cfg_.d_near && out.next.ego.speed() > cfg_.v_near_min) {
        out.reward = cfg_.r_near_miss;
    } else if (goal_d < cfg_.d_goal) {
        out.reward = cfg_.r_goal;
        out.terminal = true;
    } else {
        out.reward = cfg_.r_step +
                     (action != prev_action && prev_action >= 0 ? cfg_.r_acc_switch : 0.0);
    }

    // Binned observation: ego speed bin + per-agent position bins with an
    // occlusion sentinel.
    std::uint64_t key = 0xcbf29ce484222325ull;
    auto mix = [&key](std::uint64_t v) {
        key ^= v + 0x9e3779b97f4a7c15ull + (key << 6) + (key >> 2);
    };
    mix(static_cast<std::uint64_t>(
        std::floor(out.next.ego.speed() / pcfg_.obs_speed_bin) + 4096));
    for (const auto& e : out.next.exo) {
        bool visible = true;
        if (obstacles_)
            for (const auto& r : *obstacles_)
                if (segment_crosses_rect(out.next.ego.pos, e.pos, r)) {
                    visible = false;
                    break;
                }
        if (!visible) {
            mix(0xffffffffull);
        } else {
            mix(static_cast<std::uint64_t>(std::floor(e.pos.x / pcfg_.obs_pos_bin) + 65536));
            mix(static_cast<std::uint64_t>(std::floor(e.pos.y / pcfg_.obs_pos_bin) + 65536));
        }
    }
    out.obs_key = key;
    return out;
}

double heuristic_l_tr(const DrivingNodeView& view, const std::vector<AgentKind>& kinds,
                      const RewardConfig& cfg, VirtualClock* clock) {
    const auto& em = effort_model();
    constexpr int kHorizon = 120;
    double acc = 0.0;
    for (std::size_t i = 0; i < view.states->size(); ++i) {
        const DrivingState& s = (*view.states)[i];
        bool any_ped = false;
        for (std::size_t a = 0; a < s.exo.size(); ++a)
            if (kinds[a] == AgentKind::Pedestrian) any_ped = true;
        if (!any_ped) continue;

        Vec2 ego = s.ego.pos;
        const Vec2 ego_step = s.ego.vel * cfg.dt;
        std::vector<AgentState> exo = s.exo;
        int collide_k = -1;
        for (int k = 1; k <= kHorizon; ++k) {
            if (clock) clock->charge(em.ltr_step_ms);
            ego = ego + ego_step;
            bool hit = false;
            for (std::size_t a = 0; a < exo.size(); ++a) {
                if (kinds[a] != AgentKind::Pedestrian) continue;
                exo[a] = exo_step(exo[a], cfg.dt);
                if (dist(ego, exo[a].pos) < cfg.d_crash) hit = true;
            }
            if (hit) {
                collide_k = k;
                break;
            }
        }
        if (collide_k > 0)
            acc += (*view.weights)[i] * std::pow(cfg.gamma, collide_k) * cfg.r_crash;
    }
    return view.weight_sum > 0.0 ? acc / view.weight_sum : 0.0;
}

IntentionImage render_node_image(const DrivingNodeView& view, const TickContext& ctx) {
    RenderInputs in;
    in.has_ego = true;
    const DrivingState& first = view.states->front();
    in.ego_pos = first.ego.pos;
    in.ego_heading = first.ego.heading;
    in.ego_goal = ctx.ego_goal;
    in.obstacles = ctx.obstacles;
    in.preds = ctx.preds;
    in.ego_path = ctx.path;
    in.past_poses = ctx.past;

    const std::size_t n_agents = first.exo.size();
    in.belief_dots.resize(n_agents);
    // Top-3 scenarios by weight, ties toward lower index.
    std::vector<int> idx(view.states->size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    std::partial_sort(idx.begin(), idx.begin() + std::min<std::size_t>(3, idx.size()), idx.end(),
                      [&](int i, int j) {
                          if ((*view.weights)[i] != (*view.weights)[j])
                              return (*view.weights)[i] > (*view.weights)[j];
                          return i < j;
                      });
    for (std::size_t a = 0; a < n_agents; ++a)
        for (std::size_t r = 0; r < std::min<std::size_t>(3, idx.size()); ++r)
            in.belief_dots[a].push_back(BeliefDot{(*view.states)[idx[r]].exo[a].pos,
                                                  (*view.weights)[idx[r]] / view.weight_sum});
    return render_intention_image(in);
}

FeatureVector node_features(const DrivingNodeView& view, const RewardConfig& cfg) {
    const Acc prev = view.prev_action >= 0 ? static_cast<Acc>(view.prev_action) : Acc::Maintain;
    return make_features(view.prev_reward, prev, view.states->front().ego.speed(), cfg);
}

TrainingBounds::TrainingBounds(const FloatNet* net, const TickContext& ctx,
                               const RewardConfig& cfg)
    : net_(net), ctx_(ctx), cfg_(cfg) {}

Bounds TrainingBounds::evaluate(const DrivingNodeView& view) {
    const auto& em = effort_model();
    Bounds b;
    b.lower = heuristic_l_tr(view, *ctx_.kinds, cfg_, clock_);
    if (clock_) clock_->charge(em.render_ms + em.forward_ms);
    net_ms_ += em.forward_ms;
    const IntentionImage img = render_node_image(view, ctx_);
    b.upper = net_->forward(img.data.data(), node_features(view, cfg_), *ctx_.lstm, nullptr)
                  .value;
    b.phi = 0.0;
    return b;
}

double TrainingBounds::eval_cost_estimate() const {
    const auto& em = effort_model();
    return em.render_ms + em.forward_ms + 32 * 20 * em.ltr_step_ms;
}

DeploymentBounds::DeploymentBounds(const FloatNet* net, const CalibrationTable* table,
                                   int f_passes, std::uint64_t seed, const TickContext& ctx,
                                   const RewardConfig& cfg)
    : net_(net), table_(table), f_passes_(f_passes), rng_(seed), ctx_(ctx), cfg_(cfg) {}

Bounds DeploymentBounds::evaluate(const DrivingNodeView& view) {
    const auto& em = effort_model();
    const double l_tr = heuristic_l_tr(view, *ctx_.kinds, cfg_, clock_);
    if (clock_) clock_->charge(em.render_ms + f_passes_ * em.forward_ms);
    net_ms_ += f_passes_ * em.forward_ms;
    const IntentionImage img = render_node_image(view, ctx_);
    const McStats stats = mc_forward_stats(*net_, img.data.data(), node_features(view, cfg_),
                                           *ctx_.lstm, f_passes_, rng_);
    double mu_cal = stats.mean, var_cal = stats.var;
    if (!skip_calibration_) crude_calibrate(stats.mean, stats.var, *table_, &mu_cal, &var_cal);
    double phi = confidence(var_cal, *table_);
    if (force_phi_zero_) phi = 0.0;

    Bounds b;
    b.upper = mu_cal;
    b.lower = std::min((1.0 - phi) * l_tr + phi * mu_cal, b.upper);
    b.phi = phi;
    return b;
}

double DeploymentBounds::eval_cost_estimate() const {
    const auto& em = effort_model();
    return em.render_ms + f_passes_ * em.forward_ms + 32 * 20 * em.ltr_step_ms;
}

StaticBounds::StaticBounds(const TickContext& ctx, const RewardConfig& cfg)
    : ctx_(ctx), cfg_(cfg) {}

Bounds StaticBounds::evaluate(const DrivingNodeView& view) {
    Bounds b;
    b.lower = heuristic_l_tr(view, *ctx_.kinds, cfg_, clock_);
    // Optimistic: the goal reward reached at the earliest possible step.
    const DrivingState& first = view.states->front();
    const double d = std::max(0.0, dist(first.ego.pos, first.ego.goal) - cfg_.d_goal);
    const double steps = std::ceil(d / (cfg_.v_max_ego * cfg_.dt));
    b.upper = std::pow(cfg_.gamma, steps) * cfg_.r_goal;
    b.lower = std::min(b.lower, b.upper);
    b.phi = 0.0;
    return b;
}

double StaticBounds::eval_cost_estimate() const {
    return 32 * 20 * effort_model().ltr_step_ms;
}

std::vector<DespotSearch<DrivingModel>::Scenario> sample_scenarios(const Belief& b, int k,
                                                                   std::uint64_t seed) {
    if (b.particles.empty()) throw EmptyBelief("belief has no particles");
    std::vector<DespotSearch<DrivingModel>::Scenario> out;
    out.reserve(k);
    // Systematic weight-proportional draw.
    std::uint64_t s = seed;
    const double u0 =
        (static_cast<double>(splitmix64(s) >> 11) * 0x1.0p-53) / static_cast<double>(k);
    double cum = 0.0;
    int i = -1;
    for (int j = 0; j < k; ++j) {
        const double u = u0 + static_cast<double>(j) / k;
        while (cum < u && i + 1 < static_cast<int>(b.particles.size())) {
            ++i;
            cum += b.particles[i].weight;
        }
        const Particle& p = b.particles[std::max(i, 0)];
        DespotSearch<DrivingModel>::Scenario sc;
        sc.state.ego = b.ego;
        sc.state.exo = p.exo;
        sc.weight = 1.0 / k;
        sc.seed = mix_seed(seed, static_cast<std::uint64_t>(j));
        out.push_back(std::move(sc));
    }
    return out;
}

VelocityPlan plan_velocity(const Belief& b, const PlannedPath& path, BoundsProvider& bounds,
                           const TickContext& ctx, const PlannerConfig& pcfg,
                           const RewardConfig& cfg, std::uint64_t seed, Acc prev_acc,
                           double prev_reward, SearchTrace* trace) {
    VirtualClock clock(pcfg.budget_ms);
    bounds.attach(&clock);

    DrivingModel model(&path, ctx.obstacles, ctx.kinds, cfg, pcfg);
    DespotSearch<DrivingModel> search(
        model,
        [&bounds](const DrivingNodeView& view) { return bounds.evaluate(view); },
        bounds.eval_cost_estimate(), pcfg, clock, trace);

    auto scenarios = sample_scenarios(b, pcfg.scenarios, seed);
    const auto res =
        search.run(std::move(scenarios), static_cast<int>(prev_acc), prev_reward);

    VelocityPlan plan;
    plan.chosen = static_cast<Acc>(res.chosen_action);
    for (int a = 0; a < 3; ++a) {
        plan.action_lower[a] = res.action_lower[a];
        plan.action_upper[a] = res.action_upper[a];
    }
    // Softmax over normalized lower bounds at temperature t_soft.
    const double max_l = *std::max_element(plan.action_lower.begin(), plan.action_lower.end());
    const double min_l = *std::min_element(plan.action_lower.begin(), plan.action_lower.end());
    std::array<double, 3> z{};
    for (int a = 0; a < 3; ++a)
        z[a] = (plan.action_lower[a] - max_l) / (max_l - min_l + 1e-9) / pcfg.t_soft;
    plan.policy = softmax3(z);
    plan.effort = res.effort;
    plan.effort.net_eval_ms = bounds.net_ms();
    return plan;
}

std::string trace_to_json(const SearchTrace& trace) {
    std::ostringstream os;
    char buf[64];
    auto num = [&buf](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    os << "{\"nodes\":[";
    for (std::size_t i = 0; i < trace.nodes.size(); ++i) {
        const auto& n = trace.nodes[i];
        if (i) os << ",";
        os << "{\"id\":" << n.id << ",\"parent\":" << n.parent << ",\"action\":" << n.action
           << ",\"obs\":" << n.obs << ",\"depth\":" << n.depth << ",\"w\":" << num(n.weight)
           << ",\"L\":" << num(n.lower) << ",\"U\":" << num(n.upper)
           << ",\"phi\":" << num(n.phi) << "}";
    }
    os << "],\"trials\":[";
    for (std::size_t t = 0; t < trace.trials.size(); ++t) {
        if (t) os << ",";
        os << "{\"path\":[";
        for (std::size_t i = 0; i < trace.trials[t].size(); ++i) {
            if (i) os << ",";
            os << trace.trials[t][i];
        }
        os << "],\"end\":\"" << trace.trial_end[t] << "\",\"rootGap\":"
           << num(trace.root_gaps[t]) << "}";
    }
    os << "],\"chosen\":" << trace.chosen_action << "}";
    return os.str();
}

}  // namespace hyplan
