#include "hyplan/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace hyplan {

using nlohmann::json;

const char* method_name(Method m) {
    switch (m) {
        case Method::Hyplan: return "hyplan";
        case Method::HyplanNoPrune: return "hyplan-noprune";
        case Method::HyplanNoCalib: return "hyplan-nocalib";
        case Method::HyplanNoPred: return "hyplan-nopred";
        case Method::DespotLtr: return "despot-ltr";
        case Method::NavppoOnly: return "navppo-only";
    }
    return "?";
}

std::optional<Method> method_from_name(const std::string& s) {
    for (const Method m : {Method::Hyplan, Method::HyplanNoPrune, Method::HyplanNoCalib,
                           Method::HyplanNoPred, Method::DespotLtr, Method::NavppoOnly})
        if (s == method_name(m)) return m;
    return std::nullopt;
}

bool method_needs_model(Method m) { return m != Method::DespotLtr; }

namespace {

double now_wall_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<AgentKind> agent_kinds(const Scene& scene) {
    std::vector<AgentKind> kinds;
    for (const auto& e : scene.initial.exo) kinds.push_back(e.kind);
    return kinds;
}

std::vector<AgentState> exo_states(const WorldState& w) {
    std::vector<AgentState> out;
    for (const auto& e : w.exo) out.push_back(e.state);
    return out;
}

// Shared per-episode machinery for every method.
struct EpisodeRunner {
    const Scene& scene;
    const HarnessConfig& cfg;
    Method method;
    const NetworkParams* params;
    const CalibrationTable* calib;
    std::vector<std::string>* traces;
    bool training_mode = false;

    std::uint64_t scene_seed;
    WorldState world;
    Belief belief;
    Rng belief_rng;
    Rng policy_rng;
    std::optional<FloatNet> net;
    LstmState lstm;
    std::vector<PathPose> past;
    Acc prev_acc = Acc::Maintain;
    double prev_reward = 0.0;
    std::vector<AgentKind> kinds;
    std::vector<WorldState> history;

    EpisodeLog log;
    TransitionBuffer buffer;
    std::vector<CalibrationSample> calib_samples;
    bool collect_transitions = false;
    bool collect_calibration = false;

    EpisodeRunner(const Scene& scene_, Method method_, const HarnessConfig& cfg_,
                  const NetworkParams* params_, const CalibrationTable* calib_,
                  std::vector<std::string>* traces_, bool training_mode_ = false)
        : scene(scene_),
          cfg(cfg_),
          method(method_),
          params(params_),
          calib(calib_),
          traces(traces_),
          training_mode(training_mode_),
          scene_seed(mix_seed(cfg_.seed, hash_str(scene_.id))),
          belief_rng(mix_seed(scene_seed, 0xbe11ull)),
          policy_rng(mix_seed(scene_seed, 0xacc1ull)),
          kinds(agent_kinds(scene_)) {
        if (method_needs_model(method) && !params)
            throw MissingModel(std::string("method ") + method_name(method) +
                               " requires a model");
        if (!training_mode &&
            (method == Method::Hyplan || method == Method::HyplanNoPrune ||
             method == Method::HyplanNoCalib || method == Method::HyplanNoPred) &&
            !calib)
            throw MissingModel(std::string("method ") + method_name(method) +
                               " requires a calibration table");
        if (params) {
            net.emplace(*params);
            lstm = zero_state(params->cfg);
        }
        world = scene.initial;
        belief = init_belief(observe(world), scene, belief_rng);
        history.push_back(world);
        log.scene_id = scene.id;
        log.template_id = scene.template_id;
        log.method = method_name(method);
        log.seed = cfg.seed;
    }

    IntentionImage belief_image(const PlannedPath& path, const TrajPrediction& preds) const {
        return render_intention_image(belief, path, past, preds, world.obstacles);
    }

    void run(bool training_mode) {
        const auto& em = effort_model();
        collect_transitions = training_mode;
        for (int t = 0; t < cfg.t_max; ++t) {
            const double wall0 = now_wall_ms();
            double exec_ms = 0.0;

            // Current ego pose enters the past-path window.
            past.push_back(PathPose{world.ego.pos, world.ego.heading, 0.0});
            if (past.size() > 8) past.erase(past.begin());

            const TrajPrediction preds =
                predict_trajectories(belief, kPredictionHorizon, cfg.world.dt);
            const TrajPrediction empty_preds;
            const TrajPrediction& costmap_preds =
                method == Method::HyplanNoPred ? empty_preds : preds;

            Action action;
            EffortStats effort;
            PlannedPath path;
            bool have_path = false;
            try {
                const Costmap map =
                    build_costmap(world.ego, world.obstacles, costmap_preds, cfg.pathplan);
                auto astar = hybrid_astar(world.ego, world.ego.goal, map, cfg.pathplan);
                path = std::move(astar.path);
                have_path = true;
                exec_ms += astar.virtual_ms;
                action.steer_deg = extract_steering(path);
            } catch (const NoPath&) {
                action.steer_deg = 0.0;
                action.acc = Acc::Decelerate;
            }

            TickContext ctx;
            ctx.path = &path;
            ctx.preds = &preds;
            ctx.past = &past;
            ctx.obstacles = &world.obstacles;
            ctx.kinds = &kinds;
            ctx.lstm = params ? &lstm : nullptr;
            ctx.ego_goal = world.ego.goal;

            std::array<double, 3> planner_policy{1.0 / 3, 1.0 / 3, 1.0 / 3};
            if (have_path) {
                const std::uint64_t plan_seed = mix_seed(scene_seed, 0x9137ull, t);
                SearchTrace trace;
                SearchTrace* trace_ptr = traces ? &trace : nullptr;
                if (method == Method::NavppoOnly) {
                    // Actor-only ablation: sample acc from the policy head.
                    const IntentionImage img = belief_image(path, preds);
                    const FeatureVector x =
                        make_features(prev_reward, prev_acc, world.ego.speed(), cfg.world);
                    const auto fwd = net->forward(img.data.data(), x, lstm, nullptr);
                    planner_policy = softmax3(fwd.logits);
                    const double u = policy_rng.uniform();
                    int a = 0;
                    double cum = 0.0;
                    for (int i = 0; i < 3; ++i) {
                        cum += planner_policy[i];
                        if (u < cum) {
                            a = i;
                            break;
                        }
                        a = i;
                    }
                    action.acc = static_cast<Acc>(a);
                    effort = EffortStats{};
                    effort.net_eval_ms = em.forward_ms;
                    exec_ms += em.render_ms + em.forward_ms;
                } else {
                    std::unique_ptr<BoundsProvider> bounds;
                    if (training_mode || method == Method::DespotLtr) {
                        if (training_mode)
                            bounds = std::make_unique<TrainingBounds>(&*net, ctx, cfg.world);
                        else
                            bounds = std::make_unique<StaticBounds>(ctx, cfg.world);
                    } else {
                        auto dep = std::make_unique<DeploymentBounds>(
                            &*net, calib, cfg.f_passes, mix_seed(scene_seed, 0xd0ull, t), ctx,
                            cfg.world);
                        if (method == Method::HyplanNoPrune) dep->force_phi_zero(true);
                        if (method == Method::HyplanNoCalib) dep->skip_calibration(true);
                        bounds = std::move(dep);
                    }
                    const VelocityPlan plan =
                        plan_velocity(belief, path, *bounds, ctx, cfg.planner, cfg.world,
                                      plan_seed, prev_acc, prev_reward, trace_ptr);
                    action.acc = plan.chosen;
                    planner_policy = plan.policy;
                    effort = plan.effort;
                    exec_ms += plan.effort.planning_ms;
                }
                if (traces) traces->push_back(trace_to_json(trace));
            }

            // Collection and the recurrent advance share one root forward.
            if (params) {
                const IntentionImage img = belief_image(path, preds);
                const FeatureVector x =
                    make_features(prev_reward, prev_acc, world.ego.speed(), cfg.world);
                if (collect_calibration) {
                    Rng mc_rng(mix_seed(scene_seed, 0xca11ull, t));
                    const McStats stats = mc_forward_stats(*net, img.data.data(), x, lstm,
                                                           cfg.f_passes, mc_rng);
                    calib_samples.push_back(CalibrationSample{stats.mean, stats.var, 0.0});
                }
                const auto fwd = net->forward(img.data.data(), x, lstm, nullptr);
                if (method != Method::NavppoOnly) exec_ms += em.render_ms + em.forward_ms;
                if (collect_transitions) {
                    TransitionStep step;
                    step.image.assign(img.data.begin(), img.data.end());
                    step.features = x;
                    step.lstm_in = lstm;
                    step.planner_policy = planner_policy;
                    step.acc_taken = static_cast<int>(action.acc);
                    step.value = fwd.value;
                    buffer.steps.push_back(std::move(step));
                }
                lstm = fwd.state;
            }

            const WorldState next = transition(world, action, cfg.world);
            const double r = reward(world, action, next, prev_acc, cfg.world);
            const bool terminal =
                is_crash_state(next, cfg.world) || is_goal_state(next, cfg.world);
            if (collect_transitions) {
                buffer.steps.back().reward = r;
                buffer.steps.back().terminal = terminal;
            }
            if (collect_calibration && !calib_samples.empty()) {
                // Reward recorded now; targets are derived after the episode.
            }

            StepRecord rec;
            rec.t = t;
            rec.steer = action.steer_deg;
            rec.acc = action.acc;
            rec.reward = r;
            rec.effort = effort;
            rec.exec_ms = exec_ms;
            rec.wall_ms = now_wall_ms() - wall0;
            rec.belief_ess = effective_sample_size(belief);
            rec.belief_resets = belief.reset_count;
            log.steps.push_back(rec);

            prev_acc = action.acc;
            prev_reward = r;
            world = next;
            history.push_back(world);
            if (terminal) break;

            const Observation o = observe(world);
            belief = predict_particles(belief, action, world.obstacles, cfg.world);
            belief = update_belief(belief, o, scene, world.obstacles, belief_rng);
        }

        log.outcome = classify_outcome(history, cfg.world, cfg.t_max);
        if (log.outcome == Outcome::Goal || is_goal_state(world, cfg.world))
            log.ttg = static_cast<double>(log.steps.size()) * cfg.world.dt;

        // Bootstrap for timeout episodes; terminal episodes bootstrap at 0.
        if (collect_transitions && !buffer.steps.empty()) {
            if (!buffer.steps.back().terminal && params) {
                const TrajPrediction preds =
                    predict_trajectories(belief, kPredictionHorizon, cfg.world.dt);
                PlannedPath no_path;
                const IntentionImage img = belief_image(no_path, preds);
                const FeatureVector x =
                    make_features(prev_reward, prev_acc, world.ego.speed(), cfg.world);
                buffer.bootstrap_value = net->forward(img.data.data(), x, lstm, nullptr).value;
            } else {
                buffer.bootstrap_value = 0.0;
            }
        }
        // Calibration targets: lambda-return = GAE advantage + value estimate.
        if (collect_calibration && !calib_samples.empty()) {
            const std::size_t n = buffer.steps.size();
            std::vector<double> rewards(n), values(n + 1);
            std::vector<std::uint8_t> terminals(n);
            for (std::size_t i = 0; i < n; ++i) {
                rewards[i] = buffer.steps[i].reward;
                values[i] = calib_samples[i].mu;
                terminals[i] = buffer.steps[i].terminal ? 1 : 0;
            }
            values[n] = buffer.bootstrap_value;
            const auto adv =
                gae(rewards, values, terminals, cfg.ppo.gamma, cfg.ppo.gae_lambda);
            for (std::size_t i = 0; i < n; ++i)
                calib_samples[i].target = adv[i] + calib_samples[i].mu;
        }
    }
};

}  // namespace

EpisodeLog run_scene(const Scene& scene, Method method, const HarnessConfig& cfg,
                     const NetworkParams* params, const CalibrationTable* calib,
                     std::vector<std::string>* traces) {
    EpisodeRunner runner(scene, method, cfg, params, calib, traces);
    runner.run(/*training_mode=*/false);
    return std::move(runner.log);
}

CollectResult run_scene_collect(const Scene& scene, const HarnessConfig& cfg,
                                const NetworkParams& params, bool collect_calibration) {
    // Training mode uses training bounds; no calibration table is consulted.
    EpisodeRunner runner(scene, Method::Hyplan, cfg, &params, nullptr, nullptr,
                         /*training_mode=*/true);
    runner.collect_calibration = collect_calibration;
    runner.run(/*training_mode=*/true);
    CollectResult out;
    out.log = std::move(runner.log);
    out.buffer = std::move(runner.buffer);
    out.calib_samples = std::move(runner.calib_samples);
    return out;
}

TrainResult train_procedure(const std::vector<Scene>& train_scenes,
                            const std::vector<Scene>& calib_scenes, const HarnessConfig& cfg) {
    if (train_scenes.empty() || calib_scenes.empty())
        throw NonemptySplitRequired("training and calibration splits must be nonempty");

    const double wall0 = now_wall_ms();
    Rng init_rng(mix_seed(cfg.seed, 0x1217ull));
    TrainResult result{init_params(cfg.net, init_rng), {}, 0, 0.0};
    AdamOptimizer opt(result.params, cfg.ppo.lr);

    int scene_counter = 0;
    for (int pass = 0; pass < cfg.train_passes; ++pass) {
        for (const auto& scene : train_scenes) {
            auto collected = run_scene_collect(scene, cfg, result.params, false);
            if (collected.buffer.steps.empty()) continue;
            Rng update_rng(mix_seed(cfg.seed, 0x7261ull, scene_counter));
            const auto stats =
                train_update(result.params, opt, collected.buffer, cfg.ppo, update_rng);
            if (stats.aborted_non_finite) ++result.skipped_non_finite;
            ++scene_counter;
            if (scene_counter % 25 == 0)
                std::fprintf(stderr, "[train] pass %d scene %d/%zu (%s) outcome=%s\n", pass + 1,
                             scene_counter, train_scenes.size() * cfg.train_passes, scene.id.c_str(),
                             outcome_name(collected.log.outcome));
        }
    }

    // Calibration pass: training-mode planning, MC statistics per step.
    std::vector<CalibrationSample> samples;
    for (const auto& scene : calib_scenes) {
        auto collected = run_scene_collect(scene, cfg, result.params, true);
        samples.insert(samples.end(), collected.calib_samples.begin(),
                       collected.calib_samples.end());
    }
    result.calib = fit_crude(samples);
    // Confidence half-point: median calibrated variance on this pass.
    std::vector<double> cal_vars;
    for (const auto& s : samples) {
        double mu, var;
        crude_calibrate(s.mu, s.sigma_sq, result.calib, &mu, &var);
        if (var > 0.0) cal_vars.push_back(var);
    }
    if (!cal_vars.empty()) {
        std::sort(cal_vars.begin(), cal_vars.end());
        const std::size_t n = cal_vars.size();
        result.calib.conf_scale =
            n % 2 == 1 ? cal_vars[n / 2] : 0.5 * (cal_vars[n / 2 - 1] + cal_vars[n / 2]);
    }

    result.wall_seconds = (now_wall_ms() - wall0) / 1000.0;
    result.params.training_seconds = result.wall_seconds;
    return result;
}

MetricsRow compute_metrics(const std::string& method, const std::vector<EpisodeLog>& logs,
                           double training_days) {
    MetricsRow row;
    row.method = method;
    row.training_days = training_days;

    std::map<int, std::vector<const EpisodeLog*>> by_template;
    for (const auto& log : logs) by_template[log.template_id].push_back(&log);
    if (by_template.empty()) return row;

    int si90 = 0;
    std::vector<double> crash, near, timeout, ttg, exec_ms, pt, ptn, ptd, bnn, obf, nnet;
    for (const auto& [tid, group] : by_template) {
        int n = 0, n_crash = 0, n_near = 0, n_timeout = 0;
        std::vector<double> scene_ttg;
        std::vector<double> s_exec, s_pt, s_ptn, s_ptd, s_bnn, s_obf, s_nnet;
        for (const auto* log : group) {
            ++n;
            if (log->outcome == Outcome::Crash) ++n_crash;
            else if (log->outcome == Outcome::NearMiss) ++n_near;
            else if (log->outcome == Outcome::Timeout) ++n_timeout;
            else scene_ttg.push_back(log->ttg);
            double e = 0, a = 0, b = 0, c = 0, d = 0, f = 0, g = 0;
            for (const auto& s : log->steps) {
                e += s.exec_ms;
                a += s.effort.planning_ms;
                b += s.effort.trial_count;
                c += s.effort.mean_trial_depth;
                d += s.effort.nodes_created;
                f += s.effort.mean_obs_branching;
                g += s.effort.net_eval_ms;
            }
            const double m = log->steps.empty() ? 1.0 : static_cast<double>(log->steps.size());
            s_exec.push_back(e / m);
            s_pt.push_back(a / m);
            s_ptn.push_back(b / m);
            s_ptd.push_back(c / m);
            s_bnn.push_back(d / m);
            s_obf.push_back(f / m);
            s_nnet.push_back(g / m);
        }
        auto mean = [](const std::vector<double>& v) {
            if (v.empty()) return 0.0;
            double s = 0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        };
        const double fail_rate = static_cast<double>(n_crash + n_near) / n;
        if (fail_rate <= 0.10) ++si90;
        crash.push_back(100.0 * n_crash / n);
        near.push_back(100.0 * n_near / n);
        timeout.push_back(100.0 * n_timeout / n);
        if (!scene_ttg.empty()) ttg.push_back(mean(scene_ttg));
        exec_ms.push_back(mean(s_exec));
        pt.push_back(mean(s_pt));
        ptn.push_back(mean(s_ptn));
        ptd.push_back(mean(s_ptd));
        bnn.push_back(mean(s_bnn));
        obf.push_back(mean(s_obf));
        nnet.push_back(mean(s_nnet));
    }
    auto mean = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double s = 0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    };
    row.si90 = si90;
    row.crash_pct = mean(crash);
    row.near_miss_pct = mean(near);
    row.timeout_pct = mean(timeout);
    row.ttg = mean(ttg);
    row.execution_ms = mean(exec_ms);
    row.pt = mean(pt);
    row.ptn = mean(ptn);
    row.ptd = mean(ptd);
    row.bnn = mean(bnn);
    row.obf = mean(obf);
    row.nnet = mean(nnet);
    return row;
}

MetricsReport evaluate(const std::vector<Scene>& test_scenes, const std::vector<Method>& methods,
                       const HarnessConfig& cfg, const NetworkParams* params,
                       const CalibrationTable* calib, std::vector<EpisodeLog>* logs_out) {
    MetricsReport report;
    for (const Method method : methods) {
        std::vector<EpisodeLog> logs(test_scenes.size());
        std::atomic<std::size_t> next{0};
        const int n_workers = std::max(1, cfg.workers);
        std::vector<std::thread> threads;
        std::atomic<bool> failed{false};
        std::string error_msg;
        std::mutex error_mu;
        for (int w = 0; w < n_workers; ++w) {
            threads.emplace_back([&] {
                while (true) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= test_scenes.size() || failed.load()) break;
                    try {
                        logs[i] = run_scene(test_scenes[i], method, cfg, params, calib);
                    } catch (const std::exception& e) {
                        std::lock_guard<std::mutex> lk(error_mu);
                        error_msg = e.what();
                        failed.store(true);
                        break;
                    }
                }
            });
        }
        for (auto& t : threads) t.join();
        if (failed.load()) throw MissingModel(error_msg);

        const double training_days =
            method_needs_model(method) && params ? params->training_seconds / 86400.0 : 0.0;
        report.rows.push_back(compute_metrics(method_name(method), logs, training_days));
        if (logs_out)
            for (auto& log : logs) logs_out->push_back(std::move(log));
    }
    return report;
}

namespace {

std::string fmt_num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string metrics_to_csv(const MetricsReport& report) {
    std::ostringstream os;
    os << "method,SI90,crashPct,nearMissPct,timeoutPct,TTG,executionMs,trainingDays,PT,PTN,PTD,"
          "BNN,OBF,NNET\n";
    for (const auto& r : report.rows) {
        os << r.method << ',' << r.si90 << ',' << fmt_num(r.crash_pct) << ','
           << fmt_num(r.near_miss_pct) << ',' << fmt_num(r.timeout_pct) << ',' << fmt_num(r.ttg)
           << ',' << fmt_num(r.execution_ms) << ',' << fmt_num(r.training_days) << ','
           << fmt_num(r.pt) << ',' << fmt_num(r.ptn) << ',' << fmt_num(r.ptd) << ','
           << fmt_num(r.bnn) << ',' << fmt_num(r.obf) << ',' << fmt_num(r.nnet) << '\n';
    }
    return os.str();
}

std::string episode_log_to_jsonl(const EpisodeLog& log) {
    std::ostringstream os;
    for (const auto& s : log.steps) {
        json j{{"sceneId", log.scene_id},
               {"templateId", log.template_id},
               {"method", log.method},
               {"seed", log.seed},
               {"t", s.t},
               {"steer", s.steer},
               {"acc", acc_name(s.acc)},
               {"reward", s.reward},
               {"execMs", s.exec_ms},
               {"wallMs", s.wall_ms},
               {"pt", s.effort.planning_ms},
               {"ptn", s.effort.trial_count},
               {"ptd", s.effort.mean_trial_depth},
               {"bnn", s.effort.nodes_created},
               {"obf", s.effort.mean_obs_branching},
               {"nnet", s.effort.net_eval_ms},
               {"ess", s.belief_ess},
               {"beliefResets", s.belief_resets}};
        os << j.dump() << '\n';
    }
    json tail{{"sceneId", log.scene_id},
              {"templateId", log.template_id},
              {"method", log.method},
              {"seed", log.seed},
              {"outcome", outcome_name(log.outcome)},
              {"steps", log.steps.size()},
              {"ttg", log.ttg}};
    os << tail.dump() << '\n';
    return os.str();
}

void write_logs_jsonl(const std::string& path, const std::vector<EpisodeLog>& logs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (const auto& log : logs) f << episode_log_to_jsonl(log);
}

std::vector<EpisodeLog> read_logs_jsonl(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::map<std::pair<std::string, std::string>, EpisodeLog> by_key;
    std::vector<std::pair<std::string, std::string>> order;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const auto key = std::make_pair(j.at("method").get<std::string>(),
                                        j.at("sceneId").get<std::string>());
        if (!by_key.count(key)) {
            order.push_back(key);
            EpisodeLog log;
            log.scene_id = key.second;
            log.method = key.first;
            log.template_id = j.at("templateId").get<int>();
            log.seed = j.value("seed", 0ull);
            by_key[key] = std::move(log);
        }
        EpisodeLog& log = by_key[key];
        if (j.contains("outcome")) {
            const std::string o = j.at("outcome").get<std::string>();
            for (const Outcome oc :
                 {Outcome::Crash, Outcome::NearMiss, Outcome::Goal, Outcome::Timeout})
                if (o == outcome_name(oc)) log.outcome = oc;
            log.ttg = j.value("ttg", 0.0);
        } else {
            StepRecord s;
            s.t = j.at("t").get<int>();
            s.steer = j.at("steer").get<double>();
            s.acc = acc_from_name(j.at("acc").get<std::string>()).value_or(Acc::Maintain);
            s.reward = j.at("reward").get<double>();
            s.exec_ms = j.at("execMs").get<double>();
            s.wall_ms = j.value("wallMs", 0.0);
            s.effort.planning_ms = j.at("pt").get<double>();
            s.effort.trial_count = j.at("ptn").get<int>();
            s.effort.mean_trial_depth = j.at("ptd").get<double>();
            s.effort.nodes_created = j.at("bnn").get<int>();
            s.effort.mean_obs_branching = j.at("obf").get<double>();
            s.effort.net_eval_ms = j.at("nnet").get<double>();
            log.steps.push_back(s);
        }
    }
    std::vector<EpisodeLog> out;
    for (const auto& key : order) out.push_back(std::move(by_key[key]));
    return out;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

void apply_config(HarnessConfig& cfg, const std::map<std::string, std::string>& kv) {
    auto get_d = [&kv](const char* k, double& out) {
        auto it = kv.find(k);
        if (it != kv.end()) out = std::stod(it->second);
    };
    auto get_i = [&kv](const char* k, int& out) {
        auto it = kv.find(k);
        if (it != kv.end()) out = std::stoi(it->second);
    };
    auto it = kv.find("seed");
    if (it != kv.end()) cfg.seed = std::stoull(it->second);
    get_i("t_max", cfg.t_max);
    get_i("f_passes", cfg.f_passes);
    get_i("train_passes", cfg.train_passes);
    get_i("workers", cfg.workers);
    get_i("planner.scenarios", cfg.planner.scenarios);
    get_i("planner.max_depth", cfg.planner.max_depth);
    get_i("planner.trial_cap", cfg.planner.trial_cap);
    get_d("planner.budget_ms", cfg.planner.budget_ms);
    get_d("planner.eps_term", cfg.planner.eps_term);
    get_d("planner.prune_confidence", cfg.planner.prune_confidence);
    get_d("pathplan.budget_ms", cfg.pathplan.budget_ms);
    get_d("ppo.lr", cfg.ppo.lr);
    get_i("ppo.epochs", cfg.ppo.epochs);
    get_i("ppo.minibatch", cfg.ppo.minibatch);
}

}  // namespace hyplan
