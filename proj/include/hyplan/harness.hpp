#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hyplan/belief.hpp"
#include "hyplan/calibration.hpp"
#include "hyplan/learner.hpp"
#include "hyplan/net.hpp"
#include "hyplan/pathplan.hpp"
#include "hyplan/planner.hpp"
#include "hyplan/scenarios.hpp"

namespace hyplan {

struct MissingModel : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NonemptySplitRequired : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Method : int {
    Hyplan = 0,
    HyplanNoPrune,
    HyplanNoCalib,
    HyplanNoPred,
    DespotLtr,
    NavppoOnly,
};

const char* method_name(Method m);
std::optional<Method> method_from_name(const std::string& s);
bool method_needs_model(Method m);

struct HarnessConfig {
    RewardConfig world;
    PlannerConfig planner;
    PathPlanConfig pathplan;
    PpoConfig ppo;
    NetConfig net;
    int t_max = 120;
    int f_passes = 10;
    int train_passes = 3;
    int workers = 2;
    std::uint64_t seed = 0;
};

struct StepRecord {
    int t = 0;
    double steer = 0.0;
    Acc acc = Acc::Maintain;
    double reward = 0.0;
    EffortStats effort;
    double exec_ms = 0.0;   // deterministic virtual execution time
    double wall_ms = 0.0;   // measured, informational only
    double belief_ess = 0.0;
    int belief_resets = 0;
};

struct EpisodeLog {
    std::string scene_id;
    int template_id = 0;
    std::string method;
    std::uint64_t seed = 0;
    std::vector<StepRecord> steps;
    Outcome outcome = Outcome::Timeout;
    double ttg = 0.0;  // s, meaningful for Goal episodes
};

// Accumulated while planning one scene in training mode.
struct CollectResult {
    EpisodeLog log;
    TransitionBuffer buffer;
    std::vector<CalibrationSample> calib_samples;
};

EpisodeLog run_scene(const Scene& scene, Method method, const HarnessConfig& cfg,
                     const NetworkParams* params, const CalibrationTable* calib,
                     std::vector<std::string>* traces = nullptr);

// Training-mode rollout that also fills the transition buffer (and, when
// requested, MC-dropout calibration samples).
CollectResult run_scene_collect(const Scene& scene, const HarnessConfig& cfg,
                                const NetworkParams& params, bool collect_calibration);

struct TrainResult {
    NetworkParams params;
    CalibrationTable calib;
    int skipped_non_finite = 0;
    double wall_seconds = 0.0;
};

TrainResult train_procedure(const std::vector<Scene>& train_scenes,
                            const std::vector<Scene>& calib_scenes, const HarnessConfig& cfg);

struct MetricsRow {
    std::string method;
    int si90 = 0;
    double crash_pct = 0.0;
    double near_miss_pct = 0.0;
    double timeout_pct = 0.0;
    double ttg = 0.0;
    double execution_ms = 0.0;
    double training_days = 0.0;
    double pt = 0.0, ptn = 0.0, ptd = 0.0, bnn = 0.0, obf = 0.0, nnet = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
};

// Two-level averaging: scene scores average within each scenario first, then
// across scenarios.
MetricsRow compute_metrics(const std::string& method, const std::vector<EpisodeLog>& logs,
                           double training_days);

MetricsReport evaluate(const std::vector<Scene>& test_scenes, const std::vector<Method>& methods,
                       const HarnessConfig& cfg, const NetworkParams* params,
                       const CalibrationTable* calib, std::vector<EpisodeLog>* logs_out = nullptr);

std::string metrics_to_csv(const MetricsReport& report);

std::string episode_log_to_jsonl(const EpisodeLog& log);
void write_logs_jsonl(const std::string& path, const std::vector<EpisodeLog>& logs);
std::vector<EpisodeLog> read_logs_jsonl(const std::string& path);

// Plain `key = value` configuration text; '#' starts a comment.
std::map<std::string, std::string> parse_config_text(const std::string& text);
void apply_config(HarnessConfig& cfg, const std::map<std::string, std::string>& kv);

int cli_main(int argc, const char* const* argv);

}  // namespace hyplan
