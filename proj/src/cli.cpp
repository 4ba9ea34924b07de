#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "hyplan/harness.hpp"
#include "hyplan/intention.hpp"

namespace hyplan {

namespace {

std::uint64_t env_seed_fallback() {
    const char* env = std::getenv("HYPLAN_SEED");
    if (!env) return 0;
    return std::strtoull(env, nullptr, 10);
}

// Grid spec: "speeds=0.5:0.25:2.0,dists=5:5:45" (start:step:stop).
ParamGrid parse_grid(const std::string& spec) {
    ParamGrid grid = default_grid();
    std::istringstream is(spec);
    std::string part;
    while (std::getline(is, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad grid spec: " + part);
        const std::string key = part.substr(0, eq);
        double a, b, c;
        if (std::sscanf(part.c_str() + eq + 1, "%lf:%lf:%lf", &a, &b, &c) != 3)
            throw std::runtime_error("bad grid range: " + part);
        std::vector<double> vals;
        for (double v = a; v <= c + 1e-9; v += b) vals.push_back(v);
        if (key == "speeds") grid.ped_speeds = vals;
        else if (key == "dists") grid.cross_dists = vals;
        else throw std::runtime_error("unknown grid key: " + key);
    }
    return grid;
}

HarnessConfig load_harness_config(const std::string& config_path, std::uint64_t seed) {
    HarnessConfig cfg;
    cfg.seed = seed;
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw std::runtime_error("cannot open config: " + config_path);
        std::stringstream ss;
        ss << f.rdbuf();
        apply_config(cfg, parse_config_text(ss.str()));
    }
    return cfg;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"HyPlan: learning-assisted online POMDP planning for collision-free driving"};
    app.require_subcommand(1);

    std::string scenes_path, model_path, calib_path, out_path, trace_path, logs_path;
    std::string method_name_arg = "hyplan", grid_spec, config_path, png_path, scene_id;
    std::uint64_t seed = env_seed_fallback();
    std::string split = "test";

    auto* gen = app.add_subcommand("gen", "generate the scenario benchmark");
    gen->add_option("--out", out_path, "output scenes JSON")->required();
    gen->add_option("--seed", seed, "seed");
    gen->add_option("--grid", grid_spec, "grid spec speeds=a:b:c,dists=a:b:c");

    auto* train = app.add_subcommand("train", "train the learner and fit calibration");
    train->add_option("--scenes", scenes_path, "scenes JSON")->required();
    train->add_option("--model", model_path, "output model path")->required();
    train->add_option("--calib", calib_path, "output calibration path")->required();
    train->add_option("--seed", seed, "seed");
    train->add_option("--config", config_path, "key = value config file");

    auto* eval = app.add_subcommand("eval", "evaluate a method on the test split");
    eval->add_option("--scenes", scenes_path, "scenes JSON")->required();
    eval->add_option("--method", method_name_arg, "method name");
    eval->add_option("--model", model_path, "model path");
    eval->add_option("--calib", calib_path, "calibration path");
    eval->add_option("--out", out_path, "metrics CSV output")->required();
    eval->add_option("--logs", logs_path, "episode logs JSONL output");
    eval->add_option("--seed", seed, "seed");
    eval->add_option("--split", split, "which split to run: test|train|calib|all");
    eval->add_option("--config", config_path, "key = value config file");

    auto* plan = app.add_subcommand("plan", "run one scene and dump planner traces");
    plan->add_option("--scenes", scenes_path, "scenes JSON")->required();
    plan->add_option("--scene", scene_id, "scene id (default: first)");
    plan->add_option("--method", method_name_arg, "method name");
    plan->add_option("--model", model_path, "model path");
    plan->add_option("--calib", calib_path, "calibration path");
    plan->add_option("--trace", trace_path, "per-decision trace JSON output");
    plan->add_option("--png", png_path, "dump the first intention image as PNG");
    plan->add_option("--seed", seed, "seed");
    plan->add_option("--config", config_path, "key = value config file");

    auto* report = app.add_subcommand("report", "aggregate episode logs into metrics CSV");
    report->add_option("--logs", logs_path, "episode logs JSONL")->required();
    report->add_option("--out", out_path, "metrics CSV output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            const ParamGrid grid = grid_spec.empty() ? default_grid() : parse_grid(grid_spec);
            const auto scenes = generate_benchmark(grid, seed);
            write_scenes_file(out_path, scenes);
            std::fprintf(stderr, "wrote %zu scenes to %s\n", scenes.size(), out_path.c_str());
            return 0;
        }
        if (train->parsed()) {
            HarnessConfig cfg = load_harness_config(config_path, seed);
            const auto scenes = read_scenes_file(scenes_path);
            const auto splits = split_benchmark(scenes, cfg.seed);
            const auto result = train_procedure(splits.train, splits.calib, cfg);
            save_params(result.params, model_path);
            write_calibration_file(calib_path, result.calib);
            std::fprintf(stderr,
                         "trained on %zu scenes (%d passes), calibrated on %zu; %.1f s wall\n",
                         splits.train.size(), cfg.train_passes, splits.calib.size(),
                         result.wall_seconds);
            return 0;
        }
        if (eval->parsed()) {
            HarnessConfig cfg = load_harness_config(config_path, seed);
            const auto method = method_from_name(method_name_arg);
            if (!method) throw std::runtime_error("unknown method: " + method_name_arg);
            const auto scenes = read_scenes_file(scenes_path);
            const auto splits = split_benchmark(scenes, cfg.seed);
            const std::vector<Scene>* run_scenes = &splits.test;
            if (split == "train") run_scenes = &splits.train;
            else if (split == "calib") run_scenes = &splits.calib;
            else if (split == "all") run_scenes = &scenes;

            std::optional<NetworkParams> params;
            std::optional<CalibrationTable> table;
            if (!model_path.empty()) params = load_params(model_path);
            if (!calib_path.empty()) table = read_calibration_file(calib_path);
            if (method_needs_model(*method) && !params)
                throw MissingModel("method " + method_name_arg + " requires --model");

            std::vector<EpisodeLog> logs;
            const auto report_out =
                evaluate(*run_scenes, {*method}, cfg, params ? &*params : nullptr,
                         table ? &*table : nullptr, &logs);
            std::ofstream f(out_path, std::ios::binary);
            if (!f) throw std::runtime_error("cannot open for writing: " + out_path);
            f << metrics_to_csv(report_out);
            if (!logs_path.empty()) write_logs_jsonl(logs_path, logs);
            return 0;
        }
        if (plan->parsed()) {
            HarnessConfig cfg = load_harness_config(config_path, seed);
            const auto method = method_from_name(method_name_arg);
            if (!method) throw std::runtime_error("unknown method: " + method_name_arg);
            const auto scenes = read_scenes_file(scenes_path);
            const Scene* scene = scenes.empty() ? nullptr : &scenes.front();
            if (!scene_id.empty()) {
                scene = nullptr;
                for (const auto& s : scenes)
                    if (s.id == scene_id) scene = &s;
                if (!scene) throw std::runtime_error("scene not found: " + scene_id);
            }
            if (!scene) throw std::runtime_error("no scenes in file");

            std::optional<NetworkParams> params;
            std::optional<CalibrationTable> table;
            if (!model_path.empty()) params = load_params(model_path);
            if (!calib_path.empty()) table = read_calibration_file(calib_path);

            std::vector<std::string> traces;
            const auto log = run_scene(*scene, *method, cfg, params ? &*params : nullptr,
                                       table ? &*table : nullptr, &traces);
            if (!trace_path.empty()) {
                std::ofstream f(trace_path, std::ios::binary);
                if (!f) throw std::runtime_error("cannot open for writing: " + trace_path);
                f << "[";
                for (std::size_t i = 0; i < traces.size(); ++i)
                    f << (i ? ",\n" : "\n") << traces[i];
                f << "\n]\n";
            }
            if (!png_path.empty()) {
                // First-step intention image of the scene for debugging.
                Rng rng(mix_seed(cfg.seed, hash_str(scene->id)));
                const Belief b = init_belief(observe(scene->initial), *scene, rng);
                const TrajPrediction preds =
                    predict_trajectories(b, kPredictionHorizon, cfg.world.dt);
                PlannedPath no_path;
                const auto img = render_intention_image(b, no_path, {}, preds,
                                                        scene->initial.obstacles);
                write_image_png(img, png_path);
            }
            std::fprintf(stderr, "scene %s: outcome=%s steps=%zu\n", scene->id.c_str(),
                         outcome_name(log.outcome), log.steps.size());
            return 0;
        }
        if (report->parsed()) {
            const auto logs = read_logs_jsonl(logs_path);
            std::map<std::string, std::vector<EpisodeLog>> by_method;
            for (const auto& log : logs) by_method[log.method].push_back(log);
            MetricsReport rep;
            for (const auto& [name, group] : by_method)
                rep.rows.push_back(compute_metrics(name, group, 0.0));
            std::ofstream f(out_path, std::ios::binary);
            if (!f) throw std::runtime_error("cannot open for writing: " + out_path);
            f << metrics_to_csv(rep);
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}

}  // namespace hyplan
