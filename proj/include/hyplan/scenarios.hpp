#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hyplan/world.hpp"

namespace hyplan {

enum class Layout : int {
    StraightRoad = 0,
    OccludedParkedCar = 1,
    IncomingCar = 2,
    TIntersection = 3,
    CrossIntersection = 4,
};

// One of the nine parameterized pedestrian-crossing templates.
struct ScenarioTemplate {
    int id = 1;  // 1..9
    Layout layout = Layout::StraightRoad;
    bool ped_from_left = false;  // crossing side variant
    Vec2 ego_start{0.0, -1.5};
    Vec2 ego_goal{50.0, -1.5};
    double ego_start_speed = 5.0;
    std::vector<Rect> obstacles;  // crossDist-independent part is empty here
};

struct Scene {
    std::string id;
    int template_id = 1;
    double ped_speed = 1.0;
    double cross_dist = 10.0;
    std::uint64_t seed = 0;
    WorldState initial;
    // Per exo agent: goal hypotheses used by belief initialization.
    std::vector<std::vector<Vec2>> goal_candidates;
};

struct ParamGrid {
    std::vector<double> ped_speeds;   // default {0.5, 0.75, ..., 2.0}
    std::vector<double> cross_dists;  // default {5, 10, ..., 45}
};

struct OutOfRange : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ParamGrid default_grid();
const std::vector<ScenarioTemplate>& scenario_templates();

Scene build_scene(const ScenarioTemplate& tpl, double ped_speed, double cross_dist,
                  std::uint64_t seed);

std::vector<Scene> generate_benchmark(const ParamGrid& grid, std::uint64_t seed);

struct BenchmarkSplit {
    std::vector<Scene> train;
    std::vector<Scene> calib;
    std::vector<Scene> test;
};

// Deterministic stratified 25:25:50 split (per template, remainder to test).
BenchmarkSplit split_benchmark(const std::vector<Scene>& scenes, std::uint64_t seed);

std::string scenes_to_json(const std::vector<Scene>& scenes);
std::vector<Scene> scenes_from_json(const std::string& text);
void write_scenes_file(const std::string& path, const std::vector<Scene>& scenes);
std::vector<Scene> read_scenes_file(const std::string& path);

}  // namespace hyplan
