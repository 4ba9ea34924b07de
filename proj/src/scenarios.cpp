#include "hyplan/scenarios.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hyplan/rng.hpp"

namespace hyplan {

using nlohmann::json;

ParamGrid default_grid() {
    ParamGrid g;
    for (int i = 0; i <= 6; ++i) g.ped_speeds.push_back(0.5 + 0.25 * i);
    for (int i = 0; i <= 8; ++i) g.cross_dists.push_back(5.0 + 5.0 * i);
    return g;
}

const std::vector<ScenarioTemplate>& scenario_templates() {
    static const std::vector<ScenarioTemplate> templates = [] {
        std::vector<ScenarioTemplate> v;
        auto add = [&v](int id, Layout layout, bool from_left) {
            ScenarioTemplate t;
            t.id = id;
            t.layout = layout;
            t.ped_from_left = from_left;
            v.push_back(t);
        };
        add(1, Layout::StraightRoad, false);
        add(2, Layout::OccludedParkedCar, false);
        add(3, Layout::StraightRoad, true);
        add(4, Layout::OccludedParkedCar, true);
        add(5, Layout::IncomingCar, false);
        add(6, Layout::TIntersection, false);
        add(7, Layout::TIntersection, true);
        add(8, Layout::CrossIntersection, false);
        add(9, Layout::CrossIntersection, true);
        return v;
    }();
    return templates;
}

static std::string make_scene_id(int template_id, double ped_speed, double cross_dist,
                                 std::uint64_t seed) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "t%d_v%.2f_d%g_s%llu", template_id, ped_speed, cross_dist,
                  static_cast<unsigned long long>(seed));
    return buf;
}

Scene build_scene(const ScenarioTemplate& tpl, double ped_speed, double cross_dist,
                  std::uint64_t seed) {
    if (ped_speed < 0.5 || ped_speed > 2.0)
        throw OutOfRange("ped_speed outside [0.5, 2.0]");
    if (cross_dist < 5.0 || cross_dist > 45.0)
        throw OutOfRange("cross_dist outside [5, 45]");

    Scene scene;
    scene.id = make_scene_id(tpl.id, ped_speed, cross_dist, seed);
    scene.template_id = tpl.id;
    scene.ped_speed = ped_speed;
    scene.cross_dist = cross_dist;
    scene.seed = seed;

    WorldState w;
    w.ego.pos = tpl.ego_start;
    w.ego.goal = tpl.ego_goal;
    w.ego.heading = 0.0;
    w.ego.vel = Vec2{tpl.ego_start_speed, 0.0};
    w.t = 0;

    const double side = tpl.ped_from_left ? 1.0 : -1.0;
    ExoAgent ped;
    ped.kind = AgentKind::Pedestrian;
    ped.state.pos = Vec2{cross_dist, 4.0 * side};
    ped.state.goal = Vec2{cross_dist, -4.0 * side};
    {
        const Vec2 dir{0.0, -side};
        ped.state.vel = dir * ped_speed;
        ped.state.heading = normalize_angle(std::atan2(dir.y, dir.x));
    }
    w.exo.push_back(ped);
    std::vector<Vec2> ped_goals = {
        ped.state.goal,
        Vec2{ped.state.pos.x + 15.0, ped.state.pos.y},
        Vec2{ped.state.pos.x - 15.0, ped.state.pos.y},
    };
    scene.goal_candidates.push_back(ped_goals);

    switch (tpl.layout) {
        case Layout::StraightRoad:
            break;
        case Layout::OccludedParkedCar: {
            // Car parked on the pedestrian's roadside just before the crossing
            // point, hiding the pedestrian from the ego start pose.
            Rect car;
            car.xmin = cross_dist - 5.0;
            car.xmax = cross_dist - 0.5;
            if (tpl.ped_from_left) {
                car.ymin = 3.0;
                car.ymax = 4.8;
            } else {
                car.ymin = -4.8;
                car.ymax = -3.0;
            }
            w.obstacles.push_back(car);
            break;
        }
        case Layout::IncomingCar: {
            ExoAgent car;
            car.kind = AgentKind::Car;
            car.state.pos = Vec2{60.0, 1.5};
            car.state.goal = Vec2{-10.0, 1.5};
            car.state.vel = Vec2{-6.0, 0.0};
            car.state.heading = kPi;
            w.exo.push_back(car);
            scene.goal_candidates.push_back({car.state.goal});
            break;
        }
        case Layout::TIntersection: {
            w.obstacles.push_back(Rect{24.0, 4.5, 28.0, 8.5});
            w.obstacles.push_back(Rect{32.0, 4.5, 36.0, 8.5});
            break;
        }
        case Layout::CrossIntersection: {
            w.obstacles.push_back(Rect{24.0, 4.5, 28.0, 8.5});
            w.obstacles.push_back(Rect{32.0, 4.5, 36.0, 8.5});
            w.obstacles.push_back(Rect{24.0, -8.5, 28.0, -4.5});
            w.obstacles.push_back(Rect{32.0, -8.5, 36.0, -4.5});
            break;
        }
    }

    scene.initial = std::move(w);
    return scene;
}

std::vector<Scene> generate_benchmark(const ParamGrid& grid, std::uint64_t seed) {
    std::vector<Scene> scenes;
    for (const auto& tpl : scenario_templates())
        for (double v : grid.ped_speeds)
            for (double d : grid.cross_dists) scenes.push_back(build_scene(tpl, v, d, seed));
    return scenes;
}

BenchmarkSplit split_benchmark(const std::vector<Scene>& scenes, std::uint64_t seed) {
    BenchmarkSplit out;
    std::vector<int> template_ids;
    for (const auto& s : scenes)
        if (std::find(template_ids.begin(), template_ids.end(), s.template_id) ==
            template_ids.end())
            template_ids.push_back(s.template_id);
    std::sort(template_ids.begin(), template_ids.end());

    for (int tid : template_ids) {
        std::vector<const Scene*> stratum;
        for (const auto& s : scenes)
            if (s.template_id == tid) stratum.push_back(&s);
        std::sort(stratum.begin(), stratum.end(), [seed](const Scene* a, const Scene* b) {
            const auto ha = mix_seed(seed, hash_str(a->id));
            const auto hb = mix_seed(seed, hash_str(b->id));
            return ha != hb ? ha < hb : a->id < b->id;
        });
        const auto n = static_cast<long>(stratum.size());
        const long n_train = std::lround(0.25 * n);
        const long n_calib = std::lround(0.25 * n);
        for (long i = 0; i < n; ++i) {
            if (i < n_train) out.train.push_back(*stratum[i]);
            else if (i < n_train + n_calib) out.calib.push_back(*stratum[i]);
            else out.test.push_back(*stratum[i]);
        }
    }
    auto by_id = [](const Scene& a, const Scene& b) { return a.id < b.id; };
    std::sort(out.train.begin(), out.train.end(), by_id);
    std::sort(out.calib.begin(), out.calib.end(), by_id);
    std::sort(out.test.begin(), out.test.end(), by_id);
    return out;
}

static json vec_to_json(const Vec2& v) { return json::array({v.x, v.y}); }
static Vec2 vec_from_json(const json& j) { return Vec2{j.at(0).get<double>(), j.at(1).get<double>()}; }

std::string scenes_to_json(const std::vector<Scene>& scenes) {
    json arr = json::array();
    for (const auto& s : scenes) {
        json je = {
            {"pos", vec_to_json(s.initial.ego.pos)},
            {"goal", vec_to_json(s.initial.ego.goal)},
            {"heading", s.initial.ego.heading},
            {"speed", s.initial.ego.speed()},
        };
        json jexo = json::array();
        for (std::size_t i = 0; i < s.initial.exo.size(); ++i) {
            const auto& e = s.initial.exo[i];
            json cand = json::array();
            for (const auto& g : s.goal_candidates[i]) cand.push_back(vec_to_json(g));
            jexo.push_back({
                {"kind", e.kind == AgentKind::Pedestrian ? "pedestrian" : "car"},
                {"pos", vec_to_json(e.state.pos)},
                {"goal", vec_to_json(e.state.goal)},
                {"speed", e.state.speed()},
                {"heading", e.state.heading},
                {"goalCandidates", cand},
            });
        }
        json jobs = json::array();
        for (const auto& r : s.initial.obstacles)
            jobs.push_back(json::array({r.xmin, r.ymin, r.xmax, r.ymax}));
        arr.push_back({
            {"sceneId", s.id},
            {"templateId", s.template_id},
            {"pedSpeed", s.ped_speed},
            {"crossDist", s.cross_dist},
            {"seed", s.seed},
            {"ego", je},
            {"exo", jexo},
            {"obstacles", jobs},
        });
    }
    return arr.dump(2);
}

std::vector<Scene> scenes_from_json(const std::string& text) {
    const json arr = json::parse(text);
    std::vector<Scene> scenes;
    for (const auto& j : arr) {
        Scene s;
        s.id = j.at("sceneId").get<std::string>();
        s.template_id = j.at("templateId").get<int>();
        s.ped_speed = j.at("pedSpeed").get<double>();
        s.cross_dist = j.at("crossDist").get<double>();
        s.seed = j.value("seed", 0ull);
        WorldState w;
        const auto& je = j.at("ego");
        w.ego.pos = vec_from_json(je.at("pos"));
        w.ego.goal = vec_from_json(je.at("goal"));
        w.ego.heading = je.at("heading").get<double>();
        const double sp = je.at("speed").get<double>();
        w.ego.vel = Vec2{std::cos(w.ego.heading), std::sin(w.ego.heading)} * sp;
        for (const auto& jx : j.at("exo")) {
            ExoAgent e;
            e.kind = jx.at("kind").get<std::string>() == "car" ? AgentKind::Car
                                                               : AgentKind::Pedestrian;
            e.state.pos = vec_from_json(jx.at("pos"));
            e.state.goal = vec_from_json(jx.at("goal"));
            e.state.heading = jx.at("heading").get<double>();
            const double es = jx.at("speed").get<double>();
            e.state.vel = Vec2{std::cos(e.state.heading), std::sin(e.state.heading)} * es;
            w.exo.push_back(e);
            std::vector<Vec2> cand;
            for (const auto& jc : jx.at("goalCandidates")) cand.push_back(vec_from_json(jc));
            s.goal_candidates.push_back(cand);
        }
        for (const auto& jo : j.at("obstacles"))
            w.obstacles.push_back(Rect{jo.at(0).get<double>(), jo.at(1).get<double>(),
                                       jo.at(2).get<double>(), jo.at(3).get<double>()});
        s.initial = std::move(w);
        scenes.push_back(std::move(s));
    }
    return scenes;
}

void write_scenes_file(const std::string& path, const std::vector<Scene>& scenes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << scenes_to_json(scenes);
}

std::vector<Scene> read_scenes_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return scenes_from_json(ss.str());
}

}  // namespace hyplan
