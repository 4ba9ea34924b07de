#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "hyplan/scenarios.hpp"
#include "hyplan/world.hpp"

using namespace hyplan;

TEST_CASE("nine templates exist with one crossing pedestrian each") {
    const auto& templates = scenario_templates();
    REQUIRE(templates.size() == 9);
    for (const auto& tpl : templates) {
        const Scene s = build_scene(tpl, 1.0, 20.0, 3);
        int peds = 0;
        for (const auto& e : s.initial.exo)
            if (e.kind == AgentKind::Pedestrian) ++peds;
        CHECK(peds >= 1);
    }
}

TEST_CASE("build_scene determinism") {
    const auto& tpl = scenario_templates()[0];
    const Scene a = build_scene(tpl, 1.0, 10.0, 7);
    const Scene b = build_scene(tpl, 1.0, 10.0, 7);
    CHECK(a.id == b.id);
    CHECK(a.initial.ego.pos == b.initial.ego.pos);
    REQUIRE(a.initial.exo.size() == b.initial.exo.size());
    for (std::size_t i = 0; i < a.initial.exo.size(); ++i)
        CHECK(a.initial.exo[i].state.pos == b.initial.exo[i].state.pos);
}

TEST_CASE("build_scene range checks") {
    const auto& tpl = scenario_templates()[0];
    CHECK_THROWS_AS(build_scene(tpl, 3.0, 10.0, 7), OutOfRange);
    CHECK_THROWS_AS(build_scene(tpl, 1.0, 50.0, 7), OutOfRange);
    CHECK_THROWS_AS(build_scene(tpl, 0.4, 10.0, 7), OutOfRange);
}

TEST_CASE("occluded template hides the pedestrian at t=0") {
    for (const double cd : {5.0, 10.0, 25.0, 45.0}) {
        for (const int tid : {2, 4}) {
            const Scene s = build_scene(scenario_templates()[tid - 1], 1.0, cd, 7);
            const Observation o = observe(s.initial);
            REQUIRE(!o.exo_pos.empty());
            CHECK_MESSAGE(!o.exo_pos[0].has_value(),
                          "template " << tid << " crossDist " << cd);
        }
    }
}

TEST_CASE("pedestrian path crosses the ego lane segment") {
    for (const auto& tpl : scenario_templates()) {
        for (const double cd : {5.0, 25.0, 45.0}) {
            const Scene s = build_scene(tpl, 1.0, cd, 7);
            const auto& ped = s.initial.exo[0].state;
            const double lane_y = s.initial.ego.pos.y;
            // Straight-line path from pos to goal crosses y = lane_y within
            // the ego segment [start.x, goal.x].
            const double t = (lane_y - ped.pos.y) / (ped.goal.y - ped.pos.y);
            CHECK(t > 0.0);
            CHECK(t < 1.0);
            const double cross_x = ped.pos.x + t * (ped.goal.x - ped.pos.x);
            CHECK(cross_x >= s.initial.ego.pos.x);
            CHECK(cross_x <= s.initial.ego.goal.x);
        }
    }
}

TEST_CASE("generate_benchmark default grid size and unique ids") {
    const auto scenes = generate_benchmark(default_grid(), 7);
    CHECK(scenes.size() == 567);
    std::set<std::string> ids;
    for (const auto& s : scenes) ids.insert(s.id);
    CHECK(ids.size() == scenes.size());

    ParamGrid small;
    small.ped_speeds = {1.0};
    small.cross_dists = {20.0};
    CHECK(generate_benchmark(small, 7).size() == 9);
}

TEST_CASE("split_benchmark stratified 25:25:50") {
    const auto scenes = generate_benchmark(default_grid(), 7);
    const auto split = split_benchmark(scenes, 7);
    // 63 scenes per template: round(0.25*63)=16, remainder 31 to test.
    CHECK(split.train.size() == 144);
    CHECK(split.calib.size() == 144);
    CHECK(split.test.size() == 279);

    std::set<std::string> all;
    for (const auto& s : split.train) all.insert(s.id);
    for (const auto& s : split.calib) all.insert(s.id);
    for (const auto& s : split.test) all.insert(s.id);
    CHECK(all.size() == scenes.size());  // disjoint and exhaustive

    for (int tid = 1; tid <= 9; ++tid) {
        auto has = [tid](const std::vector<Scene>& v) {
            for (const auto& s : v)
                if (s.template_id == tid) return true;
            return false;
        };
        CHECK(has(split.train));
        CHECK(has(split.calib));
        CHECK(has(split.test));
    }

    const auto split2 = split_benchmark(scenes, 7);
    REQUIRE(split2.train.size() == split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i)
        CHECK(split.train[i].id == split2.train[i].id);
}

TEST_CASE("scene json round trip") {
    const auto scenes = generate_benchmark(default_grid(), 7);
    std::vector<Scene> subset(scenes.begin(), scenes.begin() + 30);
    const std::string text = scenes_to_json(subset);
    const auto back = scenes_from_json(text);
    REQUIRE(back.size() == subset.size());
    for (std::size_t i = 0; i < subset.size(); ++i) {
        CHECK(back[i].id == subset[i].id);
        CHECK(back[i].template_id == subset[i].template_id);
        CHECK(back[i].initial.ego.pos == subset[i].initial.ego.pos);
        CHECK(back[i].initial.exo.size() == subset[i].initial.exo.size());
        CHECK(back[i].initial.obstacles.size() == subset[i].initial.obstacles.size());
        CHECK(back[i].goal_candidates == subset[i].goal_candidates);
    }
}
