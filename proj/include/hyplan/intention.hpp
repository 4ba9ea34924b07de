#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "hyplan/belief.hpp"
#include "hyplan/pathplan.hpp"
#include "hyplan/prediction.hpp"
#include "hyplan/world.hpp"

namespace hyplan {

constexpr int kImageSize = 84;
constexpr double kImageWindow = 40.0;  // m, scene-fixed window side
constexpr int kImageChannels = 3;

// 84x84x3 planar image (channel-major), values in [0, 1].
struct IntentionImage {
    std::array<float, kImageChannels * kImageSize * kImageSize> data{};

    float& at(int c, int y, int x) { return data[(c * kImageSize + y) * kImageSize + x]; }
    float at(int c, int y, int x) const { return data[(c * kImageSize + y) * kImageSize + x]; }
};

// One rendered exo hypothesis: position plus the weight used as intensity.
struct BeliefDot {
    Vec2 pos;
    double weight = 0.0;
};

// Inputs reduced to what the renderer needs, so planner tree nodes can be
// rendered without materializing a full Belief.
struct RenderInputs {
    bool has_ego = false;  // default-constructed inputs render all-zero
    Vec2 ego_pos;
    double ego_heading = 0.0;
    Vec2 ego_goal;
    const std::vector<Rect>* obstacles = nullptr;
    const TrajPrediction* preds = nullptr;
    const PlannedPath* ego_path = nullptr;
    const std::vector<PathPose>* past_poses = nullptr;  // oldest first, up to 8
    std::vector<std::vector<BeliefDot>> belief_dots;    // per agent, top-3 by weight
};

IntentionImage render_intention_image(const RenderInputs& in);

// Convenience overload for the episode loop (top-3 particles per agent).
IntentionImage render_intention_image(const Belief& b, const PlannedPath& ego_path,
                                      const std::vector<PathPose>& past_poses,
                                      const TrajPrediction& preds,
                                      const std::vector<Rect>& obstacles);

// 8-bit PNG dump (value = round(255 * v)).
void write_image_png(const IntentionImage& img, const std::string& path);

}  // namespace hyplan
