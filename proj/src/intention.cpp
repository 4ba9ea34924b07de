#include "hyplan/intention.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <zlib.h>

namespace hyplan {

namespace {

constexpr double kScale = kImageSize / kImageWindow;  // px per meter
constexpr double kHalf = kImageWindow / 2.0;

struct Frame {
    Vec2 ego;

    // Relative coordinates first so equal shifts of scene and ego cancel.
    int px(const Vec2& p) const {
        return static_cast<int>(std::floor((p.x - ego.x + kHalf) * kScale));
    }
    int py(const Vec2& p) const {
        return static_cast<int>(std::floor((ego.y + kHalf - p.y) * kScale));
    }
    Vec2 pixel_center(int x, int y) const {
        return {ego.x - kHalf + (x + 0.5) / kScale, ego.y + kHalf - (y + 0.5) / kScale};
    }
    bool in_bounds(int x, int y) const {
        return x >= 0 && x < kImageSize && y >= 0 && y < kImageSize;
    }
};

void paint(IntentionImage& img, int c, int x, int y, double v) {
    if (x < 0 || x >= kImageSize || y < 0 || y >= kImageSize) return;
    float& cell = img.at(c, y, x);
    cell = std::max(cell, static_cast<float>(std::clamp(v, 0.0, 1.0)));
}

void paint_disc(IntentionImage& img, const Frame& f, int c, const Vec2& p, double radius,
                double v) {
    const int x0 = f.px(Vec2{p.x - radius, p.y});
    const int x1 = f.px(Vec2{p.x + radius, p.y});
    const int y0 = f.py(Vec2{p.x, p.y + radius});
    const int y1 = f.py(Vec2{p.x, p.y - radius});
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (!f.in_bounds(x, y)) continue;
            if (dist(f.pixel_center(x, y), p) <= radius) paint(img, c, x, y, v);
        }
}

void paint_segment(IntentionImage& img, const Frame& f, int c, const Vec2& a, const Vec2& b,
                   double v) {
    const double len = dist(a, b);
    const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.15)));
    for (int i = 0; i <= steps; ++i) {
        const double t = static_cast<double>(i) / steps;
        const Vec2 p = a + (b - a) * t;
        paint(img, c, f.px(p), f.py(p), v);
    }
}

void paint_rect(IntentionImage& img, const Frame& f, int c, const Rect& r, double v) {
    const int x0 = f.px(Vec2{r.xmin, 0});
    const int x1 = f.px(Vec2{r.xmax, 0});
    const int y0 = f.py(Vec2{0, r.ymax});
    const int y1 = f.py(Vec2{0, r.ymin});
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            if (!f.in_bounds(x, y)) continue;
            if (r.contains(f.pixel_center(x, y))) paint(img, c, x, y, v);
        }
}

}  // namespace

IntentionImage render_intention_image(const RenderInputs& in) {
    IntentionImage img;
    Frame f{in.ego_pos};

    // R: static obstacles, predicted exo paths (decaying), belief hypotheses.
    if (in.obstacles)
        for (const auto& r : *in.obstacles) paint_rect(img, f, 0, r, 1.0);
    if (in.preds)
        for (const auto& traj : in.preds->traj)
            for (std::size_t k = 0; k < traj.size(); ++k)
                paint_disc(img, f, 0, traj[k], 0.4, std::pow(0.9, static_cast<double>(k)));
    for (const auto& agent : in.belief_dots)
        for (const auto& dot : agent) paint_disc(img, f, 0, dot.pos, 0.4, dot.weight);

    // G: planned path and goal disc.
    if (in.ego_path && in.ego_path->poses.size() >= 2)
        for (std::size_t i = 0; i + 1 < in.ego_path->poses.size(); ++i)
            paint_segment(img, f, 1, in.ego_path->poses[i].pos, in.ego_path->poses[i + 1].pos,
                          1.0);
    if (in.has_ego) paint_disc(img, f, 1, in.ego_goal, 2.0, 0.7);

    // B: past poses (ramping up to recent) and current ego footprint.
    if (in.past_poses && !in.past_poses->empty()) {
        const int n = static_cast<int>(in.past_poses->size());
        for (int i = 0; i < n; ++i) {
            const double v = n == 1 ? 1.0 : 0.3 + 0.7 * static_cast<double>(i) / (n - 1);
            paint_disc(img, f, 2, (*in.past_poses)[i].pos, 0.3, v);
        }
    }
    if (in.has_ego) {
        // Oriented car footprint, 3.8 x 1.8 m centered on the ego position.
        const double hl = 1.9, hw = 0.9;
        const double ch = std::cos(in.ego_heading), sh = std::sin(in.ego_heading);
        const double reach = std::hypot(hl, hw);
        const int x0 = f.px(Vec2{in.ego_pos.x - reach, 0});
        const int x1 = f.px(Vec2{in.ego_pos.x + reach, 0});
        const int y0 = f.py(Vec2{0, in.ego_pos.y + reach});
        const int y1 = f.py(Vec2{0, in.ego_pos.y - reach});
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (!f.in_bounds(x, y)) continue;
                const Vec2 d = f.pixel_center(x, y) - in.ego_pos;
                const double bx = d.x * ch + d.y * sh;
                const double by = -d.x * sh + d.y * ch;
                if (std::abs(bx) <= hl && std::abs(by) <= hw) paint(img, 2, x, y, 1.0);
            }
    }
    return img;
}

IntentionImage render_intention_image(const Belief& b, const PlannedPath& ego_path,
                                      const std::vector<PathPose>& past_poses,
                                      const TrajPrediction& preds,
                                      const std::vector<Rect>& obstacles) {
    RenderInputs in;
    in.has_ego = true;
    in.ego_pos = b.ego.pos;
    in.ego_heading = b.ego.heading;
    in.ego_goal = b.ego.goal;
    in.obstacles = &obstacles;
    in.preds = &preds;
    in.ego_path = &ego_path;
    in.past_poses = &past_poses;

    const std::size_t n_agents = b.particles.empty() ? 0 : b.particles.front().exo.size();
    in.belief_dots.resize(n_agents);
    for (std::size_t a = 0; a < n_agents; ++a) {
        // Top-3 particles by weight, ties toward lower index.
        std::vector<int> idx(b.particles.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
        std::partial_sort(idx.begin(), idx.begin() + std::min<std::size_t>(3, idx.size()),
                          idx.end(), [&](int i, int j) {
                              if (b.particles[i].weight != b.particles[j].weight)
                                  return b.particles[i].weight > b.particles[j].weight;
                              return i < j;
                          });
        for (std::size_t r = 0; r < std::min<std::size_t>(3, idx.size()); ++r)
            in.belief_dots[a].push_back(
                BeliefDot{b.particles[idx[r]].exo[a].pos, b.particles[idx[r]].weight});
    }
    return render_intention_image(in);
}

namespace {

void append_u32(std::string& s, std::uint32_t v) {
    s.push_back(static_cast<char>((v >> 24) & 0xff));
    s.push_back(static_cast<char>((v >> 16) & 0xff));
    s.push_back(static_cast<char>((v >> 8) & 0xff));
    s.push_back(static_cast<char>(v & 0xff));
}

void append_chunk(std::string& out, const char type[4], const std::string& payload) {
    append_u32(out, static_cast<std::uint32_t>(payload.size()));
    std::string body(type, 4);
    body += payload;
    out += body;
    const auto crc = crc32(0, reinterpret_cast<const Bytef*>(body.data()),
                           static_cast<uInt>(body.size()));
    append_u32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_image_png(const IntentionImage& img, const std::string& path) {
    std::string raw;
    raw.reserve(kImageSize * (1 + kImageSize * 3));
    for (int y = 0; y < kImageSize; ++y) {
        raw.push_back('\0');  // filter: none
        for (int x = 0; x < kImageSize; ++x)
            for (int c = 0; c < 3; ++c)
                raw.push_back(static_cast<char>(
                    std::lround(255.0 * std::clamp<double>(img.at(c, y, x), 0.0, 1.0))));
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::string compressed(comp_len, '\0');
    if (compress(reinterpret_cast<Bytef*>(compressed.data()), &comp_len,
                 reinterpret_cast<const Bytef*>(raw.data()),
                 static_cast<uLong>(raw.size())) != Z_OK)
        throw std::runtime_error("png compression failed");
    compressed.resize(comp_len);

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    append_u32(ihdr, kImageSize);
    append_u32(ihdr, kImageSize);
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", "");

    std::ofstream fs(path, std::ios::binary);
    if (!fs) throw std::runtime_error("cannot open for writing: " + path);
    fs.write(out.data(), static_cast<std::streamsize>(out.size()));
}

}  // namespace hyplan
