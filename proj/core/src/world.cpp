#include "movie/world.hpp"

#include <cmath>

namespace movie {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kCheckerCell = 0.25;  // 8x8 cells over [-1,1]
constexpr double kCheckerDark = 0.22, kCheckerLight = 0.34;
constexpr double kAgentColor[3] = {0.85, 0.10, 0.10};
constexpr double kGoalColor[3] = {0.10, 0.80, 0.15};
constexpr double kAaEdgePixels = 1.5;
constexpr double kPixelsPerUnit = kImageSize / 2.0;  // identity camera
}  // namespace

Vec2 CameraPose::world_to_cam(const Vec2& p) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double dx = p.x - translation.x, dy = p.y - translation.y;
    return {scale * (c * dx - s * dy), scale * (s * dx + c * dy)};
}

Vec2 CameraPose::cam_to_world(const Vec2& q) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double ux = q.x / scale, uy = q.y / scale;
    return {c * ux + s * uy + translation.x, -s * ux + c * uy + translation.y};
}

AffineParams CameraPose::as_affine() const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    AffineParams a;
    a.phi[0] = scale * c;
    a.phi[1] = -scale * s;
    a.phi[2] = -scale * (c * translation.x - s * translation.y);
    a.phi[3] = scale * s;
    a.phi[4] = scale * c;
    a.phi[5] = -scale * (s * translation.x + c * translation.y);
    return a;
}

AffineParams relative_affine(const CameraPose& from, const CameraPose& to) {
    return to.as_affine().compose(from.as_affine().inverse());
}

ViewSetting ViewSetting::novel_view(NovelLevel level) {
    ViewSetting v;
    v.kind = Kind::novel_view;
    v.level = level;
    return v;
}
ViewSetting ViewSetting::moving_view() {
    ViewSetting v;
    v.kind = Kind::moving_view;
    return v;
}
ViewSetting ViewSetting::shaking_view() {
    ViewSetting v;
    v.kind = Kind::shaking_view;
    return v;
}
ViewSetting ViewSetting::novel_fov() {
    ViewSetting v;
    v.kind = Kind::novel_fov;
    return v;
}

double ViewSetting::default_fov_scale() {
    return std::tan(45.0 / 2.0 * kPi / 180.0) / std::tan(53.0 / 2.0 * kPi / 180.0);
}

std::string ViewSetting::name() const {
    switch (kind) {
        case Kind::train: return "train";
        case Kind::novel_view:
            switch (level) {
                case NovelLevel::easy: return "novel_view_easy";
                case NovelLevel::medium: return "novel_view_medium";
                case NovelLevel::hard: return "novel_view_hard";
            }
            return "novel_view_medium";
        case Kind::moving_view: return "moving_view";
        case Kind::shaking_view: return "shaking_view";
        case Kind::novel_fov: return "novel_fov";
    }
    return "train";
}

ViewSetting ViewSetting::from_name(const std::string& name) {
    if (name == "train") return train();
    if (name == "novel_view_easy") return novel_view(NovelLevel::easy);
    if (name == "novel_view" || name == "novel_view_medium") return novel_view(NovelLevel::medium);
    if (name == "novel_view_hard") return novel_view(NovelLevel::hard);
    if (name == "moving_view") return moving_view();
    if (name == "shaking_view") return shaking_view();
    if (name == "novel_fov") return novel_fov();
    throw ContractError("unknown view setting '" + name + "'");
}

CameraPose camera_pose_at(const ViewSetting& setting, int t, Rng& rng) {
    if (t < 0) throw ContractError("camera_pose_at: t must be >= 0");
    CameraPose pose;
    switch (setting.kind) {
        case ViewSetting::Kind::train:
            break;
        case ViewSetting::Kind::novel_view: {
            double magnitude = 0.20, angle_deg = 10.0;
            if (setting.level == NovelLevel::easy) {
                magnitude = 0.10;
                angle_deg = 5.0;
            } else if (setting.level == NovelLevel::hard) {
                magnitude = 0.30;
                angle_deg = 15.0;
            }
            const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
            pose.translation = {magnitude * inv_sqrt2, magnitude * inv_sqrt2};
            pose.rotation = angle_deg * kPi / 180.0;
            break;
        }
        case ViewSetting::Kind::moving_view: {
            const double ph = 2.0 * kPi * t / setting.period;
            pose.translation = {setting.amplitude * std::sin(ph),
                                setting.amplitude * std::cos(ph) * 0.5};
            pose.rotation = 0.1 * std::sin(ph);
            break;
        }
        case ViewSetting::Kind::shaking_view: {
            auto draw = [&rng, &setting]() {
                const double n = setting.sigma * rng.normal();
                return std::clamp(n, -setting.clip, setting.clip);
            };
            pose.translation = {draw(), draw()};
            break;
        }
        case ViewSetting::Kind::novel_fov:
            pose.scale = setting.scale_factor;
            break;
    }
    return pose;
}

WorldState reset(uint64_t seed) {
    Rng rng(derive_seed(seed, "world_reset"));
    WorldState s;
    do {
        s.agent = {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        s.goal = {rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6)};
    } while (dist(s.agent, s.goal) < kMinSeparation);
    s.step_index = 0;
    return s;
}

std::pair<WorldState, bool> step(const WorldState& state, Vec2 action) {
    action.x = std::clamp(action.x, -kActionLimit, kActionLimit);
    action.y = std::clamp(action.y, -kActionLimit, kActionLimit);
    WorldState next = state;
    next.agent.x = std::clamp(state.agent.x + action.x, -1.0, 1.0);
    next.agent.y = std::clamp(state.agent.y + action.y, -1.0, 1.0);
    next.step_index = state.step_index + 1;
    const bool success = dist(next.agent, next.goal) < kSuccessRadius;
    return {next, success};
}

namespace {

// smoothstep coverage for a disc edge, with the transition band spanning
// kAaEdgePixels around the rim
inline double disc_alpha(double d_world, double radius, double pixels_per_unit) {
    const double signed_px = (d_world - radius) * pixels_per_unit;
    double u = 0.5 - signed_px / kAaEdgePixels;
    u = std::clamp(u, 0.0, 1.0);
    return u * u * (3.0 - 2.0 * u);
}

}  // namespace

Tensor render(const WorldState& state, const CameraPose& pose) {
    if (!(pose.scale > 0.0)) throw ContractError("render: camera scale must be > 0");
    Tensor img({3, kImageSize, kImageSize});
    double* data = img.data();
    const int64_t plane = (int64_t)kImageSize * kImageSize;
    const double px_per_unit = kPixelsPerUnit * pose.scale;

    for (int i = 0; i < kImageSize; ++i) {
        const double yq = -1.0 + (2.0 * i + 1.0) / kImageSize;
        for (int j = 0; j < kImageSize; ++j) {
            const double xq = -1.0 + (2.0 * j + 1.0) / kImageSize;
            const Vec2 p = pose.cam_to_world({xq, yq});

            const int cx = (int)std::floor((p.x + 1.0) / kCheckerCell);
            const int cy = (int)std::floor((p.y + 1.0) / kCheckerCell);
            const double tone = ((cx + cy) & 1) ? kCheckerLight : kCheckerDark;
            double r = tone, gch = tone, b = tone;

            const double a_goal = disc_alpha(dist(p, state.goal), kDiscRadius, px_per_unit);
            if (a_goal > 0.0) {
                r += a_goal * (kGoalColor[0] - r);
                gch += a_goal * (kGoalColor[1] - gch);
                b += a_goal * (kGoalColor[2] - b);
            }
            const double a_agent = disc_alpha(dist(p, state.agent), kDiscRadius, px_per_unit);
            if (a_agent > 0.0) {
                r += a_agent * (kAgentColor[0] - r);
                gch += a_agent * (kAgentColor[1] - gch);
                b += a_agent * (kAgentColor[2] - b);
            }
            const int64_t idx = (int64_t)i * kImageSize + j;
            // quantize to f32 so the on-disk shard format is lossless
            data[0 * plane + idx] = (double)(float)r;
            data[1 * plane + idx] = (double)(float)gch;
            data[2 * plane + idx] = (double)(float)b;
        }
    }
    return img;
}

Vec2 expert_action(const WorldState& state) {
    return {std::clamp(state.goal.x - state.agent.x, -kActionLimit, kActionLimit),
            std::clamp(state.goal.y - state.agent.y, -kActionLimit, kActionLimit)};
}

uint64_t episode_seed(uint64_t seed, int episode_index) {
    return derive_seed(seed, "episode", (uint64_t)episode_index);
}

FrameStack::FrameStack(const WorldState& s0, const ViewSetting& setting, uint64_t camera_seed)
    : setting_(setting), camera_rng_(derive_seed(camera_seed, "camera")) {
    last_pose_ = camera_pose_at(setting_, t_, camera_rng_);
    Tensor f0 = render(s0, last_pose_);
    for (int i = 0; i < kFrameStack; ++i) frames_.push_back(f0);
    t_ = 1;
}

Tensor FrameStack::observation() const {
    Tensor obs({3 * kFrameStack, kImageSize, kImageSize});
    const int64_t sz = 3 * (int64_t)kImageSize * kImageSize;
    for (int f = 0; f < kFrameStack; ++f)
        std::copy(frames_[(size_t)f].data(), frames_[(size_t)f].data() + sz, obs.data() + f * sz);
    return obs;
}

void FrameStack::push_state(const WorldState& s) {
    last_pose_ = camera_pose_at(setting_, t_, camera_rng_);
    ++t_;
    frames_.erase(frames_.begin());
    frames_.push_back(render(s, last_pose_));
}

std::vector<EpisodeResult> rollout(const Policy& policy, const ViewSetting& setting, int episodes,
                                   uint64_t seed) {
    std::vector<EpisodeResult> results;
    results.reserve((size_t)episodes);
    for (int ep = 0; ep < episodes; ++ep) {
        const uint64_t es = episode_seed(seed, ep);
        WorldState state = reset(es);
        FrameStack stack(state, setting, es);
        EpisodeResult result;
        bool done = false;
        while (!done) {
            Tensor obs = stack.observation();
            const Vec2 action = policy(obs);
            auto [next_state, success] = step(state, action);
            stack.push_state(next_state);
            result.transitions.push_back(Transition{obs, action, stack.observation(), success});
            state = next_state;
            result.steps = state.step_index;
            result.success = success;
            done = success || state.step_index >= kHorizon;
        }
        results.push_back(std::move(result));
    }
    return results;
}

}  // namespace movie
