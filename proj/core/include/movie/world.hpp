#pragma once

#include <functional>
#include <string>
#include <vector>

#include "movie/rng.hpp"
#include "movie/stn.hpp"
#include "movie/tensor.hpp"

namespace movie {

struct Vec2 {
    double x = 0.0, y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

/// Reach task state. The agent moves in [-1,1]^2 toward a goal in
/// [-0.6,0.6]^2; both positions stay clamped to their bounds.
struct WorldState {
    Vec2 agent;
    Vec2 goal;
    int step_index = 0;
};

/// Analytic affine camera: a world point p renders at
/// q = scale * R(rotation) * (p - translation) in normalized [-1,1] image
/// coordinates. The training pose is exactly (0, 0, 0, 1).
struct CameraPose {
    Vec2 translation;
    double rotation = 0.0;
    double scale = 1.0;

    static CameraPose train() { return CameraPose{}; }
    /// Normalized image coordinates of a world point.
    Vec2 world_to_cam(const Vec2& p) const;
    /// World point seen at the given normalized image coordinates.
    Vec2 cam_to_world(const Vec2& q) const;
    /// The 2x3 affine map q = A * (p, 1) as AffineParams.
    AffineParams as_affine() const;
};

/// Exact affine relating image coordinates of two poses viewing the same
/// world point: returns A with coords_in_to = A * (coords_in_from, 1).
AffineParams relative_affine(const CameraPose& from, const CameraPose& to);

enum class NovelLevel { easy, medium, hard };

/// One of the four test-time camera regimes (plus the training view).
struct ViewSetting {
    enum class Kind { train, novel_view, moving_view, shaking_view, novel_fov };

    Kind kind = Kind::train;
    NovelLevel level = NovelLevel::medium;   // novel_view
    double amplitude = 0.2;                  // moving_view, world units
    double period = 50.0;                    // moving_view, steps per cycle
    double sigma = 0.04;                     // shaking_view, world units
    double clip = 0.07;                      // shaking_view, world units
    double scale_factor = default_fov_scale();  // novel_fov

    static ViewSetting train() { return {}; }
    static ViewSetting novel_view(NovelLevel level);
    static ViewSetting moving_view();
    static ViewSetting shaking_view();
    static ViewSetting novel_fov();

    /// Pinhole tangent ratio for the 45 -> 53 degree field-of-view change.
    static double default_fov_scale();

    /// Canonical names used by the CLI and result files, e.g.
    /// "novel_view_medium".
    std::string name() const;
    static ViewSetting from_name(const std::string& name);
};

/// Camera pose for time step t under a setting. Only the shaking view draws
/// from the rng; the caller owns the stream so runs stay reproducible.
CameraPose camera_pose_at(const ViewSetting& setting, int t, Rng& rng);

/// World constants.
inline constexpr int kImageSize = 84;
inline constexpr int kFrameStack = 3;
inline constexpr double kActionLimit = 0.1;
inline constexpr double kSuccessRadius = 0.1;
inline constexpr int kHorizon = 50;
inline constexpr double kDiscRadius = 0.08;
inline constexpr double kMinSeparation = 0.4;

/// Seeded initial state with ||agent - goal|| >= 0.4.
WorldState reset(uint64_t seed);

/// Apply a (clamped) action; success when the agent lands within 0.1 of the
/// goal. Episodes run at most kHorizon steps (enforced by the rollout loop).
std::pair<WorldState, bool> step(const WorldState& state, Vec2 action);

/// Deterministic rasterization of the scene under a camera pose: red agent
/// disc, green goal disc, and a world-anchored two-tone checker background,
/// anti-aliased with a 1.5-pixel smoothstep edge. Returns [3,84,84] values
/// in [0,1], each exactly representable in 32-bit float.
Tensor render(const WorldState& state, const CameraPose& pose);

/// Greedy scripted expert: clamp(goal - agent, +-0.1) per axis.
Vec2 expert_action(const WorldState& state);

/// (o_t, a_t, o_{t+1}) plus the success flag of the resulting state.
struct Transition {
    Tensor obs;       // [9,84,84]
    Vec2 action;
    Tensor next_obs;  // [9,84,84]
    bool success = false;
};

struct EpisodeResult {
    std::vector<Transition> transitions;
    bool success = false;
    int steps = 0;
};

using Policy = std::function<Vec2(const Tensor& obs)>;

/// Maintains the 3-frame observation stack for one episode, rendering each
/// frame under the camera pose of its own time step. The stack warm-starts
/// by repeating the first frame.
class FrameStack {
public:
    FrameStack(const WorldState& s0, const ViewSetting& setting, uint64_t camera_seed);

    /// Current stacked observation [9,84,84] (oldest frame first).
    Tensor observation() const;
    /// Render the frame for the next state and push it onto the stack.
    void push_state(const WorldState& s);
    /// Pose used for the most recently rendered frame.
    const CameraPose& last_pose() const { return last_pose_; }

private:
    ViewSetting setting_;
    Rng camera_rng_;
    int t_ = 0;
    std::vector<Tensor> frames_;  // most recent last, size <= 3
    CameraPose last_pose_;
};

/// Run seeded episodes of a deterministic policy under a view setting.
std::vector<EpisodeResult> rollout(const Policy& policy, const ViewSetting& setting, int episodes,
                                   uint64_t seed);

/// Per-episode seed, shared by every consumer (evaluation, adaptation, data
/// generation) so that runs over the same (seed, setting) see identical
/// worlds.
uint64_t episode_seed(uint64_t seed, int episode_index);

}  // namespace movie
