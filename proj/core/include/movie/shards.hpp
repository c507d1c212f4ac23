#pragma once

#include <string>
#include <vector>

#include "movie/world.hpp"

namespace movie {

/// Raised on filesystem problems; the message carries the path.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Transition shard on disk: manifest.json (counts, shapes, seed, setting),
/// frames.f32 (raw little-endian 32-bit floats, episode frames back to
/// back), and actions.csv (one row per transition). Observations rebuild
/// from per-episode frame runs: an episode with L transitions stores L+1
/// frames and stacks warm-start by repeating the first frame.
struct ShardDataset {
    uint64_t seed = 0;
    std::string setting;
    std::vector<float> frames;            // frame_count x 3*84*84
    std::vector<int> episode_lengths;     // transitions per episode
    std::vector<int64_t> episode_frame_offset;
    std::vector<Vec2> actions;            // per transition, episode-major
    std::vector<uint8_t> successes;       // per transition

    int64_t transition_count() const { return (int64_t)actions.size(); }
    int64_t frame_count() const;
    int episodes() const { return (int)episode_lengths.size(); }

    /// (episode, step) for a flat transition index.
    std::pair<int, int> locate(int64_t index) const;

    Tensor obs(int64_t index) const;
    Tensor next_obs(int64_t index) const;
    Vec2 action(int64_t index) const { return actions[(size_t)index]; }
};

/// One episode in shard form: L+1 rendered frames and L actions.
struct EpisodeFrames {
    std::vector<Tensor> frames;  // each [3,84,84]
    std::vector<Vec2> actions;
    std::vector<uint8_t> successes;
};

/// Scripted-expert episode rendered under a view setting, using the shared
/// per-episode seed streams.
EpisodeFrames expert_episode(uint64_t ep_seed, const ViewSetting& setting);

/// Streams episodes to disk so data generation never holds a dataset in
/// memory.
class ShardWriter {
public:
    ShardWriter(std::string dir, uint64_t seed, std::string setting);
    ~ShardWriter();
    void add_episode(const EpisodeFrames& ep);
    /// Write the manifest; returns the transition count.
    int64_t finalize();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

ShardDataset load_shard(const std::string& dir);

}  // namespace movie
