#include "movie/shards.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace movie {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int64_t kFrameValues = 3LL * kImageSize * kImageSize;

std::string format_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

}  // namespace

int64_t ShardDataset::frame_count() const {
    return (int64_t)frames.size() / kFrameValues;
}

std::pair<int, int> ShardDataset::locate(int64_t index) const {
    if (index < 0 || index >= transition_count())
        throw ContractError("shard: transition index " + std::to_string(index) + " out of range");
    int64_t remaining = index;
    for (size_t ep = 0; ep < episode_lengths.size(); ++ep) {
        if (remaining < episode_lengths[ep]) return {(int)ep, (int)remaining};
        remaining -= episode_lengths[ep];
    }
    throw ContractError("shard: corrupt episode index");
}

namespace {

// Stack frames (t-2, t-1, t) of an episode, clamping below the episode start
// so the first observation repeats its initial frame.
Tensor stack_frames(const std::vector<float>& frames, int64_t ep_frame_offset, int ep_frames,
                    int t) {
    Tensor obs({3 * kFrameStack, kImageSize, kImageSize});
    double* out = obs.data();
    for (int f = 0; f < kFrameStack; ++f) {
        int src = t - (kFrameStack - 1) + f;
        src = std::clamp(src, 0, ep_frames - 1);
        const float* fr = frames.data() + (ep_frame_offset + src) * kFrameValues;
        double* dst = out + (int64_t)f * kFrameValues;
        for (int64_t i = 0; i < kFrameValues; ++i) dst[i] = (double)fr[i];
    }
    return obs;
}

}  // namespace

Tensor ShardDataset::obs(int64_t index) const {
    auto [ep, t] = locate(index);
    return stack_frames(frames, episode_frame_offset[(size_t)ep], episode_lengths[(size_t)ep] + 1, t);
}

Tensor ShardDataset::next_obs(int64_t index) const {
    auto [ep, t] = locate(index);
    return stack_frames(frames, episode_frame_offset[(size_t)ep], episode_lengths[(size_t)ep] + 1,
                        t + 1);
}

EpisodeFrames expert_episode(uint64_t ep_seed, const ViewSetting& setting) {
    EpisodeFrames out;
    WorldState state = reset(ep_seed);
    Rng camera_rng(derive_seed(ep_seed, "camera"));
    int t = 0;
    out.frames.push_back(render(state, camera_pose_at(setting, t++, camera_rng)));
    bool done = false;
    while (!done) {
        const Vec2 a = expert_action(state);
        auto [next, success] = step(state, a);
        out.frames.push_back(render(next, camera_pose_at(setting, t++, camera_rng)));
        out.actions.push_back(a);
        out.successes.push_back(success ? 1 : 0);
        state = next;
        done = success || state.step_index >= kHorizon;
    }
    return out;
}

struct ShardWriter::Impl {
    fs::path dir;
    uint64_t seed;
    std::string setting;
    std::ofstream blob;
    std::ofstream actions;
    std::vector<int> episode_lengths;
    int64_t frame_count = 0;
    int64_t transition_count = 0;
    bool finalized = false;
};

ShardWriter::ShardWriter(std::string dir, uint64_t seed, std::string setting)
    : impl_(std::make_unique<Impl>()) {
    impl_->dir = dir;
    impl_->seed = seed;
    impl_->setting = std::move(setting);
    std::error_code ec;
    fs::create_directories(impl_->dir, ec);
    if (ec) throw IoError("shard: cannot create directory " + dir + ": " + ec.message());
    impl_->blob.open(impl_->dir / "frames.f32", std::ios::binary | std::ios::trunc);
    if (!impl_->blob) throw IoError("shard: cannot open " + (impl_->dir / "frames.f32").string());
    impl_->actions.open(impl_->dir / "actions.csv", std::ios::trunc);
    if (!impl_->actions) throw IoError("shard: cannot open " + (impl_->dir / "actions.csv").string());
    impl_->actions << "episode,step,action_x,action_y,success\n";
}

ShardWriter::~ShardWriter() = default;

void ShardWriter::add_episode(const EpisodeFrames& ep) {
    if (impl_->finalized) throw ContractError("shard: add_episode after finalize");
    if (ep.frames.size() != ep.actions.size() + 1)
        throw ContractError("shard: episode needs exactly one more frame than actions");
    std::vector<float> f32((size_t)kFrameValues);
    for (const Tensor& frame : ep.frames) {
        const double* src = frame.data();
        for (int64_t i = 0; i < kFrameValues; ++i) f32[(size_t)i] = (float)src[i];
        impl_->blob.write(reinterpret_cast<const char*>(f32.data()),
                          (std::streamsize)(sizeof(float) * (size_t)kFrameValues));
    }
    const int episode = (int)impl_->episode_lengths.size();
    for (size_t t = 0; t < ep.actions.size(); ++t) {
        impl_->actions << episode << ',' << t << ',' << format_double(ep.actions[t].x) << ','
                       << format_double(ep.actions[t].y) << ',' << (int)ep.successes[t] << '\n';
    }
    impl_->frame_count += (int64_t)ep.frames.size();
    impl_->transition_count += (int64_t)ep.actions.size();
    impl_->episode_lengths.push_back((int)ep.actions.size());
}

int64_t ShardWriter::finalize() {
    if (impl_->finalized) return impl_->transition_count;
    impl_->finalized = true;
    impl_->blob.close();
    impl_->actions.close();
    json manifest;
    manifest["format"] = "movie-kit-shard";
    manifest["version"] = 1;
    manifest["seed"] = impl_->seed;
    manifest["setting"] = impl_->setting;
    manifest["episodes"] = impl_->episode_lengths.size();
    manifest["transitions"] = impl_->transition_count;
    manifest["frames"] = impl_->frame_count;
    manifest["frame_shape"] = {3, kImageSize, kImageSize};
    manifest["dtype"] = "f32le";
    manifest["episode_lengths"] = impl_->episode_lengths;
    std::ofstream mf(impl_->dir / "manifest.json", std::ios::trunc);
    if (!mf) throw IoError("shard: cannot open " + (impl_->dir / "manifest.json").string());
    mf << manifest.dump(2) << "\n";
    return impl_->transition_count;
}

ShardDataset load_shard(const std::string& dir) {
    const fs::path root(dir);
    std::ifstream mf(root / "manifest.json");
    if (!mf) throw IoError("shard: cannot open " + (root / "manifest.json").string());
    json manifest = json::parse(mf);
    if (manifest.at("format") != "movie-kit-shard")
        throw IoError("shard: " + dir + " is not a movie-kit shard");
    if (manifest.at("dtype") != "f32le")
        throw IoError("shard: unsupported dtype " + manifest.at("dtype").get<std::string>());

    ShardDataset ds;
    ds.seed = manifest.at("seed").get<uint64_t>();
    ds.setting = manifest.at("setting").get<std::string>();
    ds.episode_lengths = manifest.at("episode_lengths").get<std::vector<int>>();

    const int64_t frame_count = manifest.at("frames").get<int64_t>();
    ds.frames.resize((size_t)(frame_count * kFrameValues));
    std::ifstream blob(root / "frames.f32", std::ios::binary);
    if (!blob) throw IoError("shard: cannot open " + (root / "frames.f32").string());
    blob.read(reinterpret_cast<char*>(ds.frames.data()),
              (std::streamsize)(ds.frames.size() * sizeof(float)));
    if ((size_t)blob.gcount() != ds.frames.size() * sizeof(float))
        throw IoError("shard: frames.f32 size does not match manifest frame count");
    blob.peek();
    if (!blob.eof()) throw IoError("shard: frames.f32 larger than manifest frame count");

    int64_t off = 0;
    for (int len : ds.episode_lengths) {
        ds.episode_frame_offset.push_back(off);
        off += len + 1;
    }
    if (off != frame_count)
        throw IoError("shard: episode lengths disagree with frame count in " + dir);

    // actions.csv
    std::ifstream af(root / "actions.csv");
    if (!af) throw IoError("shard: cannot open " + (root / "actions.csv").string());
    std::string line;
    std::getline(af, line);
    if (line != "episode,step,action_x,action_y,success")
        throw IoError("shard: unexpected actions.csv header: " + line);
    while (std::getline(af, line)) {
        if (line.empty()) continue;
        size_t pos = 0;
        auto next_field = [&]() {
            size_t comma = line.find(',', pos);
            std::string f = line.substr(pos, comma == std::string::npos ? comma : comma - pos);
            pos = comma == std::string::npos ? line.size() : comma + 1;
            return f;
        };
        next_field();  // episode
        next_field();  // step
        auto parse_double = [](const std::string& s) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size())
                throw IoError("shard: bad numeric field '" + s + "' in actions.csv");
            return v;
        };
        Vec2 a;
        a.x = parse_double(next_field());
        a.y = parse_double(next_field());
        ds.actions.push_back(a);
        ds.successes.push_back(next_field() == "1" ? 1 : 0);
    }
    const int64_t expected = manifest.at("transitions").get<int64_t>();
    if ((int64_t)ds.actions.size() != expected)
        throw IoError("shard: actions.csv rows (" + std::to_string(ds.actions.size()) +
                      ") disagree with manifest transitions (" + std::to_string(expected) + ")");
    return ds;
}

}  // namespace movie
