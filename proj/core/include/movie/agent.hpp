#pragma once

#include "movie/checkpoint.hpp"
#include "movie/nn.hpp"
#include "movie/optim.hpp"
#include "movie/shards.hpp"
#include "movie/world.hpp"

namespace movie {

/// Training-time backbone: encoder h, latent dynamics d, policy head pi and
/// an inverse-dynamics head, trained jointly on training-view expert data.
struct AgentNets {
    Encoder encoder;
    Mlp dynamics;  // [50+2 -> 128 -> 128 -> 50]
    Mlp policy;    // [50 -> 128 -> 2], tanh-scaled to +-0.1
    Mlp idm;       // [50+50 -> 128 -> 2], tanh-scaled

    static constexpr int kLatentDim = Encoder::kLatentDim;
    static constexpr int kActionDim = 2;

    static AgentNets init(uint64_t seed);

    void visit(const ParamVisitor& fn);
    Checkpoint to_checkpoint(const nlohmann::json& config_echo) const;
    static AgentNets from_checkpoint(const Checkpoint& ckpt);
};

struct TrainConfig {
    double lr = 1e-3;
    int batch = 256;
    int steps = 20000;
    int shift_aug_pixels = 4;
    double lambda_dyn = 1.0;
    double lambda_bc = 1.0;
    double lambda_idm = 1.0;
    uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
};

struct PretrainStats {
    int steps_run = 0;
    double final_dyn_loss = 0.0;
    double final_bc_loss = 0.0;
    double final_idm_loss = 0.0;
    double holdout_dyn_init = 0.0;
    double holdout_dyn_final = 0.0;
};

/// Minimize the latent-dynamics, behavior-cloning and inverse-dynamics
/// losses over uniform minibatches with +-4 pixel replicate-shift
/// augmentation. The dynamics target latent is taken through a
/// stop-gradient. Refuses datasets with fewer than 10000 transitions.
PretrainStats pretrain(AgentNets& nets, const ShardDataset& data, const TrainConfig& config,
                       const std::function<void(int, const PretrainStats&)>& progress = {});

/// Deterministic policy action for one observation.
Vec2 act(const AgentNets& nets, const Tensor& obs);

struct EpisodeMetrics {
    bool success = false;
    int steps = 0;
    double dyn_loss = 0.0;  // mean Eq.-1 consistency loss over the episode
};

struct EvalMetrics {
    std::vector<EpisodeMetrics> episodes;
    double success_rate = 0.0;
    double mean_steps = 0.0;
    double mean_final_dyn_loss = 0.0;
};

/// Roll out act() with no adaptation, logging the latent-dynamics loss along
/// trajectories as a view-shift severity probe.
EvalMetrics evaluate(const AgentNets& nets, const ViewSetting& setting, int episodes,
                     uint64_t seed);

}  // namespace movie
