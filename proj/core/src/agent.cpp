#include "movie/agent.hpp"

#include <cmath>

namespace movie {

AgentNets AgentNets::init(uint64_t seed) {
    AgentNets nets;
    Rng enc_rng(derive_seed(seed, "init_encoder"));
    nets.encoder = Encoder(enc_rng);
    Rng dyn_rng(derive_seed(seed, "init_dynamics"));
    nets.dynamics = Mlp({kLatentDim + kActionDim, 128, 128, kLatentDim}, false, 1.0, dyn_rng);
    Rng pol_rng(derive_seed(seed, "init_policy"));
    nets.policy = Mlp({kLatentDim, 128, kActionDim}, true, kActionLimit, pol_rng);
    Rng idm_rng(derive_seed(seed, "init_idm"));
    nets.idm = Mlp({2 * kLatentDim, 128, kActionDim}, true, kActionLimit, idm_rng);
    return nets;
}

void AgentNets::visit(const ParamVisitor& fn) {
    encoder.visit(fn, "encoder/");
    dynamics.visit(fn, "dynamics/");
    policy.visit(fn, "policy/");
    idm.visit(fn, "idm/");
}

Checkpoint AgentNets::to_checkpoint(const nlohmann::json& config_echo) const {
    Checkpoint ckpt;
    ckpt.config = config_echo;
    const_cast<AgentNets*>(this)->visit(
        [&ckpt](const std::string& name, Tensor& t) { ckpt.tensors[name] = t.clone(); });
    return ckpt;
}

AgentNets AgentNets::from_checkpoint(const Checkpoint& ckpt) {
    AgentNets nets = AgentNets::init(0);
    size_t loaded = 0;
    nets.visit([&](const std::string& name, Tensor& t) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end())
            throw ContractError("checkpoint: missing tensor " + name);
        if (it->second.shape() != t.shape())
            throw ShapeError("checkpoint: tensor " + name + " has shape " +
                             shape_str(it->second.shape()) + ", expected " + shape_str(t.shape()));
        std::copy(it->second.data(), it->second.data() + it->second.numel(), t.data());
        ++loaded;
    });
    if (loaded != ckpt.tensors.size())
        throw ContractError("checkpoint: has " + std::to_string(ckpt.tensors.size()) +
                            " tensors, expected " + std::to_string(loaded));
    return nets;
}

void TrainConfig::validate() const {
    if (lr <= 0 || batch <= 0 || steps < 0 || shift_aug_pixels < 0 || lambda_dyn < 0 ||
        lambda_bc < 0 || lambda_idm < 0)
        throw ContractError("TrainConfig: all fields must be positive (steps may be zero)");
}

nlohmann::json TrainConfig::to_json() const {
    return {{"lr", lr},
            {"batch", batch},
            {"steps", steps},
            {"shift_aug_pixels", shift_aug_pixels},
            {"lambda_dyn", lambda_dyn},
            {"lambda_bc", lambda_bc},
            {"lambda_idm", lambda_idm},
            {"seed", seed}};
}

namespace {

// Replicate-pad-and-crop shift: sample source pixels at clamped offsets.
// The same (dx, dy) applies to every channel of the stack.
Tensor shift_obs(const Tensor& obs, int dx, int dy) {
    if (dx == 0 && dy == 0) return obs;
    Tensor out(obs.shape());
    const int c = obs.dim(0), h = obs.dim(1), w = obs.dim(2);
    const double* src = obs.data();
    double* dst = out.data();
    for (int ci = 0; ci < c; ++ci) {
        const double* plane = src + (int64_t)ci * h * w;
        double* oplane = dst + (int64_t)ci * h * w;
        for (int i = 0; i < h; ++i) {
            const int si = std::clamp(i + dy, 0, h - 1);
            for (int j = 0; j < w; ++j) {
                const int sj = std::clamp(j + dx, 0, w - 1);
                oplane[(int64_t)i * w + j] = plane[(int64_t)si * w + sj];
            }
        }
    }
    return out;
}

Tensor action_tensor(const Vec2& a) { return Tensor({2}, {a.x, a.y}); }

struct SampleLosses {
    double dyn = 0.0, bc = 0.0, idm = 0.0;
};

// Forward and (optionally) backprop one transition; gradients accumulate
// scaled by `weight` so a fixed-order sweep reproduces the batch mean.
SampleLosses train_sample(AgentNets& nets, const Tensor& obs, const Tensor& next_obs,
                          const Vec2& action, const TrainConfig& cfg, double weight,
                          bool do_backward) {
    Graph graph;
    Graph* g = do_backward ? &graph : nullptr;
    Tensor a = action_tensor(action);

    Tensor z_t = nets.encoder.forward(g, obs);
    Tensor z_tp1 = nets.encoder.forward(g, next_obs);
    Tensor dyn_pred = nets.dynamics.forward(g, concat(g, z_t, a));
    Tensor l_dyn = mse_loss(g, dyn_pred, detach(z_tp1));
    Tensor l_bc = mse_loss(g, nets.policy.forward(g, z_t), a);
    Tensor l_idm = mse_loss(g, nets.idm.forward(g, concat(g, z_t, z_tp1)), a);

    if (do_backward) {
        Tensor total = add(g, add(g, scale(g, l_dyn, cfg.lambda_dyn), scale(g, l_bc, cfg.lambda_bc)),
                           scale(g, l_idm, cfg.lambda_idm));
        Tensor weighted = scale(g, total, weight);
        graph.backward(weighted);
    }
    return {l_dyn.item(), l_bc.item(), l_idm.item()};
}

double holdout_dyn_loss(AgentNets& nets, const ShardDataset& data, int64_t holdout_begin) {
    double sum = 0.0;
    int64_t n = 0;
    for (int64_t i = holdout_begin; i < data.transition_count(); ++i, ++n) {
        Graph* g = nullptr;
        Tensor z_t = nets.encoder.forward(g, data.obs(i));
        Tensor z_tp1 = nets.encoder.forward(g, data.next_obs(i));
        Tensor pred = nets.dynamics.forward(g, concat(g, z_t, action_tensor(data.action(i))));
        sum += mse_loss(g, pred, z_tp1).item();
    }
    return n > 0 ? sum / (double)n : 0.0;
}

}  // namespace

PretrainStats pretrain(AgentNets& nets, const ShardDataset& data, const TrainConfig& config,
                       const std::function<void(int, const PretrainStats&)>& progress) {
    config.validate();
    if (data.transition_count() < 10000)
        throw ContractError("pretrain: dataset has " + std::to_string(data.transition_count()) +
                            " transitions, need at least 10000");

    // hold out a tail slice for the dynamics-loss probe
    const int64_t holdout = std::max<int64_t>(256, data.transition_count() / 20);
    const int64_t train_count = data.transition_count() - holdout;

    ParamGroup theta("theta", config.lr);
    nets.visit([&theta](const std::string& name, Tensor& t) { theta.add(name, t); });

    PretrainStats stats;
    stats.holdout_dyn_init = holdout_dyn_loss(nets, data, train_count);

    Rng rng(derive_seed(config.seed, "pretrain"));
    const double weight = 1.0 / (double)config.batch;
    const int shift = config.shift_aug_pixels;

    for (int step_i = 0; step_i < config.steps; ++step_i) {
        theta.zero_grad();
        SampleLosses batch_losses;
        for (int b = 0; b < config.batch; ++b) {
            const int64_t idx = (int64_t)rng.below((uint64_t)train_count);
            const int dx = (int)rng.below((uint64_t)(2 * shift + 1)) - shift;
            const int dy = (int)rng.below((uint64_t)(2 * shift + 1)) - shift;
            Tensor obs = shift_obs(data.obs(idx), dx, dy);
            Tensor next_obs = shift_obs(data.next_obs(idx), dx, dy);
            SampleLosses l =
                train_sample(nets, obs, next_obs, data.action(idx), config, weight, true);
            batch_losses.dyn += l.dyn * weight;
            batch_losses.bc += l.bc * weight;
            batch_losses.idm += l.idm * weight;
        }
        adam_step(theta);
        stats.steps_run = step_i + 1;
        stats.final_dyn_loss = batch_losses.dyn;
        stats.final_bc_loss = batch_losses.bc;
        stats.final_idm_loss = batch_losses.idm;
        if (progress) progress(step_i + 1, stats);
    }

    stats.holdout_dyn_final = holdout_dyn_loss(nets, data, train_count);
    return stats;
}

Vec2 act(const AgentNets& nets, const Tensor& obs) {
    Tensor z = nets.encoder.forward(nullptr, obs);
    Tensor a = nets.policy.forward(nullptr, z);
    return {a.at(0), a.at(1)};
}

EvalMetrics evaluate(const AgentNets& nets, const ViewSetting& setting, int episodes,
                     uint64_t seed) {
    EvalMetrics metrics;
    for (int ep = 0; ep < episodes; ++ep) {
        const uint64_t es = episode_seed(seed, ep);
        WorldState state = reset(es);
        FrameStack stack(state, setting, es);
        EpisodeMetrics em;
        double dyn_sum = 0.0;
        int dyn_n = 0;
        Tensor z = nets.encoder.forward(nullptr, stack.observation());
        bool done = false;
        while (!done) {
            Tensor a = nets.policy.forward(nullptr, z);
            const Vec2 action{a.at(0), a.at(1)};
            auto [next_state, success] = step(state, action);
            stack.push_state(next_state);
            Tensor z_next = nets.encoder.forward(nullptr, stack.observation());
            Tensor pred = nets.dynamics.forward(nullptr, concat(nullptr, z, a));
            dyn_sum += mse_loss(nullptr, pred, z_next).item();
            ++dyn_n;
            z = z_next;
            state = next_state;
            em.success = success;
            em.steps = state.step_index;
            done = success || state.step_index >= kHorizon;
        }
        em.dyn_loss = dyn_n > 0 ? dyn_sum / (double)dyn_n : 0.0;
        metrics.episodes.push_back(em);
    }
    double s = 0.0, st = 0.0, dl = 0.0;
    for (const auto& em : metrics.episodes) {
        s += em.success ? 1.0 : 0.0;
        st += em.steps;
        dl += em.dyn_loss;
    }
    const double n = std::max<double>(1.0, (double)metrics.episodes.size());
    metrics.success_rate = s / n;
    metrics.mean_steps = st / n;
    metrics.mean_final_dyn_loss = dl / n;
    return metrics;
}

}  // namespace movie
