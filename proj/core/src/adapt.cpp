#include "movie/adapt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace movie {

void AdaptConfig::validate() const {
    if (buffer_size <= 0) throw ContractError("AdaptConfig: buffer_size must be > 0");
    if (batch <= 0 || batch > buffer_size)
        throw ContractError("AdaptConfig: batch must be in [1, buffer_size]");
    if (updates_per_step < 0) throw ContractError("AdaptConfig: updates_per_step must be >= 0");
    if (lr_stn < 0 || lr_enc < 0) throw ContractError("AdaptConfig: learning rates must be >= 0");
    if (episodes <= 0) throw ContractError("AdaptConfig: episodes must be > 0");
    if (stn_count < 0 || stn_count > 4)
        throw ContractError("AdaptConfig: stn_count must be in [0, 4], got " +
                            std::to_string(stn_count));
}

AdaptConfig::Method AdaptConfig::method_from_name(const std::string& name) {
    if (name == "none") return Method::none;
    if (name == "dm") return Method::dm;
    if (name == "idm_stn") return Method::idm_stn;
    if (name == "movie") return Method::movie;
    if (name == "finetune_dm") return Method::finetune_dm;
    throw ContractError("unknown adaptation method '" + name + "'");
}

std::string AdaptConfig::method_name(Method m) {
    switch (m) {
        case Method::none: return "none";
        case Method::dm: return "dm";
        case Method::idm_stn: return "idm_stn";
        case Method::movie: return "movie";
        case Method::finetune_dm: return "finetune_dm";
    }
    return "none";
}

nlohmann::json AdaptConfig::to_json() const {
    return {{"buffer_size", buffer_size},
            {"batch", batch},
            {"updates_per_step", updates_per_step},
            {"lr_stn", lr_stn},
            {"lr_enc", lr_enc},
            {"episodes", episodes},
            {"method", method_name(method)},
            {"stn_count", stn_count},
            {"stop_grad_target", stop_grad_target}};
}

namespace {

template <typename Net>
Net deep_copy(const Net& src) {
    Net copy = src;
    copy.visit([](const std::string&, Tensor& t) {
        const bool rg = t.requires_grad();
        t = t.clone();
        t.set_requires_grad(rg);
    });
    return copy;
}

uint64_t mlp_checksum(const Mlp& net) {
    std::map<std::string, Tensor> m;
    const_cast<Mlp&>(net).visit([&m](const std::string& n, Tensor& t) { m[n] = t; }, "");
    return tensor_map_checksum(m);
}

}  // namespace

Tensor SAE::forward(Graph* g, const Tensor& obs, Tensor* phi0_frame0) const {
    Tensor x = obs;
    std::vector<Tensor> phis;
    if (stn_count >= 1) {
        x = stns[0].forward(g, x, &phis);
        if (phi0_frame0 && !phis.empty()) *phi0_frame0 = phis[0];
    } else if (phi0_frame0) {
        *phi0_frame0 = AffineParams::identity().to_tensor();
    }
    for (int stage = 0; stage < 4; ++stage) {
        x = relu(g, encoder.convs[(size_t)stage].forward(g, x));
        const int block = stage + 1;
        if (block < stn_count) x = stns[(size_t)block].forward(g, x);
    }
    x = x.reshape({(int)x.numel()});
    return encoder.head.forward(g, x);
}

void SAE::visit_stn(const ParamVisitor& fn) {
    for (size_t i = 0; i < stns.size(); ++i) stns[i].visit(fn, "stn" + std::to_string(i) + "/");
}

void SAE::visit_encoder(const ParamVisitor& fn) { encoder.visit(fn, "encoder/"); }

Checkpoint SAE::to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.config = {{"stn_count", stn_count}};
    auto* self = const_cast<SAE*>(this);
    self->visit_stn([&ckpt](const std::string& n, Tensor& t) { ckpt.tensors[n] = t.clone(); });
    self->visit_encoder([&ckpt](const std::string& n, Tensor& t) { ckpt.tensors[n] = t.clone(); });
    return ckpt;
}

SAE SAE::from_checkpoint(const Checkpoint& ckpt) {
    const int count = ckpt.config.at("stn_count").get<int>();
    SAE sae;
    sae.stn_count = count;
    Rng rng(0);  // shapes only; every value is overwritten below
    sae.encoder = Encoder(rng);
    for (int i = 0; i < count; ++i) sae.stns.push_back(StnBlock::make(i, rng));
    auto load = [&ckpt](const std::string& name, Tensor& t) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw ContractError("SAE checkpoint: missing tensor " + name);
        if (it->second.shape() != t.shape())
            throw ShapeError("SAE checkpoint: tensor " + name + " shape mismatch");
        std::copy(it->second.data(), it->second.data() + it->second.numel(), t.data());
    };
    sae.visit_stn(load);
    sae.visit_encoder(load);
    return sae;
}

SAE build_sae(const Checkpoint& ckpt, int stn_count, uint64_t stn_seed) {
    if (stn_count < 0 || stn_count > 4)
        throw ContractError("build_sae: stn_count must be in [0, 4], got " +
                            std::to_string(stn_count));
    AgentNets nets = AgentNets::from_checkpoint(ckpt);
    SAE sae;
    sae.stn_count = stn_count;
    sae.encoder = deep_copy(nets.encoder);
    Rng rng(derive_seed(stn_seed, "stn_init"));
    for (int i = 0; i < stn_count; ++i) sae.stns.push_back(StnBlock::make(i, rng));
    return sae;
}

FrozenDynamics::FrozenDynamics(const Mlp& source) : net(deep_copy(source)) {
    net.visit([](const std::string&, Tensor& t) { t.set_requires_grad(false); }, "");
    initial_checksum = mlp_checksum(net);
}

Tensor FrozenDynamics::predict(Graph* g, const Tensor& z, const Tensor& action) const {
    return net.forward(g, concat(g, z, action));
}

uint64_t FrozenDynamics::checksum() const { return mlp_checksum(net); }

RingBuffer::RingBuffer(int capacity) : cap_(capacity) {
    if (capacity <= 0) throw ContractError("RingBuffer: capacity must be > 0");
    slots_.resize((size_t)capacity);
}

void RingBuffer::push(Transition t) {
    slots_[(size_t)head_] = std::move(t);
    head_ = (head_ + 1) % cap_;
    count_ = std::min(count_ + 1, cap_);
}

const Transition& RingBuffer::operator[](int i) const {
    if (i < 0 || i >= count_) throw ContractError("RingBuffer: index out of range");
    const int oldest = (head_ - count_ + cap_) % cap_;
    return slots_[(size_t)((oldest + i) % cap_)];
}

namespace {

Tensor action_tensor(const Vec2& a) { return Tensor({2}, {a.x, a.y}); }

// One-transition Eq.-2 term.
Tensor eq2_term(Graph* g, const SAE& sae, const Mlp& dynamics, const Transition& tr,
                bool stop_grad_target) {
    Tensor z_t = sae.forward(g, tr.obs);
    Tensor z_tp1 = sae.forward(g, tr.next_obs);
    Tensor pred = dynamics.forward(g, concat(g, z_t, action_tensor(tr.action)));
    return mse_loss(g, pred, stop_grad_target ? detach(z_tp1) : z_tp1);
}

// IDM objective for the idm_stn baseline.
Tensor idm_term(Graph* g, const SAE& sae, const Mlp& idm, const Transition& tr) {
    Tensor z_t = sae.forward(g, tr.obs);
    Tensor z_tp1 = sae.forward(g, tr.next_obs);
    return mse_loss(g, idm.forward(g, concat(g, z_t, z_tp1)), action_tensor(tr.action));
}

}  // namespace

Tensor adapt_loss(Graph* g, const SAE& sae, const FrozenDynamics& d_star,
                  std::span<const Transition> batch, bool stop_grad_target) {
    if (batch.empty()) throw ContractError("adapt_loss: batch must hold at least one transition");
    const double w = 1.0 / (double)batch.size();
    Tensor total;
    for (const Transition& tr : batch) {
        Tensor term = scale(g, eq2_term(g, sae, d_star.net, tr, stop_grad_target), w);
        total = total.defined() ? add(g, total, term) : term;
    }
    return total;
}

AffineParams affine_probe(const SAE& sae, const Mlp& policy, const ViewSetting& setting, int n_obs,
                          uint64_t seed) {
    if (sae.stn_count == 0) return AffineParams::identity();
    std::array<double, 6> acc{0, 0, 0, 0, 0, 0};
    int seen = 0;
    int ep = 0;
    const uint64_t probe_seed = derive_seed(seed, "affine_probe");
    while (seen < n_obs) {
        const uint64_t es = episode_seed(probe_seed, ep++);
        WorldState state = reset(es);
        FrameStack stack(state, setting, es);
        bool done = false;
        while (!done && seen < n_obs) {
            Tensor phi0;
            Tensor z = sae.forward(nullptr, stack.observation(), &phi0);
            for (int k = 0; k < 6; ++k) acc[(size_t)k] += phi0.at(k);
            ++seen;
            Tensor a = policy.forward(nullptr, z);
            auto [next_state, success] = step(state, {a.at(0), a.at(1)});
            stack.push_state(next_state);
            state = next_state;
            done = success || state.step_index >= kHorizon;
        }
    }
    for (auto& v : acc) v /= (double)seen;
    return AffineParams::from(acc);
}

RunResult run_adaptation(const Checkpoint& ckpt, const ViewSetting& setting,
                         const AdaptConfig& config, uint64_t seed) {
    config.validate();
    using Method = AdaptConfig::Method;
    const Method method = config.method;

    AgentNets nets = AgentNets::from_checkpoint(ckpt);
    SAE sae = build_sae(ckpt, method == Method::dm ? 0 : config.stn_count, seed);
    Mlp policy = deep_copy(nets.policy);
    FrozenDynamics d_star(nets.dynamics);
    Mlp dynamics_tuned = deep_copy(nets.dynamics);  // used by finetune_dm only
    Mlp idm = deep_copy(nets.idm);                  // used by idm_stn only

    const bool uses_tuned_dynamics = method == Method::finetune_dm;
    const Mlp& loss_dynamics = uses_tuned_dynamics ? dynamics_tuned : d_star.net;

    // trainable groups per method; groups with a zero rate are simply absent
    std::vector<ParamGroup> groups;
    const bool trains = method != Method::none;
    const bool trains_stn = trains && method != Method::dm && sae.stn_count > 0;
    if (trains_stn && config.lr_stn > 0) {
        ParamGroup g("stn", config.lr_stn);
        sae.visit_stn([&g](const std::string& n, Tensor& t) { g.add(n, t); });
        groups.push_back(std::move(g));
    }
    if (trains && config.lr_enc > 0) {
        ParamGroup g("encoder", config.lr_enc);
        sae.visit_encoder([&g](const std::string& n, Tensor& t) { g.add(n, t); });
        groups.push_back(std::move(g));
    }
    if (method == Method::idm_stn && config.lr_enc > 0) {
        ParamGroup g("idm", config.lr_enc);
        idm.visit([&g](const std::string& n, Tensor& t) { g.add(n, t); }, "");
        groups.push_back(std::move(g));
    }
    if (method == Method::finetune_dm && config.lr_enc > 0) {
        ParamGroup g("dynamics", config.lr_enc);
        dynamics_tuned.visit([&g](const std::string& n, Tensor& t) { g.add(n, t); }, "");
        groups.push_back(std::move(g));
    }

    RunResult result;
    result.dyn_checksum_before =
        uses_tuned_dynamics ? mlp_checksum(dynamics_tuned) : d_star.checksum();

    RingBuffer buffer(config.buffer_size);
    Rng update_rng(derive_seed(seed, "adapt_updates"));
    std::vector<int> index_pool;
    int global_step = 0;

    for (int ep = 0; ep < config.episodes; ++ep) {
        const uint64_t es = episode_seed(seed, ep);
        WorldState state = reset(es);
        FrameStack stack(state, setting, es);
        EpisodeMetrics em;
        double dyn_sum = 0.0;
        int dyn_n = 0;
        bool done = false;
        while (!done) {
            Tensor obs = stack.observation();
            Tensor phi0;
            Tensor z = sae.forward(nullptr, obs, &phi0);
            Tensor a = policy.forward(nullptr, z);
            const Vec2 action{a.at(0), a.at(1)};
            auto [next_state, success] = step(state, action);
            stack.push_state(next_state);
            Tensor next_obs = stack.observation();
            buffer.push(Transition{obs, action, next_obs, success});

            // per-transition consistency probe, identical across methods
            double probe_loss;
            {
                Tensor z_next = sae.forward(nullptr, next_obs);
                Tensor pred = loss_dynamics.forward(nullptr, concat(nullptr, z, a));
                probe_loss = mse_loss(nullptr, pred, z_next).item();
                dyn_sum += probe_loss;
                ++dyn_n;
            }

            int updates = 0;
            double update_loss_sum = 0.0;
            if (trains && buffer.size() >= config.batch) {
                for (int u = 0; u < config.updates_per_step; ++u) {
                    // uniform batch without replacement, oldest-first indexing
                    index_pool.resize((size_t)buffer.size());
                    std::iota(index_pool.begin(), index_pool.end(), 0);
                    for (int b = 0; b < config.batch; ++b) {
                        const int pick =
                            b + (int)update_rng.below((uint64_t)(index_pool.size() - (size_t)b));
                        std::swap(index_pool[(size_t)b], index_pool[(size_t)pick]);
                    }
                    for (auto& grp : groups) grp.zero_grad();
                    const double w = 1.0 / (double)config.batch;
                    double batch_loss = 0.0;
                    for (int b = 0; b < config.batch; ++b) {
                        const Transition& tr = buffer[index_pool[(size_t)b]];
                        Graph graph;
                        Graph* gp = groups.empty() ? nullptr : &graph;
                        Tensor term;
                        if (method == Method::idm_stn)
                            term = idm_term(gp, sae, idm, tr);
                        else
                            term = eq2_term(gp, sae, loss_dynamics, tr, config.stop_grad_target);
                        batch_loss += term.item() * w;
                        if (gp) {
                            Tensor weighted = scale(gp, term, w);
                            graph.backward(weighted);
                        }
                    }
                    for (auto& grp : groups) adam_step(grp);
                    update_loss_sum += batch_loss;
                    ++updates;
                }
            }

            StepLog row;
            row.step = global_step++;
            row.episode = ep;
            row.buffer_size = buffer.size();
            row.updates_done = updates;
            // L_view: mean update loss once training is underway, otherwise
            // the current transition's value
            row.l_view = updates > 0 ? update_loss_sum / updates : dyn_sum / dyn_n * 0 + [&] {
                Graph* gq = nullptr;
                Tensor z0 = sae.forward(gq, obs);
                Tensor z1 = sae.forward(gq, next_obs);
                Tensor pred = loss_dynamics.forward(gq, concat(gq, z0, a));
                return mse_loss(gq, pred, z1).item();
            }();
            for (int k = 0; k < 6; ++k) row.phi0[(size_t)k] = phi0.at(k);
            result.log.push_back(row);

            state = next_state;
            em.success = success;
            em.steps = state.step_index;
            done = success || state.step_index >= kHorizon;
        }
        em.dyn_loss = dyn_n > 0 ? dyn_sum / (double)dyn_n : 0.0;
        result.episodes.push_back(em);
    }

    result.dyn_checksum_after =
        uses_tuned_dynamics ? mlp_checksum(dynamics_tuned) : d_star.checksum();
    result.probe_phi = affine_probe(sae, policy, setting, 64, seed);

    double s = 0.0, st = 0.0, dl = 0.0;
    for (const auto& em : result.episodes) {
        s += em.success ? 1.0 : 0.0;
        st += em.steps;
        dl += em.dyn_loss;
    }
    const double n = std::max<double>(1.0, (double)result.episodes.size());
    result.success_rate = s / n;
    result.mean_steps = st / n;
    result.mean_final_dyn_loss = dl / n;
    return result;
}

}  // namespace movie
