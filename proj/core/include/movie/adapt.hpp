#pragma once

#include <array>
#include <optional>
#include <span>

#include "movie/agent.hpp"
#include "movie/stn.hpp"

namespace movie {

/// Test-time adaptation configuration. Defaults follow the deployed
/// protocol: 256-slot buffer, batches of 32, 32 optimizer iterations per
/// environment step, and learning rates 1e-5 (STN) / 1e-7 (encoder).
struct AdaptConfig {
    enum class Method { none, dm, idm_stn, movie, finetune_dm };

    int buffer_size = 256;
    int batch = 32;
    int updates_per_step = 32;
    double lr_stn = 1e-5;
    double lr_enc = 1e-7;
    int episodes = 20;
    Method method = Method::movie;
    int stn_count = 2;
    /// Eq.-2 gradients flow through both encoder applications by default;
    /// this flag switches to a stop-gradient target for experimentation.
    bool stop_grad_target = false;

    void validate() const;
    static Method method_from_name(const std::string& name);
    static std::string method_name(Method m);
    nlohmann::json to_json() const;
};

/// The spatial adaptive encoder: identity-initialized STN blocks threaded
/// into a copy of the trained encoder. Immediately after build_sae the
/// forward pass equals the plain encoder bit-for-bit. The dynamics model is
/// deliberately not a member; the SAE cannot touch it.
struct SAE {
    std::vector<StnBlock> stns;  // stns[0] acts per-frame on raw frames
    Encoder encoder;
    int stn_count = 0;

    /// phi0_frame0, when given, receives stn0's prediction for the oldest
    /// frame of the stack (identity when no STN is present).
    Tensor forward(Graph* g, const Tensor& obs, Tensor* phi0_frame0 = nullptr) const;

    void visit_stn(const ParamVisitor& fn);
    void visit_encoder(const ParamVisitor& fn);

    Checkpoint to_checkpoint() const;
    static SAE from_checkpoint(const Checkpoint& ckpt);
};

/// Insert stn_count identity-initialized STN blocks (before conv1 and after
/// convs 1..k-1) into the checkpoint's encoder. stn_count 0 degenerates to
/// the plain encoder. stn_seed drives the localization nets' hidden-layer
/// initialization.
SAE build_sae(const Checkpoint& ckpt, int stn_count, uint64_t stn_seed);

/// Deep-copied dynamics parameters, flagged immutable: applying the model
/// never records parameter gradients, and the checksum certifies that runs
/// leave it untouched.
struct FrozenDynamics {
    Mlp net;
    uint64_t initial_checksum = 0;

    explicit FrozenDynamics(const Mlp& source);
    Tensor predict(Graph* g, const Tensor& z, const Tensor& action) const;
    uint64_t checksum() const;
    bool intact() const { return checksum() == initial_checksum; }
};

/// Fixed-capacity FIFO of transitions; eviction is strictly oldest-first.
class RingBuffer {
public:
    explicit RingBuffer(int capacity);
    void push(Transition t);
    int size() const { return count_; }
    int capacity() const { return cap_; }
    /// Indexed oldest (0) to newest (size()-1).
    const Transition& operator[](int i) const;

private:
    std::vector<Transition> slots_;
    int cap_ = 0;
    int head_ = 0;
    int count_ = 0;
};

/// Mean Eq.-2 loss over a batch: || d*(SAE(o), a) - SAE(o') ||^2 averaged
/// elementwise and over the batch. Gradients flow into the SAE through both
/// occurrences (unless stop_grad_target); the frozen model contributes no
/// parameter gradients by construction.
Tensor adapt_loss(Graph* g, const SAE& sae, const FrozenDynamics& d_star,
                  std::span<const Transition> batch, bool stop_grad_target = false);

struct StepLog {
    int step = 0;
    int episode = 0;
    double l_view = 0.0;
    int buffer_size = 0;
    std::array<double, 6> phi0{1, 0, 0, 0, 1, 0};
    int updates_done = 0;
};

struct RunResult {
    std::vector<EpisodeMetrics> episodes;
    std::vector<StepLog> log;
    uint64_t dyn_checksum_before = 0;
    uint64_t dyn_checksum_after = 0;
    AffineParams probe_phi;  // mean stn0 phi after the run
    double success_rate = 0.0;
    double mean_steps = 0.0;
    double mean_final_dyn_loss = 0.0;
};

/// Reward-free test-time adaptation: act with the current SAE + policy,
/// store transitions in the ring buffer, and run updates_per_step optimizer
/// iterations per environment step once the buffer holds one batch. The
/// trainable groups depend on the method (movie: STN + encoder; dm: encoder
/// only, no STNs; idm_stn: STN + encoder + inverse-dynamics head under the
/// IDM objective; finetune_dm: STN + encoder + dynamics; none: no updates).
RunResult run_adaptation(const Checkpoint& ckpt, const ViewSetting& setting,
                         const AdaptConfig& config, uint64_t seed);

/// Mean stn0 (frame 0) affine prediction over n_obs observations drawn from
/// seeded episodes of the setting under the given policy.
AffineParams affine_probe(const SAE& sae, const Mlp& policy, const ViewSetting& setting, int n_obs,
                          uint64_t seed);

}  // namespace movie
