#pragma once

#include <array>
#include <string>
#include <vector>

#include "movie/nn.hpp"
#include "movie/ops.hpp"

namespace movie {

/// Row-major 2x3 affine map phi = [p11 p12 p13; p21 p22 p23] taking target
/// coordinates (x_t, y_t, 1) to source coordinates, both in normalized
/// [-1, 1] image space. Values are sanity-clamped to |phi| <= 10 and must be
/// finite.
struct AffineParams {
    std::array<double, 6> phi{1.0, 0.0, 0.0, 0.0, 1.0, 0.0};

    static AffineParams identity() { return AffineParams{}; }
    static AffineParams from(std::array<double, 6> raw);
    static AffineParams from_tensor(const Tensor& t);
    Tensor to_tensor() const { return Tensor({6}, {phi[0], phi[1], phi[2], phi[3], phi[4], phi[5]}); }

    /// (this o other)(x) = this(other(x)).
    AffineParams compose(const AffineParams& other) const;
    AffineParams inverse() const;

    std::array<double, 2> apply(double x, double y) const {
        return {phi[0] * x + phi[1] * y + phi[2], phi[3] * x + phi[4] * y + phi[5]};
    }

    double max_abs_diff(const AffineParams& other) const;
};

/// Per-pixel source coordinates (x_s, y_s) in normalized [-1,1] space.
/// coords has shape [H, W, 2]. With pixel centers at -1 + (2i+1)/N, the
/// identity transform reproduces the regular target grid exactly.
struct SamplingGrid {
    Tensor coords;
    int h() const { return coords.dim(0); }
    int w() const { return coords.dim(1); }
};

/// Build the sampling grid for an affine map. Differentiable w.r.t. phi
/// (shape [6]).
SamplingGrid affine_grid(Graph* g, const Tensor& phi, int h, int w);

/// Bilinear sampling of input [C,H,W] at the grid's source coordinates.
/// Coordinates outside [-1,1] sample zeros. Sample points within 1e-9 of an
/// integer pixel location are snapped so that integer-aligned warps (the
/// identity in particular) reproduce pixels bit-for-bit. Differentiable
/// w.r.t. both input and grid.
Tensor grid_sample(Graph* g, const Tensor& input, const SamplingGrid& grid);

/// Spatial transformer block: a small conv/pool localization net predicting
/// 6 affine parameters, followed by grid generation and bilinear resampling
/// of the block input. The final localization layer starts at weight zero
/// with identity bias, so a freshly built block is an exact identity map.
///
/// With per_frame set, the channel axis is split into 3-channel frames and
/// each frame is localized and warped independently.
struct StnBlock {
    Conv2dLayer conv1, conv2;
    int pool1_k = 0, pool1_s = 0;
    int pool2_k = 0, pool2_s = 0;
    LinearLayer fc1, fc2;
    bool per_frame = false;
    int frame_channels = 3;

    /// Block architecture by insertion depth: 0 acts on raw 84x84 frames,
    /// 1..3 on the feature maps after encoder convs 1..3.
    static StnBlock make(int depth, Rng& rng);

    /// Predicted affine parameters for one (whole) feature map.
    Tensor localize(Graph* g, const Tensor& feature) const;

    /// Warp the block input under its predicted transform. phi_out, when
    /// given, receives the predicted parameters (one entry per frame when
    /// per_frame is set).
    Tensor forward(Graph* g, const Tensor& feature, std::vector<Tensor>* phi_out = nullptr) const;

    void visit(const ParamVisitor& fn, const std::string& prefix);
};

}  // namespace movie
