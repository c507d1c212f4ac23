#include "movie/stn.hpp"

#include <algorithm>
#include <cmath>

namespace movie {

AffineParams AffineParams::from(std::array<double, 6> raw) {
    AffineParams a;
    for (int i = 0; i < 6; ++i) {
        if (!std::isfinite(raw[(size_t)i]))
            throw ContractError("AffineParams: non-finite component " + std::to_string(i));
        a.phi[(size_t)i] = std::clamp(raw[(size_t)i], -10.0, 10.0);
    }
    return a;
}

AffineParams AffineParams::from_tensor(const Tensor& t) {
    if (t.numel() != 6)
        throw ShapeError("AffineParams: expected 6 values, got " + shape_str(t.shape()));
    return from({t.at(0), t.at(1), t.at(2), t.at(3), t.at(4), t.at(5)});
}

AffineParams AffineParams::compose(const AffineParams& o) const {
    const auto& a = phi;
    const auto& b = o.phi;
    AffineParams c;
    c.phi[0] = a[0] * b[0] + a[1] * b[3];
    c.phi[1] = a[0] * b[1] + a[1] * b[4];
    c.phi[2] = a[0] * b[2] + a[1] * b[5] + a[2];
    c.phi[3] = a[3] * b[0] + a[4] * b[3];
    c.phi[4] = a[3] * b[1] + a[4] * b[4];
    c.phi[5] = a[3] * b[2] + a[4] * b[5] + a[5];
    return c;
}

AffineParams AffineParams::inverse() const {
    const double det = phi[0] * phi[4] - phi[1] * phi[3];
    if (std::abs(det) < 1e-12)
        throw ContractError("AffineParams: singular matrix, det=" + std::to_string(det));
    AffineParams inv;
    inv.phi[0] = phi[4] / det;
    inv.phi[1] = -phi[1] / det;
    inv.phi[3] = -phi[3] / det;
    inv.phi[4] = phi[0] / det;
    inv.phi[2] = -(inv.phi[0] * phi[2] + inv.phi[1] * phi[5]);
    inv.phi[5] = -(inv.phi[3] * phi[2] + inv.phi[4] * phi[5]);
    return inv;
}

double AffineParams::max_abs_diff(const AffineParams& other) const {
    double m = 0.0;
    for (int i = 0; i < 6; ++i) m = std::max(m, std::abs(phi[(size_t)i] - other.phi[(size_t)i]));
    return m;
}

namespace {

struct AffineGridNode : Node {
    Tensor phi, coords;
    int h = 0, w = 0;

    void backward() override {
        const double* g = coords.grad_or_null();
        if (!g || !phi.requires_grad()) return;
        double* gp = phi.grad();
        double acc[6] = {0, 0, 0, 0, 0, 0};
        for (int i = 0; i < h; ++i) {
            const double yt = -1.0 + (2.0 * i + 1.0) / h;
            for (int j = 0; j < w; ++j) {
                const double xt = -1.0 + (2.0 * j + 1.0) / w;
                const double gx = g[((int64_t)i * w + j) * 2 + 0];
                const double gy = g[((int64_t)i * w + j) * 2 + 1];
                acc[0] += gx * xt;
                acc[1] += gx * yt;
                acc[2] += gx;
                acc[3] += gy * xt;
                acc[4] += gy * yt;
                acc[5] += gy;
            }
        }
        for (int k = 0; k < 6; ++k) gp[k] += acc[k];
    }
};

struct GridSampleNode : Node {
    Tensor input, coords, out;

    void backward() override;
};

// Unnormalize [-1,1] to pixel units with centers at -1+(2i+1)/N, snapping
// near-integer sample points so integer-aligned warps stay exact.
inline double to_pixel(double coord, int n) {
    double p = (coord + 1.0) * (0.5 * n) - 0.5;
    const double r = std::nearbyint(p);
    if (std::abs(p - r) <= 1e-9) p = r;
    return p;
}

void GridSampleNode::backward() {
    const double* g = out.grad_or_null();
    if (!g) return;
    const bool need_in = input.requires_grad();
    const bool need_grid = coords.requires_grad();
    if (!need_in && !need_grid) return;

    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int oh = coords.dim(0), ow = coords.dim(1);
    const double* in = input.data();
    const double* gr = coords.data();
    double* gin = need_in ? input.grad() : nullptr;
    double* ggrid = need_grid ? coords.grad() : nullptr;

    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            const int64_t gidx = ((int64_t)i * ow + j) * 2;
            const double ix = to_pixel(gr[gidx + 0], w);
            const double iy = to_pixel(gr[gidx + 1], h);
            const int x0 = (int)std::floor(ix), y0 = (int)std::floor(iy);
            const double wx = ix - x0, wy = iy - y0;
            const int x1 = x0 + 1, y1 = y0 + 1;
            const bool in_x0 = x0 >= 0 && x0 < w, in_x1 = x1 >= 0 && x1 < w;
            const bool in_y0 = y0 >= 0 && y0 < h, in_y1 = y1 >= 0 && y1 < h;

            double dx = 0.0, dy = 0.0;
            for (int ci = 0; ci < c; ++ci) {
                const double go = g[((int64_t)ci * oh + i) * ow + j];
                if (go == 0.0 && !need_grid) continue;
                const double* plane = in + (int64_t)ci * h * w;
                const double v00 = (in_y0 && in_x0) ? plane[(int64_t)y0 * w + x0] : 0.0;
                const double v01 = (in_y0 && in_x1) ? plane[(int64_t)y0 * w + x1] : 0.0;
                const double v10 = (in_y1 && in_x0) ? plane[(int64_t)y1 * w + x0] : 0.0;
                const double v11 = (in_y1 && in_x1) ? plane[(int64_t)y1 * w + x1] : 0.0;
                if (gin) {
                    double* gplane = gin + (int64_t)ci * h * w;
                    if (in_y0 && in_x0) gplane[(int64_t)y0 * w + x0] += go * (1.0 - wy) * (1.0 - wx);
                    if (in_y0 && in_x1) gplane[(int64_t)y0 * w + x1] += go * (1.0 - wy) * wx;
                    if (in_y1 && in_x0) gplane[(int64_t)y1 * w + x0] += go * wy * (1.0 - wx);
                    if (in_y1 && in_x1) gplane[(int64_t)y1 * w + x1] += go * wy * wx;
                }
                if (ggrid) {
                    dx += go * ((1.0 - wy) * (v01 - v00) + wy * (v11 - v10));
                    dy += go * ((1.0 - wx) * (v10 - v00) + wx * (v11 - v01));
                }
            }
            if (ggrid) {
                // chain through the unnormalization scale
                ggrid[gidx + 0] += dx * (0.5 * w);
                ggrid[gidx + 1] += dy * (0.5 * h);
            }
        }
    }
}

}  // namespace

SamplingGrid affine_grid(Graph* g, const Tensor& phi, int h, int w) {
    if (phi.numel() != 6)
        throw ShapeError("affine_grid: phi must have 6 components, got " + shape_str(phi.shape()));
    if (h < 2 || w < 2) throw ContractError("affine_grid: H and W must be >= 2");
    for (int i = 0; i < 6; ++i)
        if (!std::isfinite(phi.at(i)))
            throw ContractError("affine_grid: non-finite phi component " + std::to_string(i));

    Tensor coords({h, w, 2});
    const double p0 = phi.at(0), p1 = phi.at(1), p2 = phi.at(2);
    const double p3 = phi.at(3), p4 = phi.at(4), p5 = phi.at(5);
    double* out = coords.data();
    for (int i = 0; i < h; ++i) {
        const double yt = -1.0 + (2.0 * i + 1.0) / h;
        for (int j = 0; j < w; ++j) {
            const double xt = -1.0 + (2.0 * j + 1.0) / w;
            // fma ordering keeps the identity map exact: 1*x + (0*y + 0) == x
            out[((int64_t)i * w + j) * 2 + 0] = std::fma(p0, xt, std::fma(p1, yt, p2));
            out[((int64_t)i * w + j) * 2 + 1] = std::fma(p3, xt, std::fma(p4, yt, p5));
        }
    }

    if (tape_active(g, {&phi})) {
        coords.set_requires_grad(true);
        auto node = std::make_unique<AffineGridNode>();
        node->phi = phi;
        node->coords = coords;
        node->h = h;
        node->w = w;
        node->kind = "affine_grid";
        node->input_ids.push_back(g->value_id(phi));
        node->output_id = g->value_id(coords);
        g->record(std::move(node));
    }
    return SamplingGrid{coords};
}

Tensor grid_sample(Graph* g, const Tensor& input, const SamplingGrid& grid) {
    if (input.ndim() != 3)
        throw ShapeError("grid_sample: input must be [C,H,W], got " + shape_str(input.shape()));
    if (grid.coords.ndim() != 3 || grid.coords.dim(2) != 2)
        throw ShapeError("grid_sample: grid must be [H,W,2], got " + shape_str(grid.coords.shape()));

    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int oh = grid.h(), ow = grid.w();
    Tensor out({c, oh, ow});
    const double* in = input.data();
    const double* gr = grid.coords.data();
    double* o = out.data();

    for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
            const double ix = to_pixel(gr[((int64_t)i * ow + j) * 2 + 0], w);
            const double iy = to_pixel(gr[((int64_t)i * ow + j) * 2 + 1], h);
            const int x0 = (int)std::floor(ix), y0 = (int)std::floor(iy);
            const double wx = ix - x0, wy = iy - y0;
            const int x1 = x0 + 1, y1 = y0 + 1;
            const bool in_x0 = x0 >= 0 && x0 < w, in_x1 = x1 >= 0 && x1 < w;
            const bool in_y0 = y0 >= 0 && y0 < h, in_y1 = y1 >= 0 && y1 < h;
            for (int ci = 0; ci < c; ++ci) {
                const double* plane = in + (int64_t)ci * h * w;
                const double v00 = (in_y0 && in_x0) ? plane[(int64_t)y0 * w + x0] : 0.0;
                const double v01 = (in_y0 && in_x1) ? plane[(int64_t)y0 * w + x1] : 0.0;
                const double v10 = (in_y1 && in_x0) ? plane[(int64_t)y1 * w + x0] : 0.0;
                const double v11 = (in_y1 && in_x1) ? plane[(int64_t)y1 * w + x1] : 0.0;
                o[((int64_t)ci * oh + i) * ow + j] =
                    (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
            }
        }
    }

    if (tape_active(g, {&input, &grid.coords})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<GridSampleNode>();
        node->input = input;
        node->coords = grid.coords;
        node->out = out;
        node->kind = "grid_sample";
        node->input_ids.push_back(g->value_id(input));
        node->input_ids.push_back(g->value_id(grid.coords));
        node->output_id = g->value_id(out);
        g->record(std::move(node));
    }
    return out;
}

StnBlock StnBlock::make(int depth, Rng& rng) {
    StnBlock b;
    switch (depth) {
        case 0:
            // raw frames; each 3-channel frame is localized independently
            b.per_frame = true;
            b.conv1 = Conv2dLayer(3, 8, 7, 1, rng);
            b.pool1_k = 4; b.pool1_s = 4;
            b.conv2 = Conv2dLayer(8, 10, 5, 1, rng);
            b.pool2_k = 4; b.pool2_s = 4;
            b.fc1 = LinearLayer(90, 32, rng);
            break;
        case 1:
            b.conv1 = Conv2dLayer(32, 8, 7, 1, rng);
            b.pool1_k = 3; b.pool1_s = 3;
            b.conv2 = Conv2dLayer(8, 10, 5, 1, rng);
            b.pool2_k = 2; b.pool2_s = 2;
            b.fc1 = LinearLayer(90, 32, rng);
            break;
        case 2:
            b.conv1 = Conv2dLayer(32, 8, 5, 1, rng);
            b.pool1_k = 2; b.pool1_s = 2;
            b.conv2 = Conv2dLayer(8, 10, 3, 1, rng);
            b.pool2_k = 2; b.pool2_s = 2;
            b.fc1 = LinearLayer(40, 32, rng);
            break;
        case 3:
            b.conv1 = Conv2dLayer(32, 8, 3, 1, rng);
            b.pool1_k = 2; b.pool1_s = 2;
            b.conv2 = Conv2dLayer(8, 10, 3, 1, rng);
            b.pool2_k = 1; b.pool2_s = 1;
            b.fc1 = LinearLayer(10, 32, rng);
            break;
        default:
            throw ContractError("StnBlock: depth must be in [0,3], got " + std::to_string(depth));
    }
    b.fc2 = LinearLayer(32, 6, rng);
    // identity initialization: zero final weight, identity-affine bias
    std::fill(b.fc2.weight.data(), b.fc2.weight.data() + b.fc2.weight.numel(), 0.0);
    const double ident[6] = {1, 0, 0, 0, 1, 0};
    std::copy(ident, ident + 6, b.fc2.bias.data());
    return b;
}

Tensor StnBlock::localize(Graph* g, const Tensor& feature) const {
    Tensor x = conv1.forward(g, feature);
    x = maxpool2d(g, x, pool1_k, pool1_s);
    x = relu(g, x);
    x = conv2.forward(g, x);
    x = maxpool2d(g, x, pool2_k, pool2_s);
    x = relu(g, x);
    x = x.reshape({(int)x.numel()});
    x = fc1.forward(g, x);
    x = relu(g, x);
    x = fc2.forward(g, x);
    return clamp(g, x, -10.0, 10.0);
}

Tensor StnBlock::forward(Graph* g, const Tensor& feature, std::vector<Tensor>* phi_out) const {
    const int c = feature.dim(0), h = feature.dim(1), w = feature.dim(2);
    if (!per_frame) {
        Tensor phi = localize(g, feature);
        if (phi_out) phi_out->push_back(phi);
        return grid_sample(g, feature, affine_grid(g, phi, h, w));
    }
    if (c % frame_channels != 0)
        throw ShapeError("StnBlock: channel axis " + std::to_string(c) +
                         " not divisible into frames of " + std::to_string(frame_channels));
    std::vector<Tensor> frames;
    frames.reserve((size_t)(c / frame_channels));
    for (int f = 0; f < c / frame_channels; ++f) {
        Tensor frame = slice_channels(g, feature, f * frame_channels, (f + 1) * frame_channels);
        Tensor phi = localize(g, frame);
        if (phi_out) phi_out->push_back(phi);
        frames.push_back(grid_sample(g, frame, affine_grid(g, phi, h, w)));
    }
    return concat_channels(g, frames);
}

void StnBlock::visit(const ParamVisitor& fn, const std::string& prefix) {
    fn(prefix + "conv1.weight", conv1.weight);
    fn(prefix + "conv1.bias", conv1.bias);
    fn(prefix + "conv2.weight", conv2.weight);
    fn(prefix + "conv2.bias", conv2.bias);
    fn(prefix + "fc1.weight", fc1.weight);
    fn(prefix + "fc1.bias", fc1.bias);
    fn(prefix + "fc2.weight", fc2.weight);
    fn(prefix + "fc2.bias", fc2.bias);
}

}  // namespace movie
