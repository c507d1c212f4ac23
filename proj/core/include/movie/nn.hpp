#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "movie/ops.hpp"
#include "movie/rng.hpp"

namespace movie {


struct Conv2dLayer {
    Tensor weight, bias;
    int stride = 1;

    Conv2dLayer() = default;
    Conv2dLayer(int cin, int cout, int k, int s, Rng& rng);
    Tensor forward(Graph* g, const Tensor& x) const { return conv2d(g, x, weight, bias, stride); }
};

struct LinearLayer {
    Tensor weight, bias;

    LinearLayer() = default;
    LinearLayer(int in, int out, Rng& rng);
    Tensor forward(Graph* g, const Tensor& x) const { return linear(g, x, weight, bias); }
};

using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

/// The image encoder h: four strided valid convolutions (32 filters,
/// kernels 7/5/3/3, stride 2) with ReLU, then a 288 -> 50 linear head.
struct Encoder {
    std::array<Conv2dLayer, 4> convs;
    LinearLayer head;

    static constexpr int kInputChannels = 9;
    static constexpr int kInputSize = 84;
    static constexpr int kLatentDim = 50;

    Encoder() = default;
    explicit Encoder(Rng& rng);

    Tensor forward(Graph* g, const Tensor& obs) const;
    /// Run conv stages [first, 4) then the head; used when STN blocks are
    /// threaded between the stages.
    Tensor forward_tail(Graph* g, const Tensor& x, int first_stage) const;

    void visit(const ParamVisitor& fn, const std::string& prefix);
};

/// Plain MLP with ReLU hidden activations; optionally tanh-squashed and
/// scaled output (action heads).
struct Mlp {
    std::vector<LinearLayer> layers;
    bool tanh_out = false;
    double out_scale = 1.0;

    Mlp() = default;
    Mlp(const std::vector<int>& dims, bool tanh_output, double scale, Rng& rng);

    Tensor forward(Graph* g, const Tensor& x) const;
    void visit(const ParamVisitor& fn, const std::string& prefix);
};

}  // namespace movie
