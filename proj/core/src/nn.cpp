#include "movie/nn.hpp"

#include <cmath>

namespace movie {

namespace {

Tensor init_uniform(std::vector<int> shape, double limit, Rng& rng) {
    Tensor t(std::move(shape));
    double* p = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) p[i] = rng.uniform(-limit, limit);
    return t;
}

}  // namespace

Conv2dLayer::Conv2dLayer(int cin, int cout, int k, int s, Rng& rng) : stride(s) {
    const double limit = std::sqrt(6.0 / (cin * k * k));
    weight = init_uniform({cout, cin, k, k}, limit, rng);
    bias = Tensor({cout});
}

LinearLayer::LinearLayer(int in, int out, Rng& rng) {
    const double limit = std::sqrt(6.0 / in);
    weight = init_uniform({out, in}, limit, rng);
    bias = Tensor({out});
}

Encoder::Encoder(Rng& rng) {
    convs[0] = Conv2dLayer(kInputChannels, 32, 7, 2, rng);
    convs[1] = Conv2dLayer(32, 32, 5, 2, rng);
    convs[2] = Conv2dLayer(32, 32, 3, 2, rng);
    convs[3] = Conv2dLayer(32, 32, 3, 2, rng);
    head = LinearLayer(288, kLatentDim, rng);
}

Tensor Encoder::forward(Graph* g, const Tensor& obs) const {
    if (obs.ndim() != 3 || obs.dim(0) != kInputChannels || obs.dim(1) != kInputSize ||
        obs.dim(2) != kInputSize)
        throw ShapeError("encoder: expected observation [9,84,84], got " + shape_str(obs.shape()));
    return forward_tail(g, obs, 0);
}

Tensor Encoder::forward_tail(Graph* g, const Tensor& x_in, int first_stage) const {
    Tensor x = x_in;
    for (int s = first_stage; s < 4; ++s) x = relu(g, convs[(size_t)s].forward(g, x));
    x = x.reshape({(int)x.numel()});
    if (x.dim(0) != 288)
        throw ShapeError("encoder: flattened feature size " + std::to_string(x.dim(0)) +
                         ", expected 288");
    return head.forward(g, x);
}

void Encoder::visit(const ParamVisitor& fn, const std::string& prefix) {
    for (int i = 0; i < 4; ++i) {
        fn(prefix + "conv" + std::to_string(i + 1) + ".weight", convs[(size_t)i].weight);
        fn(prefix + "conv" + std::to_string(i + 1) + ".bias", convs[(size_t)i].bias);
    }
    fn(prefix + "head.weight", head.weight);
    fn(prefix + "head.bias", head.bias);
}

Mlp::Mlp(const std::vector<int>& dims, bool tanh_output, double scale, Rng& rng)
    : tanh_out(tanh_output), out_scale(scale) {
    if (dims.size() < 2) throw ContractError("Mlp: need at least input and output dims");
    for (size_t i = 0; i + 1 < dims.size(); ++i)
        layers.emplace_back(dims[i], dims[i + 1], rng);
}

Tensor Mlp::forward(Graph* g, const Tensor& x_in) const {
    Tensor x = x_in;
    for (size_t i = 0; i < layers.size(); ++i) {
        x = layers[i].forward(g, x);
        if (i + 1 < layers.size()) x = relu(g, x);
    }
    if (tanh_out) x = scale(g, tanh_op(g, x), out_scale);
    return x;
}

void Mlp::visit(const ParamVisitor& fn, const std::string& prefix) {
    for (size_t i = 0; i < layers.size(); ++i) {
        fn(prefix + "fc" + std::to_string(i + 1) + ".weight", layers[i].weight);
        fn(prefix + "fc" + std::to_string(i + 1) + ".bias", layers[i].bias);
    }
}

}  // namespace movie
