#include "movie/ops.hpp"

#include <cmath>
#include <cstring>

#include "movie/kernels.hpp"

namespace movie {

namespace {

void check_rank(const Tensor& t, int rank, const char* op, const char* name) {
    if (t.ndim() != rank)
        throw ShapeError(std::string(op) + ": " + name + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_str(t.shape()));
}

struct Conv2dNode : Node {
    Tensor input, weight, bias, out;
    kernels::Conv2dDims dims;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g) return;
        double* gin = input.requires_grad() ? input.grad() : nullptr;
        double* gw = weight.requires_grad() ? weight.grad() : nullptr;
        double* gb = bias.requires_grad() ? bias.grad() : nullptr;
        if (!gin && !gw && !gb) return;
        kernels::conv2d_backward(input.data(), weight.data(), g, gin, gw, gb, dims);
    }
};

struct MaxPool2dNode : Node {
    Tensor input, out;
    std::vector<int64_t> argmax;  // flat input index per output element

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g || !input.requires_grad()) return;
        double* gin = input.grad();
        for (int64_t i = 0; i < out.numel(); ++i) gin[argmax[(size_t)i]] += g[i];
    }
};

struct LinearNode : Node {
    Tensor x, weight, bias, out;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g) return;
        const int m = weight.dim(0), n = weight.dim(1);
        if (bias.requires_grad()) {
            double* gb = bias.grad();
            for (int i = 0; i < m; ++i) gb[i] += g[i];
        }
        if (weight.requires_grad()) {
            double* gw = weight.grad();
            const double* xv = x.data();
            for (int i = 0; i < m; ++i) {
                const double gi = g[i];
                double* row = gw + (int64_t)i * n;
                for (int j = 0; j < n; ++j) row[j] = std::fma(gi, xv[j], row[j]);
            }
        }
        if (x.requires_grad()) {
            double* gx = x.grad();
            const double* wv = weight.data();
            for (int i = 0; i < m; ++i) {
                const double gi = g[i];
                const double* row = wv + (int64_t)i * n;
                for (int j = 0; j < n; ++j) gx[j] = std::fma(gi, row[j], gx[j]);
            }
        }
    }
};

struct ReluNode : Node {
    Tensor x, out;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g || !x.requires_grad()) return;
        double* gx = x.grad();
        const double* xv = x.data();
        for (int64_t i = 0; i < x.numel(); ++i)
            if (xv[i] > 0.0) gx[i] += g[i];
    }
};

struct TanhNode : Node {
    Tensor out;  // d tanh = 1 - tanh^2, recoverable from the output
    Tensor x;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g || !x.requires_grad()) return;
        double* gx = x.grad();
        const double* y = out.data();
        for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g[i] * (1.0 - y[i] * y[i]);
    }
};

struct MseNode : Node {
    Tensor pred, target, out;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g) return;
        const double scale = 2.0 * g[0] / static_cast<double>(pred.numel());
        const double* p = pred.data();
        const double* t = target.data();
        if (pred.requires_grad()) {
            double* gp = pred.grad();
            for (int64_t i = 0; i < pred.numel(); ++i) gp[i] += scale * (p[i] - t[i]);
        }
        if (target.requires_grad()) {
            double* gt = target.grad();
            for (int64_t i = 0; i < pred.numel(); ++i) gt[i] -= scale * (p[i] - t[i]);
        }
    }
};

struct AddNode : Node {
    Tensor a, b, out;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g) return;
        if (a.requires_grad()) {
            double* ga = a.grad();
            for (int64_t i = 0; i < a.numel(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            double* gb = b.grad();
            for (int64_t i = 0; i < b.numel(); ++i) gb[i] += g[i];
        }
    }
};

struct ScaleNode : Node {
    Tensor x, out;
    double c = 1.0;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g || !x.requires_grad()) return;
        double* gx = x.grad();
        for (int64_t i = 0; i < x.numel(); ++i) gx[i] += c * g[i];
    }
};

struct ClampNode : Node {
    Tensor x, out;
    double lo = 0.0, hi = 0.0;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g || !x.requires_grad()) return;
        double* gx = x.grad();
        const double* xv = x.data();
        for (int64_t i = 0; i < x.numel(); ++i)
            if (xv[i] > lo && xv[i] < hi) gx[i] += g[i];
    }
};

struct ConcatNode : Node {
    Tensor a, b, out;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g) return;
        if (a.requires_grad()) {
            double* ga = a.grad();
            for (int64_t i = 0; i < a.numel(); ++i) ga[i] += g[i];
        }
        if (b.requires_grad()) {
            double* gb = b.grad();
            for (int64_t i = 0; i < b.numel(); ++i) gb[i] += g[a.numel() + i];
        }
    }
};

struct SliceChannelsNode : Node {
    Tensor x, out;
    int c0 = 0;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g || !x.requires_grad()) return;
        const int64_t plane = (int64_t)x.dim(1) * x.dim(2);
        double* gx = x.grad() + c0 * plane;
        for (int64_t i = 0; i < out.numel(); ++i) gx[i] += g[i];
    }
};

struct ConcatChannelsNode : Node {
    std::vector<Tensor> parts;
    Tensor out;

    void backward() override {
        const double* g = out.grad_or_null();
        if (!g) return;
        int64_t off = 0;
        for (auto& p : parts) {
            if (p.requires_grad()) {
                double* gp = p.grad();
                for (int64_t i = 0; i < p.numel(); ++i) gp[i] += g[off + i];
            }
            off += p.numel();
        }
    }
};

template <typename NodeT>
void record_node(Graph* g, std::unique_ptr<NodeT> node, const char* kind,
                 std::initializer_list<const Tensor*> inputs, const Tensor& out) {
    node->kind = kind;
    for (const Tensor* t : inputs) node->input_ids.push_back(g->value_id(*t));
    node->output_id = g->value_id(out);
    g->record(std::move(node));
}

}  // namespace

Tensor conv2d(Graph* g, const Tensor& input, const Tensor& weight, const Tensor& bias, int stride) {
    check_rank(input, 3, "conv2d", "input");
    check_rank(weight, 4, "conv2d", "weight");
    check_rank(bias, 1, "conv2d", "bias");
    if (stride < 1) throw ContractError("conv2d: stride must be >= 1, got " + std::to_string(stride));
    kernels::Conv2dDims d;
    d.cin = input.dim(0);
    d.h = input.dim(1);
    d.w = input.dim(2);
    d.cout = weight.dim(0);
    d.k = weight.dim(2);
    d.stride = stride;
    if (weight.dim(2) != weight.dim(3))
        throw ShapeError("conv2d: kernel must be square, got " + shape_str(weight.shape()));
    if (weight.dim(1) != d.cin)
        throw ShapeError("conv2d: input channel axis mismatch: input axis 0 is " + std::to_string(d.cin) +
                         " but weight axis 1 is " + std::to_string(weight.dim(1)));
    if (bias.dim(0) != d.cout)
        throw ShapeError("conv2d: bias axis 0 is " + std::to_string(bias.dim(0)) +
                         " but weight axis 0 is " + std::to_string(d.cout));
    if (d.h < d.k)
        throw ShapeError("conv2d: input height (axis 1) " + std::to_string(d.h) +
                         " smaller than kernel " + std::to_string(d.k));
    if (d.w < d.k)
        throw ShapeError("conv2d: input width (axis 2) " + std::to_string(d.w) +
                         " smaller than kernel " + std::to_string(d.k));
    d.oh = (d.h - d.k) / d.stride + 1;
    d.ow = (d.w - d.k) / d.stride + 1;

    Tensor out({d.cout, d.oh, d.ow});
    kernels::conv2d_forward(input.data(), weight.data(), bias.data(), out.data(), d);

    if (tape_active(g, {&input, &weight, &bias})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<Conv2dNode>();
        node->input = input;
        node->weight = weight;
        node->bias = bias;
        node->out = out;
        node->dims = d;
        record_node(g, std::move(node), "conv2d", {&input, &weight, &bias}, out);
    }
    return out;
}

Tensor maxpool2d(Graph* g, const Tensor& input, int kernel, int stride) {
    check_rank(input, 3, "maxpool2d", "input");
    if (kernel < 1 || stride < 1)
        throw ContractError("maxpool2d: kernel and stride must be >= 1");
    const int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (h < kernel)
        throw ShapeError("maxpool2d: input height (axis 1) " + std::to_string(h) +
                         " smaller than kernel " + std::to_string(kernel));
    if (w < kernel)
        throw ShapeError("maxpool2d: input width (axis 2) " + std::to_string(w) +
                         " smaller than kernel " + std::to_string(kernel));
    const int oh = (h - kernel) / stride + 1;
    const int ow = (w - kernel) / stride + 1;

    Tensor out({c, oh, ow});
    std::vector<int64_t> argmax((size_t)out.numel());
    const double* in = input.data();
    double* o = out.data();
    int64_t oi = 0;
    for (int ci = 0; ci < c; ++ci) {
        const double* plane = in + (int64_t)ci * h * w;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox, ++oi) {
                // first-encountered maximum wins ties (row-major window scan)
                int64_t best_idx = (int64_t)(oy * stride) * w + ox * stride;
                double best = plane[best_idx];
                for (int ky = 0; ky < kernel; ++ky) {
                    const int64_t row = (int64_t)(oy * stride + ky) * w + ox * stride;
                    for (int kx = 0; kx < kernel; ++kx) {
                        const double v = plane[row + kx];
                        if (v > best) {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                o[oi] = best;
                argmax[(size_t)oi] = (int64_t)ci * h * w + best_idx;
            }
        }
    }

    if (tape_active(g, {&input})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<MaxPool2dNode>();
        node->input = input;
        node->out = out;
        node->argmax = std::move(argmax);
        record_node(g, std::move(node), "maxpool2d", {&input}, out);
    }
    return out;
}

Tensor linear(Graph* g, const Tensor& x, const Tensor& weight, const Tensor& bias) {
    check_rank(x, 1, "linear", "input");
    check_rank(weight, 2, "linear", "weight");
    check_rank(bias, 1, "linear", "bias");
    const int m = weight.dim(0), n = weight.dim(1);
    if (x.dim(0) != n)
        throw ShapeError("linear: input axis 0 is " + std::to_string(x.dim(0)) +
                         " but weight axis 1 is " + std::to_string(n));
    if (bias.dim(0) != m)
        throw ShapeError("linear: bias axis 0 is " + std::to_string(bias.dim(0)) +
                         " but weight axis 0 is " + std::to_string(m));

    Tensor out({m});
    const double* xv = x.data();
    const double* wv = weight.data();
    const double* bv = bias.data();
    double* o = out.data();
    for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        const double* row = wv + (int64_t)i * n;
        for (int j = 0; j < n; ++j) acc = std::fma(row[j], xv[j], acc);
        o[i] = acc + bv[i];
    }

    if (tape_active(g, {&x, &weight, &bias})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<LinearNode>();
        node->x = x;
        node->weight = weight;
        node->bias = bias;
        node->out = out;
        record_node(g, std::move(node), "linear", {&x, &weight, &bias}, out);
    }
    return out;
}

Tensor relu(Graph* g, const Tensor& x) {
    Tensor out(x.shape());
    const double* xv = x.data();
    double* o = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : 0.0;
    if (tape_active(g, {&x})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<ReluNode>();
        node->x = x;
        node->out = out;
        record_node(g, std::move(node), "relu", {&x}, out);
    }
    return out;
}

Tensor tanh_op(Graph* g, const Tensor& x) {
    Tensor out(x.shape());
    const double* xv = x.data();
    double* o = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) o[i] = std::tanh(xv[i]);
    if (tape_active(g, {&x})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<TanhNode>();
        node->x = x;
        node->out = out;
        record_node(g, std::move(node), "tanh", {&x}, out);
    }
    return out;
}

Tensor mse_loss(Graph* g, const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape())
        throw ShapeError("mse_loss: pred shape " + shape_str(pred.shape()) +
                         " differs from target shape " + shape_str(target.shape()));
    const double* p = pred.data();
    const double* t = target.data();
    double acc = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double dv = p[i] - t[i];
        acc = std::fma(dv, dv, acc);
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(pred.numel()));
    if (tape_active(g, {&pred, &target})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<MseNode>();
        node->pred = pred;
        node->target = target;
        node->out = out;
        record_node(g, std::move(node), "mse_loss", {&pred, &target}, out);
    }
    return out;
}

Tensor add(Graph* g, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError("add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(a.shape());
    const double* av = a.data();
    const double* bv = b.data();
    double* o = out.data();
    for (int64_t i = 0; i < a.numel(); ++i) o[i] = av[i] + bv[i];
    if (tape_active(g, {&a, &b})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<AddNode>();
        node->a = a;
        node->b = b;
        node->out = out;
        record_node(g, std::move(node), "add", {&a, &b}, out);
    }
    return out;
}

Tensor scale(Graph* g, const Tensor& x, double c) {
    Tensor out(x.shape());
    const double* xv = x.data();
    double* o = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) o[i] = c * xv[i];
    if (tape_active(g, {&x})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<ScaleNode>();
        node->x = x;
        node->out = out;
        node->c = c;
        record_node(g, std::move(node), "scale", {&x}, out);
    }
    return out;
}

Tensor clamp(Graph* g, const Tensor& x, double lo, double hi) {
    if (!(lo < hi)) throw ContractError("clamp: lo must be < hi");
    Tensor out(x.shape());
    const double* xv = x.data();
    double* o = out.data();
    for (int64_t i = 0; i < x.numel(); ++i) o[i] = std::min(std::max(xv[i], lo), hi);
    if (tape_active(g, {&x})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<ClampNode>();
        node->x = x;
        node->out = out;
        node->lo = lo;
        node->hi = hi;
        record_node(g, std::move(node), "clamp", {&x}, out);
    }
    return out;
}

Tensor concat(Graph* g, const Tensor& a, const Tensor& b) {
    check_rank(a, 1, "concat", "a");
    check_rank(b, 1, "concat", "b");
    Tensor out({a.dim(0) + b.dim(0)});
    std::memcpy(out.data(), a.data(), sizeof(double) * a.numel());
    std::memcpy(out.data() + a.numel(), b.data(), sizeof(double) * b.numel());
    if (tape_active(g, {&a, &b})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<ConcatNode>();
        node->a = a;
        node->b = b;
        node->out = out;
        record_node(g, std::move(node), "concat", {&a, &b}, out);
    }
    return out;
}

Tensor slice_channels(Graph* g, const Tensor& x, int c0, int c1) {
    check_rank(x, 3, "slice_channels", "input");
    if (c0 < 0 || c1 <= c0 || c1 > x.dim(0))
        throw ShapeError("slice_channels: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for channel axis of size " + std::to_string(x.dim(0)));
    const int64_t plane = (int64_t)x.dim(1) * x.dim(2);
    Tensor out({c1 - c0, x.dim(1), x.dim(2)});
    std::memcpy(out.data(), x.data() + c0 * plane, sizeof(double) * out.numel());
    if (tape_active(g, {&x})) {
        out.set_requires_grad(true);
        auto node = std::make_unique<SliceChannelsNode>();
        node->x = x;
        node->out = out;
        node->c0 = c0;
        record_node(g, std::move(node), "slice_channels", {&x}, out);
    }
    return out;
}

Tensor concat_channels(Graph* g, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_channels: no parts");
    int c = 0;
    for (auto& p : parts) {
        check_rank(p, 3, "concat_channels", "part");
        if (p.dim(1) != parts[0].dim(1) || p.dim(2) != parts[0].dim(2))
            throw ShapeError("concat_channels: spatial axes differ: " + shape_str(p.shape()) +
                             " vs " + shape_str(parts[0].shape()));
        c += p.dim(0);
    }
    Tensor out({c, parts[0].dim(1), parts[0].dim(2)});
    int64_t off = 0;
    for (auto& p : parts) {
        std::memcpy(out.data() + off, p.data(), sizeof(double) * p.numel());
        off += p.numel();
    }
    bool rg = false;
    for (auto& p : parts) rg = rg || p.requires_grad();
    if (g && rg) {
        out.set_requires_grad(true);
        auto node = std::make_unique<ConcatChannelsNode>();
        node->parts = parts;
        node->out = out;
        node->kind = "concat_channels";
        for (auto& p : parts) node->input_ids.push_back(g->value_id(p));
        node->output_id = g->value_id(out);
        g->record(std::move(node));
    }
    return out;
}

Tensor detach(const Tensor& x) {
    Tensor t = x.reshape(x.shape());
    t.set_requires_grad(false);
    return t;
}

}  // namespace movie
