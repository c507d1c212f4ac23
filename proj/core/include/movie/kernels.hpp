#pragma once

#include <cstdint>

namespace movie::kernels {

struct Conv2dDims {
    int cin = 0, h = 0, w = 0;
    int cout = 0, k = 0, stride = 1;
    int oh = 0, ow = 0;
};

/// Valid strided convolution, out[co][oy][ox] = bias[co] + sum over
/// (ci,ky,kx) of in*weight, accumulated with fused multiply-add strictly in
/// (ci,ky,kx) order per output element. The vector path broadcasts the input
/// pixel across output channels, so the per-element operation sequence (and
/// therefore the rounding) is identical to a plain scalar loop in the same
/// order.
/// weight layout is canonical [cout][cin][k][k].
void conv2d_forward(const double* in, const double* weight, const double* bias,
                    double* out, const Conv2dDims& d);

/// Gradient accumulation for conv2d. Any of gin/gweight/gbias may be null to
/// skip that term (gin is skipped when the input is a constant leaf).
void conv2d_backward(const double* in, const double* weight, const double* gout,
                     double* gin, double* gweight, double* gbias, const Conv2dDims& d);

}  // namespace movie::kernels
