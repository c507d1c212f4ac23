#include "movie/kernels.hpp"

#include <cmath>
#include <cstring>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#define MOVIE_AVX512 1
#endif

namespace movie::kernels {

namespace {

// Pack canonical [cout][cin][k][k] weights as [K][cout] with K = cin*k*k so
// the vector kernel can stream one row of output channels per inner product
// term. Same K ordering (ci,ky,kx) as the scalar loop.
void pack_weights(const double* weight, double* wt, int cout, int K) {
    for (int co = 0; co < cout; ++co)
        for (int p = 0; p < K; ++p)
            wt[(int64_t)p * cout + co] = weight[(int64_t)co * K + p];
}

}  // namespace

#ifdef MOVIE_AVX512

void conv2d_forward(const double* in, const double* weight, const double* bias,
                    double* out, const Conv2dDims& d) {
    const int K = d.cin * d.k * d.k;
    const int nv = (d.cout + 7) / 8;
    std::vector<double> wt((size_t)K * d.cout);
    pack_weights(weight, wt.data(), d.cout, K);
    const __mmask8 tail = (__mmask8)((d.cout % 8) ? ((1u << (d.cout % 8)) - 1u) : 0xFFu);

    const int64_t in_ch = (int64_t)d.h * d.w;
    const int64_t out_ch = (int64_t)d.oh * d.ow;

    for (int oy = 0; oy < d.oh; ++oy) {
        int ox = 0;
        for (; ox + 2 <= d.ow; ox += 2) {
            __m512d acc0[4], acc1[4];
            for (int r = 0; r < nv; ++r) {
                acc0[r] = _mm512_setzero_pd();
                acc1[r] = _mm512_setzero_pd();
            }
            const double* wp = wt.data();
            for (int ci = 0; ci < d.cin; ++ci) {
                const double* base = in + ci * in_ch + (int64_t)(oy * d.stride) * d.w + ox * d.stride;
                for (int ky = 0; ky < d.k; ++ky) {
                    const double* row = base + (int64_t)ky * d.w;
                    for (int kx = 0; kx < d.k; ++kx) {
                        const __m512d x0 = _mm512_set1_pd(row[kx]);
                        const __m512d x1 = _mm512_set1_pd(row[kx + d.stride]);
                        for (int r = 0; r < nv; ++r) {
                            const __m512d w = (r == nv - 1)
                                                  ? _mm512_maskz_loadu_pd(tail, wp + 8 * r)
                                                  : _mm512_loadu_pd(wp + 8 * r);
                            acc0[r] = _mm512_fmadd_pd(x0, w, acc0[r]);
                            acc1[r] = _mm512_fmadd_pd(x1, w, acc1[r]);
                        }
                        wp += d.cout;
                    }
                }
            }
            double tmp0[32], tmp1[32];
            for (int r = 0; r < nv; ++r) {
                _mm512_storeu_pd(tmp0 + 8 * r, acc0[r]);
                _mm512_storeu_pd(tmp1 + 8 * r, acc1[r]);
            }
            for (int co = 0; co < d.cout; ++co) {
                out[co * out_ch + (int64_t)oy * d.ow + ox] = tmp0[co] + bias[co];
                out[co * out_ch + (int64_t)oy * d.ow + ox + 1] = tmp1[co] + bias[co];
            }
        }
        for (; ox < d.ow; ++ox) {
            __m512d acc[4];
            for (int r = 0; r < nv; ++r) acc[r] = _mm512_setzero_pd();
            const double* wp = wt.data();
            for (int ci = 0; ci < d.cin; ++ci) {
                const double* base = in + ci * in_ch + (int64_t)(oy * d.stride) * d.w + ox * d.stride;
                for (int ky = 0; ky < d.k; ++ky) {
                    const double* row = base + (int64_t)ky * d.w;
                    for (int kx = 0; kx < d.k; ++kx) {
                        const __m512d x = _mm512_set1_pd(row[kx]);
                        for (int r = 0; r < nv; ++r) {
                            const __m512d w = (r == nv - 1)
                                                  ? _mm512_maskz_loadu_pd(tail, wp + 8 * r)
                                                  : _mm512_loadu_pd(wp + 8 * r);
                            acc[r] = _mm512_fmadd_pd(x, w, acc[r]);
                        }
                        wp += d.cout;
                    }
                }
            }
            double tmp[32];
            for (int r = 0; r < nv; ++r) _mm512_storeu_pd(tmp + 8 * r, acc[r]);
            for (int co = 0; co < d.cout; ++co)
                out[co * out_ch + (int64_t)oy * d.ow + ox] = tmp[co] + bias[co];
        }
    }
}

#else  // scalar fallback, same fma per element in the same order

void conv2d_forward(const double* in, const double* weight, const double* bias,
                    double* out, const Conv2dDims& d) {
    const int K = d.cin * d.k * d.k;
    const int64_t in_ch = (int64_t)d.h * d.w;
    const int64_t out_ch = (int64_t)d.oh * d.ow;
    for (int co = 0; co < d.cout; ++co) {
        const double* wc = weight + (int64_t)co * K;
        for (int oy = 0; oy < d.oh; ++oy) {
            for (int ox = 0; ox < d.ow; ++ox) {
                double acc = 0.0;
                const double* wp = wc;
                for (int ci = 0; ci < d.cin; ++ci) {
                    const double* base = in + ci * in_ch + (int64_t)(oy * d.stride) * d.w + ox * d.stride;
                    for (int ky = 0; ky < d.k; ++ky) {
                        const double* row = base + (int64_t)ky * d.w;
                        for (int kx = 0; kx < d.k; ++kx) acc = std::fma(row[kx], *wp++, acc);
                    }
                }
                out[co * out_ch + (int64_t)oy * d.ow + ox] = acc + bias[co];
            }
        }
    }
}

#endif  // MOVIE_AVX512

void conv2d_backward(const double* in, const double* weight, const double* gout,
                     double* gin, double* gweight, double* gbias, const Conv2dDims& d) {
    const int K = d.cin * d.k * d.k;
    const int64_t in_ch = (int64_t)d.h * d.w;
    const int64_t out_ch = (int64_t)d.oh * d.ow;

    if (gbias) {
        for (int co = 0; co < d.cout; ++co) {
            double s = 0.0;
            const double* g = gout + co * out_ch;
            for (int64_t p = 0; p < out_ch; ++p) s += g[p];
            gbias[co] += s;
        }
    }

    for (int co = 0; co < d.cout; ++co) {
        const double* g = gout + co * out_ch;
        const double* wc = weight + (int64_t)co * K;
        double* gwc = gweight ? gweight + (int64_t)co * K : nullptr;
        for (int oy = 0; oy < d.oh; ++oy) {
            for (int ox = 0; ox < d.ow; ++ox) {
                const double gv = g[(int64_t)oy * d.ow + ox];
                if (gv == 0.0) continue;
                const int64_t in_off = (int64_t)(oy * d.stride) * d.w + ox * d.stride;
                for (int ci = 0; ci < d.cin; ++ci) {
                    const double* ibase = in + ci * in_ch + in_off;
                    double* gibase = gin ? gin + ci * in_ch + in_off : nullptr;
                    const double* wrow = wc + (int64_t)ci * d.k * d.k;
                    double* gwrow = gwc ? gwc + (int64_t)ci * d.k * d.k : nullptr;
                    for (int ky = 0; ky < d.k; ++ky) {
                        const double* irow = ibase + (int64_t)ky * d.w;
                        const double* wr = wrow + ky * d.k;
                        if (gibase) {
                            double* gir = gibase + (int64_t)ky * d.w;
                            for (int kx = 0; kx < d.k; ++kx) gir[kx] = std::fma(gv, wr[kx], gir[kx]);
                        }
                        if (gwrow) {
                            double* gwr = gwrow + ky * d.k;
                            for (int kx = 0; kx < d.k; ++kx) gwr[kx] = std::fma(gv, irow[kx], gwr[kx]);
                        }
                    }
                }
            }
        }
    }
}

}  // namespace movie::kernels
