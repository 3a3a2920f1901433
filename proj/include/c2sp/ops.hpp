#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <vector>

#include "c2sp/tensor.hpp"

namespace c2sp {
namespace detail {

inline bool track(const Tensor& a) { return grad_enabled() && a.requires_grad(); }
inline bool track(const Tensor& a, const Tensor& b) {
    return grad_enabled() && (a.requires_grad() || b.requires_grad());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// matmul and friends
// ---------------------------------------------------------------------------

// a[MxN] * b[NxK] -> [MxK]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw dim_error("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    }
    const std::size_t M = a.dim(0), N = a.dim(1), K = b.dim(1);
    Tensor out = Tensor::zeros({M, K});
    {
        const double* pa = a.data();
        const double* pb = b.data();
        double* po = out.data();
        for (std::size_t i = 0; i < M; ++i) {
            for (std::size_t n = 0; n < N; ++n) {
                const double av = pa[i * N + n];
                const double* brow = pb + n * K;
                double* orow = po + i * K;
                for (std::size_t k = 0; k < K; ++k) orow[k] += av * brow[k];
            }
        }
    }
    if (detail::track(a, b)) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        Tape::current().record([ai, bi, oi, M, N, K] {
            const double* g = oi->grad_data();
            if (ai->requires_grad) {
                double* da = ai->grad_data();
                const double* pb = bi->values.data();
                for (std::size_t i = 0; i < M; ++i)
                    for (std::size_t n = 0; n < N; ++n) {
                        double acc = 0.0;
                        const double* grow = g + i * K;
                        const double* brow = pb + n * K;
#pragma omp simd reduction(+ : acc)
                        for (std::size_t k = 0; k < K; ++k) acc += grow[k] * brow[k];
                        da[i * N + n] += acc;
                    }
            }
            if (bi->requires_grad) {
                double* db = bi->grad_data();
                const double* pa = ai->values.data();
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t i = 0; i < M; ++i) {
                        const double av = pa[i * N + n];
                        const double* grow = g + i * K;
                        double* drow = db + n * K;
                        for (std::size_t k = 0; k < K; ++k) drow[k] += av * grow[k];
                    }
            }
        });
    }
    return out;
}

// a[PxN] * b[MxN]^T -> [PxM]. Row-by-row dot products; this is the layout the
// compression operator uses on large windows, keep it cache friendly.
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
        throw dim_error("matmul_nt: incompatible shapes " + shape_str(a.shape()) + " and " +
                        shape_str(b.shape()));
    }
    const std::size_t P = a.dim(0), N = a.dim(1), M = b.dim(0);
    Tensor out = Tensor::zeros({P, M});
    {
        const double* pa = a.data();
        const double* pb = b.data();
        double* po = out.data();
        for (std::size_t m = 0; m < M; ++m) {
            const double* brow = pb + m * N;
            for (std::size_t p = 0; p < P; ++p) {
                const double* arow = pa + p * N;
                double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                for (std::size_t n = 0; n < N; ++n) acc += arow[n] * brow[n];
                po[p * M + m] = acc;
            }
        }
    }
    if (detail::track(a, b)) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        Tape::current().record([ai, bi, oi, P, N, M] {
            const double* g = oi->grad_data();
            if (ai->requires_grad) {
                // da = g * b
                double* da = ai->grad_data();
                const double* pb = bi->values.data();
                for (std::size_t p = 0; p < P; ++p) {
                    const double* grow = g + p * M;
                    double* drow = da + p * N;
                    for (std::size_t m = 0; m < M; ++m) {
                        const double gv = grow[m];
                        if (gv == 0.0) continue;
                        const double* brow = pb + m * N;
                        for (std::size_t n = 0; n < N; ++n) drow[n] += gv * brow[n];
                    }
                }
            }
            if (bi->requires_grad) {
                // db = g^T * a
                double* db = bi->grad_data();
                const double* pa = ai->values.data();
                for (std::size_t p = 0; p < P; ++p) {
                    const double* grow = g + p * M;
                    const double* arow = pa + p * N;
                    for (std::size_t m = 0; m < M; ++m) {
                        const double gv = grow[m];
                        if (gv == 0.0) continue;
                        double* brow = db + m * N;
                        for (std::size_t n = 0; n < N; ++n) brow[n] += gv * arow[n];
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
    if (detail::shape_product(shape) != x.size()) {
        throw dim_error("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Tensor out = Tensor::from(std::move(shape), x.values());
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape::current().record([xi, oi] {
            const double* g = oi->grad_data();
            double* dx = xi->grad_data();
            for (std::size_t i = 0; i < xi->size(); ++i) dx[i] += g[i];
        });
    }
    return out;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw dim_error("add: shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = pa[i] + pb[i];
    if (detail::track(a, b)) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        Tape::current().record([ai, bi, oi] {
            const double* g = oi->grad_data();
            if (ai->requires_grad) {
                double* da = ai->grad_data();
                for (std::size_t i = 0; i < ai->size(); ++i) da[i] += g[i];
            }
            if (bi->requires_grad) {
                double* db = bi->grad_data();
                for (std::size_t i = 0; i < bi->size(); ++i) db[i] += g[i];
            }
        });
    }
    return out;
}

inline Tensor mul_scalar(const Tensor& x, double s) {
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = s * px[i];
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape::current().record([xi, oi, s] {
            const double* g = oi->grad_data();
            double* dx = xi->grad_data();
            for (std::size_t i = 0; i < xi->size(); ++i) dx[i] += s * g[i];
        });
    }
    return out;
}

inline Tensor sum(const Tensor& x) {
    double acc = 0.0;
    const double* px = x.data();
    for (std::size_t i = 0; i < x.size(); ++i) acc += px[i];
    Tensor out = Tensor::scalar(acc);
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape::current().record([xi, oi] {
            const double g = oi->grad_data()[0];
            double* dx = xi->grad_data();
            for (std::size_t i = 0; i < xi->size(); ++i) dx[i] += g;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv1d: cross-correlation over time, kernels span all input channels
// ---------------------------------------------------------------------------

inline std::size_t conv1d_out_len(std::size_t L, std::size_t K, std::size_t stride,
                                  std::size_t padding) {
    if (L + 2 * padding < K) {
        throw dim_error("conv1d: kernel " + std::to_string(K) + " longer than padded input " +
                        std::to_string(L + 2 * padding));
    }
    return (L + 2 * padding - K) / stride + 1;
}

// input [BxCinxL], kernels [CoutxCinxK], optional bias [Cout] -> [BxCoutxL'].
// A 2D input [CinxL] is treated as batch 1 and returns [CoutxL'].
inline Tensor conv1d(const Tensor& input, const Tensor& kernels, std::size_t stride,
                     std::size_t padding, const Tensor& bias = Tensor()) {
    const bool batched = input.ndim() == 3;
    if (!batched && input.ndim() != 2) {
        throw dim_error("conv1d: input must be [BxCxL] or [CxL], got " + shape_str(input.shape()));
    }
    if (kernels.ndim() != 3) {
        throw dim_error("conv1d: kernels must be [CoutxCinxK], got " + shape_str(kernels.shape()));
    }
    const std::size_t B = batched ? input.dim(0) : 1;
    const std::size_t Cin = batched ? input.dim(1) : input.dim(0);
    const std::size_t L = batched ? input.dim(2) : input.dim(1);
    const std::size_t Cout = kernels.dim(0), K = kernels.dim(2);
    if (kernels.dim(1) != Cin) {
        throw dim_error("conv1d: kernel channels " + shape_str(kernels.shape()) +
                        " vs input channels " + shape_str(input.shape()));
    }
    if (stride == 0) throw dim_error("conv1d: stride must be positive");
    const std::size_t Lo = conv1d_out_len(L, K, stride, padding);
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != Cout)) {
        throw dim_error("conv1d: bias shape " + shape_str(bias.shape()));
    }

    // Zero-padded copy of the input, shared with the backward closure.
    const std::size_t Lp = L + 2 * padding;
    auto padded = std::make_shared<std::vector<double>>(B * Cin * Lp, 0.0);
    {
        const double* px = input.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < Cin; ++c)
                std::copy(px + (b * Cin + c) * L, px + (b * Cin + c) * L + L,
                          padded->data() + (b * Cin + c) * Lp + padding);
    }

    Tensor out = batched ? Tensor::zeros({B, Cout, Lo}) : Tensor::zeros({Cout, Lo});
    {
        const double* pw = kernels.data();
        double* po = out.data();
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t co = 0; co < Cout; ++co) {
                double* orow = po + (b * Cout + co) * Lo;
                if (bias.defined()) {
                    const double bv = bias.data()[co];
                    for (std::size_t t = 0; t < Lo; ++t) orow[t] = bv;
                }
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    const double* xrow = padded->data() + (b * Cin + ci) * Lp;
                    const double* wrow = pw + (co * Cin + ci) * K;
                    for (std::size_t k = 0; k < K; ++k) {
                        const double wv = wrow[k];
                        if (wv == 0.0) continue;
                        const double* xk = xrow + k;
                        if (stride == 1) {
                            for (std::size_t t = 0; t < Lo; ++t) orow[t] += wv * xk[t];
                        } else {
                            for (std::size_t t = 0; t < Lo; ++t) orow[t] += wv * xk[t * stride];
                        }
                    }
                }
            }
        }
    }

    const bool need_grad = grad_enabled() && (input.requires_grad() || kernels.requires_grad() ||
                                              (bias.defined() && bias.requires_grad()));
    if (need_grad) {
        out.set_requires_grad(true);
        auto xi = input.impl(), wi = kernels.impl(), oi = out.impl();
        auto bi = bias.defined() ? bias.impl() : nullptr;
        Tape::current().record([xi, wi, oi, bi, padded, B, Cin, L, Lp, Cout, K, Lo, stride,
                                padding] {
            const double* g = oi->grad_data();
            if (wi->requires_grad) {
                double* dw = wi->grad_data();
                for (std::size_t co = 0; co < Cout; ++co)
                    for (std::size_t ci = 0; ci < Cin; ++ci)
                        for (std::size_t k = 0; k < K; ++k) {
                            double acc = 0.0;
                            for (std::size_t b = 0; b < B; ++b) {
                                const double* grow = g + (b * Cout + co) * Lo;
                                const double* xk = padded->data() + (b * Cin + ci) * Lp + k;
                                if (stride == 1) {
#pragma omp simd reduction(+ : acc)
                                    for (std::size_t t = 0; t < Lo; ++t) acc += grow[t] * xk[t];
                                } else {
                                    for (std::size_t t = 0; t < Lo; ++t)
                                        acc += grow[t] * xk[t * stride];
                                }
                            }
                            dw[(co * Cin + ci) * K + k] += acc;
                        }
            }
            if (bi && bi->requires_grad) {
                double* db = bi->grad_data();
                for (std::size_t co = 0; co < Cout; ++co) {
                    double acc = 0.0;
                    for (std::size_t b = 0; b < B; ++b) {
                        const double* grow = g + (b * Cout + co) * Lo;
                        for (std::size_t t = 0; t < Lo; ++t) acc += grow[t];
                    }
                    db[co] += acc;
                }
            }
            if (xi->requires_grad) {
                std::vector<double> dpad(B * Cin * Lp, 0.0);
                const double* pw = wi->values.data();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t co = 0; co < Cout; ++co) {
                        const double* grow = g + (b * Cout + co) * Lo;
                        for (std::size_t ci = 0; ci < Cin; ++ci) {
                            double* drow = dpad.data() + (b * Cin + ci) * Lp;
                            const double* wrow = pw + (co * Cin + ci) * K;
                            for (std::size_t k = 0; k < K; ++k) {
                                const double wv = wrow[k];
                                if (wv == 0.0) continue;
                                double* dk = drow + k;
                                if (stride == 1) {
                                    for (std::size_t t = 0; t < Lo; ++t) dk[t] += wv * grow[t];
                                } else {
                                    for (std::size_t t = 0; t < Lo; ++t)
                                        dk[t * stride] += wv * grow[t];
                                }
                            }
                        }
                    }
                double* dx = xi->grad_data();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < Cin; ++c) {
                        const double* src = dpad.data() + (b * Cin + c) * Lp + padding;
                        double* dst = dx + (b * Cin + c) * L;
                        for (std::size_t t = 0; t < L; ++t) dst[t] += src[t];
                    }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// batch normalization over (batch, time) per channel
// ---------------------------------------------------------------------------

struct RunningStats {
    std::vector<double> mean;
    std::vector<double> var;
    bool initialized = false;
};

inline Tensor batchnorm1d(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                          bool training, RunningStats& stats, double momentum = 0.1) {
    if (x.ndim() != 3) throw dim_error("batchnorm1d: input must be [BxCxL]");
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    if (gamma.size() != C || beta.size() != C) {
        throw dim_error("batchnorm1d: affine params must have length C=" + std::to_string(C));
    }
    if (!training && !stats.initialized) {
        throw state_error("batchnorm1d: eval mode requires running statistics");
    }

    const std::size_t n = B * L;
    auto mean = std::make_shared<std::vector<double>>(C, 0.0);
    auto var = std::make_shared<std::vector<double>>(C, 0.0);
    if (training) {
        const double* px = x.data();
        for (std::size_t c = 0; c < C; ++c) {
            double m = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* row = px + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) m += row[t];
            }
            m /= static_cast<double>(n);
            double v = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                const double* row = px + (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) {
                    const double d = row[t] - m;
                    v += d * d;
                }
            }
            v /= static_cast<double>(n);
            (*mean)[c] = m;
            (*var)[c] = v;
        }
        if (!stats.initialized) {
            stats.mean = *mean;
            stats.var = *var;
            stats.initialized = true;
        } else {
            for (std::size_t c = 0; c < C; ++c) {
                stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * (*mean)[c];
                stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * (*var)[c];
            }
        }
    } else {
        *mean = stats.mean;
        *var = stats.var;
    }

    auto inv_std = std::make_shared<std::vector<double>>(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) (*inv_std)[c] = 1.0 / std::sqrt((*var)[c] + eps);

    Tensor out = Tensor::zeros({B, C, L});
    auto xhat = std::make_shared<std::vector<double>>(x.size(), 0.0);
    {
        const double* px = x.data();
        const double* pg = gamma.data();
        const double* pb = beta.data();
        double* po = out.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double m = (*mean)[c], is = (*inv_std)[c], gv = pg[c], bv = pb[c];
                const std::size_t off = (b * C + c) * L;
                for (std::size_t t = 0; t < L; ++t) {
                    const double h = (px[off + t] - m) * is;
                    (*xhat)[off + t] = h;
                    po[off + t] = gv * h + bv;
                }
            }
    }

    const bool need_grad = grad_enabled() && (x.requires_grad() || gamma.requires_grad() ||
                                              beta.requires_grad());
    if (need_grad) {
        out.set_requires_grad(true);
        auto xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
        Tape::current().record([xi, gi, bi, oi, xhat, inv_std, B, C, L, n, training] {
            const double* g = oi->grad_data();
            // Per-channel reductions shared by all three adjoints.
            std::vector<double> sum_g(C, 0.0), sum_gh(C, 0.0);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const std::size_t off = (b * C + c) * L;
                    double sg = 0.0, sgh = 0.0;
                    for (std::size_t t = 0; t < L; ++t) {
                        sg += g[off + t];
                        sgh += g[off + t] * (*xhat)[off + t];
                    }
                    sum_g[c] += sg;
                    sum_gh[c] += sgh;
                }
            if (gi->requires_grad) {
                double* dg = gi->grad_data();
                for (std::size_t c = 0; c < C; ++c) dg[c] += sum_gh[c];
            }
            if (bi->requires_grad) {
                double* db = bi->grad_data();
                for (std::size_t c = 0; c < C; ++c) db[c] += sum_g[c];
            }
            if (xi->requires_grad) {
                double* dx = xi->grad_data();
                const double* pg = gi->values.data();
                const double inv_n = 1.0 / static_cast<double>(n);
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t c = 0; c < C; ++c) {
                        const std::size_t off = (b * C + c) * L;
                        const double gis = pg[c] * (*inv_std)[c];
                        for (std::size_t t = 0; t < L; ++t) {
                            if (training) {
                                dx[off + t] += gis * (g[off + t] - inv_n * sum_g[c] -
                                                      inv_n * (*xhat)[off + t] * sum_gh[c]);
                            } else {
                                dx[off + t] += gis * g[off + t];
                            }
                        }
                    }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// pointwise activations
// ---------------------------------------------------------------------------

inline Tensor leaky_relu(const Tensor& x, double slope) {
    Tensor out = Tensor::zeros(x.shape());
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t i = 0; i < x.size(); ++i) po[i] = px[i] > 0.0 ? px[i] : slope * px[i];
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape::current().record([xi, oi, slope] {
            const double* g = oi->grad_data();
            double* dx = xi->grad_data();
            const double* px = xi->values.data();
            for (std::size_t i = 0; i < xi->size(); ++i)
                dx[i] += px[i] > 0.0 ? g[i] : slope * g[i];
        });
    }
    return out;
}

inline Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

// Row-wise softmax on [BxK].
inline Tensor softmax(const Tensor& x) {
    if (x.ndim() != 2) throw dim_error("softmax: input must be [BxK]");
    const std::size_t B = x.dim(0), K = x.dim(1);
    Tensor out = Tensor::zeros({B, K});
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t b = 0; b < B; ++b) {
        const double* row = px + b * K;
        double* orow = po + b * K;
        double mx = row[0];
        for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
        double z = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            orow[k] = std::exp(row[k] - mx);
            z += orow[k];
        }
        for (std::size_t k = 0; k < K; ++k) orow[k] /= z;
    }
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape::current().record([xi, oi, B, K] {
            const double* g = oi->grad_data();
            const double* p = oi->values.data();
            double* dx = xi->grad_data();
            for (std::size_t b = 0; b < B; ++b) {
                const double* grow = g + b * K;
                const double* prow = p + b * K;
                double dot = 0.0;
                for (std::size_t k = 0; k < K; ++k) dot += grow[k] * prow[k];
                for (std::size_t k = 0; k < K; ++k)
                    dx[b * K + k] += prow[k] * (grow[k] - dot);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// pooling
// ---------------------------------------------------------------------------

// [BxCxL] -> [BxCxL']; ties route gradient to the lowest index. Padded slots
// hold -inf and can never win a window that contains a real sample.
inline Tensor maxpool1d(const Tensor& x, std::size_t k, std::size_t stride,
                        std::size_t padding = 0) {
    if (x.ndim() != 3) throw dim_error("maxpool1d: input must be [BxCxL]");
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    if (L + 2 * padding < k) {
        throw dim_error("maxpool1d: window " + std::to_string(k) + " exceeds padded length " +
                        std::to_string(L + 2 * padding));
    }
    if (stride == 0) throw dim_error("maxpool1d: stride must be positive");
    const std::size_t Lo = (L + 2 * padding - k) / stride + 1;
    Tensor out = Tensor::zeros({B, C, Lo});
    auto argmax = std::make_shared<std::vector<std::size_t>>(B * C * Lo, 0);
    {
        const double* px = x.data();
        double* po = out.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double* row = px + (b * C + c) * L;
                for (std::size_t t = 0; t < Lo; ++t) {
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_i = 0;
                    for (std::size_t j = 0; j < k; ++j) {
                        const std::ptrdiff_t idx =
                            static_cast<std::ptrdiff_t>(t * stride + j) -
                            static_cast<std::ptrdiff_t>(padding);
                        if (idx < 0 || idx >= static_cast<std::ptrdiff_t>(L)) continue;
                        if (row[idx] > best) {
                            best = row[idx];
                            best_i = static_cast<std::size_t>(idx);
                        }
                    }
                    po[(b * C + c) * Lo + t] = best;
                    (*argmax)[(b * C + c) * Lo + t] = best_i;
                }
            }
    }
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape::current().record([xi, oi, argmax, B, C, L, Lo] {
            const double* g = oi->grad_data();
            double* dx = xi->grad_data();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t t = 0; t < Lo; ++t) {
                        const std::size_t o = (b * C + c) * Lo + t;
                        dx[(b * C + c) * L + (*argmax)[o]] += g[o];
                    }
        });
    }
    return out;
}

// [BxCxL] -> [BxC]
inline Tensor global_avg_pool(const Tensor& x) {
    if (x.ndim() != 3) throw dim_error("global_avg_pool: input must be [BxCxL]");
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    Tensor out = Tensor::zeros({B, C});
    const double* px = x.data();
    double* po = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double* row = px + (b * C + c) * L;
            double acc = 0.0;
            for (std::size_t t = 0; t < L; ++t) acc += row[t];
            po[b * C + c] = acc / static_cast<double>(L);
        }
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        Tape::current().record([xi, oi, B, C, L] {
            const double* g = oi->grad_data();
            double* dx = xi->grad_data();
            const double inv_l = 1.0 / static_cast<double>(L);
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const double gv = g[b * C + c] * inv_l;
                    double* row = dx + (b * C + c) * L;
                    for (std::size_t t = 0; t < L; ++t) row[t] += gv;
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// linear layer: x[Bxin] * W[outxin]^T + b[out]
// ---------------------------------------------------------------------------

inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    if (x.ndim() != 2 || weight.ndim() != 2 || x.dim(1) != weight.dim(1)) {
        throw dim_error("linear: shapes " + shape_str(x.shape()) + " and " +
                        shape_str(weight.shape()));
    }
    Tensor y = matmul_nt(x, weight);
    if (!bias.defined()) return y;
    if (bias.ndim() != 1 || bias.dim(0) != weight.dim(0)) {
        throw dim_error("linear: bias shape " + shape_str(bias.shape()));
    }
    const std::size_t B = y.dim(0), O = y.dim(1);
    Tensor out = Tensor::zeros({B, O});
    const double* py = y.data();
    const double* pb = bias.data();
    double* po = out.data();
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < O; ++o) po[b * O + o] = py[b * O + o] + pb[o];
    if (grad_enabled() && (y.requires_grad() || bias.requires_grad())) {
        out.set_requires_grad(true);
        auto yi = y.impl(), bi = bias.impl(), oi = out.impl();
        Tape::current().record([yi, bi, oi, B, O] {
            const double* g = oi->grad_data();
            if (yi->requires_grad) {
                double* dy = yi->grad_data();
                for (std::size_t i = 0; i < B * O; ++i) dy[i] += g[i];
            }
            if (bi->requires_grad) {
                double* db = bi->grad_data();
                for (std::size_t b = 0; b < B; ++b)
                    for (std::size_t o = 0; o < O; ++o) db[o] += g[b * O + o];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// endpoint-aligned linear interpolation along time: [BxCxL] -> [BxCxT]
// ---------------------------------------------------------------------------

inline Tensor upsample_linear(const Tensor& x, std::size_t target_len) {
    if (x.ndim() != 3) throw dim_error("upsample_linear: input must be [BxCxL]");
    if (target_len < 1) throw dim_error("upsample_linear: target length must be >= 1");
    const std::size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    const std::size_t T = target_len;

    // Precompute source positions: first and last samples are preserved.
    std::vector<std::size_t> i0(T), i1(T);
    std::vector<double> w1(T);
    for (std::size_t t = 0; t < T; ++t) {
        double pos = 0.0;
        if (T > 1 && L > 1)
            pos = static_cast<double>(t) * static_cast<double>(L - 1) /
                  static_cast<double>(T - 1);
        const std::size_t lo = std::min(static_cast<std::size_t>(pos), L - 1);
        i0[t] = lo;
        i1[t] = std::min(lo + 1, L - 1);
        w1[t] = pos - static_cast<double>(lo);
    }

    Tensor out = Tensor::zeros({B, C, T});
    {
        const double* px = x.data();
        double* po = out.data();
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double* row = px + (b * C + c) * L;
                double* orow = po + (b * C + c) * T;
                for (std::size_t t = 0; t < T; ++t)
                    orow[t] = (1.0 - w1[t]) * row[i0[t]] + w1[t] * row[i1[t]];
            }
    }
    if (detail::track(x)) {
        out.set_requires_grad(true);
        auto xi = x.impl(), oi = out.impl();
        auto si0 = std::make_shared<std::vector<std::size_t>>(std::move(i0));
        auto si1 = std::make_shared<std::vector<std::size_t>>(std::move(i1));
        auto sw1 = std::make_shared<std::vector<double>>(std::move(w1));
        Tape::current().record([xi, oi, si0, si1, sw1, B, C, L, T] {
            const double* g = oi->grad_data();
            double* dx = xi->grad_data();
            for (std::size_t b = 0; b < B; ++b)
                for (std::size_t c = 0; c < C; ++c) {
                    const double* grow = g + (b * C + c) * T;
                    double* drow = dx + (b * C + c) * L;
                    for (std::size_t t = 0; t < T; ++t) {
                        drow[(*si0)[t]] += (1.0 - (*sw1)[t]) * grow[t];
                        drow[(*si1)[t]] += (*sw1)[t] * grow[t];
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

inline constexpr double kProbFloor = 1e-12;

// Mean over the batch of -sum(y * log(p)); p already softmaxed, floored at
// kProbFloor so log never sees zero.
inline Tensor cross_entropy(const Tensor& probs, const Tensor& onehot) {
    if (probs.shape() != onehot.shape() || probs.ndim() != 2) {
        throw dim_error("cross_entropy: shapes " + shape_str(probs.shape()) + " vs " +
                        shape_str(onehot.shape()));
    }
    const std::size_t B = probs.dim(0), K = probs.dim(1);
    double loss = 0.0;
    const double* pp = probs.data();
    const double* py = onehot.data();
    for (std::size_t i = 0; i < B * K; ++i) {
        if (py[i] != 0.0) loss -= py[i] * std::log(std::max(pp[i], kProbFloor));
    }
    loss /= static_cast<double>(B);
    Tensor out = Tensor::scalar(loss);
    if (detail::track(probs)) {
        out.set_requires_grad(true);
        auto pi = probs.impl(), yi = onehot.impl(), oi = out.impl();
        Tape::current().record([pi, yi, oi, B, K] {
            const double g = oi->grad_data()[0];
            double* dp = pi->grad_data();
            const double* pp = pi->values.data();
            const double* py = yi->values.data();
            const double inv_b = 1.0 / static_cast<double>(B);
            for (std::size_t i = 0; i < B * K; ++i) {
                if (py[i] == 0.0 || pp[i] < kProbFloor) continue;
                dp[i] -= g * inv_b * py[i] / pp[i];
            }
        });
    }
    return out;
}

// Mean of squared differences over all elements.
inline Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw dim_error("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
    }
    const std::size_t n = a.size();
    double loss = 0.0;
    const double* pa = a.data();
    const double* pb = b.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = pa[i] - pb[i];
        loss += d * d;
    }
    loss /= static_cast<double>(n);
    Tensor out = Tensor::scalar(loss);
    if (detail::track(a, b)) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        Tape::current().record([ai, bi, oi, n] {
            const double g = oi->grad_data()[0] * 2.0 / static_cast<double>(n);
            const double* pa = ai->values.data();
            const double* pb = bi->values.data();
            if (ai->requires_grad) {
                double* da = ai->grad_data();
                for (std::size_t i = 0; i < n; ++i) da[i] += g * (pa[i] - pb[i]);
            }
            if (bi->requires_grad) {
                double* db = bi->grad_data();
                for (std::size_t i = 0; i < n; ++i) db[i] -= g * (pa[i] - pb[i]);
            }
        });
    }
    return out;
}

}  // namespace c2sp
