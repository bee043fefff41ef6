#pragma once

#include <algorithm>
#include <type_traits>
#include <cmath>
#include <cstring>
#include <memory>
#include <vector>

#include "mlrn/error.hpp"
#include "mlrn/gemm.hpp"
#include "mlrn/parallel.hpp"
#include "mlrn/tape.hpp"
#include "mlrn/tensor.hpp"

namespace mlrn {

namespace detail {

// col[(c*kh+ki)*kw+kj][oh*Wo+ow], zero-padded patch matrix for one sample.
template <typename T>
void im2col(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, T* col) {
    int r = 0;
    for (int c = 0; c < C; ++c) {
        const T* src = x + static_cast<std::int64_t>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++r) {
                T* dst = col + static_cast<std::int64_t>(r) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    T* d = dst + static_cast<std::int64_t>(oh) * Wo;
                    if (ih < 0 || ih >= H) {
                        std::fill(d, d + Wo, T(0));
                        continue;
                    }
                    const T* s = src + static_cast<std::int64_t>(ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        d[ow] = (iw >= 0 && iw < W) ? s[iw] : T(0);
                    }
                }
            }
        }
    }
}

// Transposed layout, rows[oh*Wo+ow][(c*kh+ki)*kw+kj]; used for weight grads.
template <typename T>
void im2row(const T* x, int C, int H, int W, int kh, int kw, int stride, int pad,
            int Ho, int Wo, T* rows) {
    const int ckk = C * kh * kw;
    for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow) {
            T* row = rows + static_cast<std::int64_t>(oh * Wo + ow) * ckk;
            int r = 0;
            for (int c = 0; c < C; ++c) {
                const T* src = x + static_cast<std::int64_t>(c) * H * W;
                for (int ki = 0; ki < kh; ++ki) {
                    const int ih = oh * stride - pad + ki;
                    for (int kj = 0; kj < kw; ++kj, ++r) {
                        const int iw = ow * stride - pad + kj;
                        row[r] = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                     ? src[static_cast<std::int64_t>(ih) * W + iw]
                                     : T(0);
                    }
                }
            }
        }
    }
}

// Scatters patch-matrix gradients back into the (padded) input, accumulating.
template <typename T>
void col2im_add(const T* col, int C, int H, int W, int kh, int kw, int stride, int pad,
                int Ho, int Wo, T* dx) {
    int r = 0;
    for (int c = 0; c < C; ++c) {
        T* dst = dx + static_cast<std::int64_t>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++r) {
                const T* src = col + static_cast<std::int64_t>(r) * Ho * Wo;
                for (int oh = 0; oh < Ho; ++oh) {
                    const int ih = oh * stride - pad + ki;
                    if (ih < 0 || ih >= H) continue;
                    const T* s = src + static_cast<std::int64_t>(oh) * Wo;
                    T* d = dst + static_cast<std::int64_t>(ih) * W;
                    for (int ow = 0; ow < Wo; ++ow) {
                        const int iw = ow * stride - pad + kj;
                        if (iw >= 0 && iw < W) d[iw] += s[ow];
                    }
                }
            }
        }
    }
}

// Contiguous [lo, hi) split of n items into the pool's chunk count, for
// reductions that keep one partial accumulator per chunk.
inline std::vector<std::pair<int, int>> chunk_ranges(int n, int chunks) {
    std::vector<std::pair<int, int>> r;
    const int per = n / chunks, rem = n % chunks;
    int lo = 0;
    for (int c = 0; c < chunks; ++c) {
        const int hi = lo + per + (c < rem ? 1 : 0);
        r.emplace_back(lo, hi);
        lo = hi;
    }
    return r;
}

}  // namespace detail

// --------------------------------------------------------------------------
// conv2d: cross-correlation, zero padding, NCHW. H' = (H+2p-kh)/s + 1.
// --------------------------------------------------------------------------
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w,
                 std::type_identity_t<const Tensor<T>*> bias, int stride, int pad,
                 Tape<T>* tape = nullptr) {
    if (x.rank() != 4) throw ShapeError("conv2d: input must be 4-D, got " + shape_str(x.shape()));
    if (w.rank() != 4) throw ShapeError("conv2d: weight must be 4-D, got " + shape_str(w.shape()));
    if (stride <= 0) throw ShapeError("conv2d: non-positive stride " + std::to_string(stride));
    if (pad < 0) throw ShapeError("conv2d: negative padding " + std::to_string(pad));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != C)
        throw ShapeError("conv2d: input channels " + std::to_string(C) +
                         " do not match weight channels " + std::to_string(w.dim(1)));
    if (kh > H + 2 * pad || kw > W + 2 * pad)
        throw ShapeError("conv2d: kernel larger than padded input");
    if (bias && (bias->rank() != 1 || bias->dim(0) != K))
        throw ShapeError("conv2d: bias must have shape [" + std::to_string(K) + "]");

    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    const int ckk = C * kh * kw;
    const std::int64_t in_plane = static_cast<std::int64_t>(C) * H * W;
    const std::int64_t out_plane = static_cast<std::int64_t>(K) * Ho * Wo;

    Tensor<T> y({N, K, Ho, Wo});
    {
        const T* xp = x.data();
        const T* wp = w.data();
        const T* bp = bias ? bias->data() : nullptr;
        T* yp = y.data();
        const std::int64_t conv_work = static_cast<std::int64_t>(N) * out_plane * ckk;
        parallel_for(0, N, conv_work, [&](std::int64_t lo, std::int64_t hi) {
            std::vector<T> col(static_cast<std::size_t>(ckk) * Ho * Wo);
            for (std::int64_t n = lo; n < hi; ++n) {
                detail::im2col(xp + n * in_plane, C, H, W, kh, kw, stride, pad, Ho, Wo, col.data());
                T* yn = yp + n * out_plane;
                gemm_nn(wp, col.data(), yn, K, ckk, Ho * Wo);
                if (bp) {
                    for (int k = 0; k < K; ++k) {
                        T* row = yn + static_cast<std::int64_t>(k) * Ho * Wo;
                        for (int i = 0; i < Ho * Wo; ++i) row[i] += bp[k];
                    }
                }
            }
        });
    }

    const bool track = tape && (x.requires_grad() || w.requires_grad() ||
                                (bias && bias->requires_grad()));
    if (track) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, wc = w, yc = y;
        Tensor<T> bc = bias ? *bias : Tensor<T>();
        tape->record([xc, wc, bc, yc, stride, pad, N, C, H, W, K, kh, kw, Ho, Wo, ckk,
                      in_plane, out_plane]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            if (xc.requires_grad()) {
                T* dx = xc.ensure_grad();
                const T* wp = wc.data();
                const std::int64_t work = static_cast<std::int64_t>(N) * out_plane * ckk;
                parallel_for(0, N, work, [&](std::int64_t lo, std::int64_t hi) {
                    std::vector<T> dcol(static_cast<std::size_t>(ckk) * Ho * Wo);
                    for (std::int64_t n = lo; n < hi; ++n) {
                        std::fill(dcol.begin(), dcol.end(), T(0));
                        gemm_tn(wp, dy + n * out_plane, dcol.data(), ckk, K, Ho * Wo);
                        detail::col2im_add(dcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                           dx + n * in_plane);
                    }
                });
            }
            const bool want_dw = wc.requires_grad();
            const bool want_db = bc.defined() && bc.requires_grad();
            if (want_dw || want_db) {
                const T* xp = xc.data();
                const std::int64_t dw_work = static_cast<std::int64_t>(N) * out_plane * ckk;
                const int chunks =
                    dw_work < kParallelWorkThreshold ? 1 : std::min<int>(ThreadPool::instance().size(), N);
                auto ranges = detail::chunk_ranges(N, chunks);
                std::vector<std::vector<T>> dw_part(static_cast<std::size_t>(chunks));
                std::vector<std::vector<T>> db_part(static_cast<std::size_t>(chunks));
                parallel_for(0, chunks, [&](std::int64_t clo, std::int64_t chi) {
                    for (std::int64_t c = clo; c < chi; ++c) {
                        auto& dw = dw_part[static_cast<std::size_t>(c)];
                        auto& db = db_part[static_cast<std::size_t>(c)];
                        if (want_dw) dw.assign(static_cast<std::size_t>(K) * ckk, T(0));
                        if (want_db) db.assign(static_cast<std::size_t>(K), T(0));
                        std::vector<T> rows(static_cast<std::size_t>(Ho) * Wo * ckk);
                        for (int n = ranges[static_cast<std::size_t>(c)].first;
                             n < ranges[static_cast<std::size_t>(c)].second; ++n) {
                            const T* dyn = dy + n * out_plane;
                            if (want_dw) {
                                detail::im2row(xp + n * in_plane, C, H, W, kh, kw, stride, pad,
                                               Ho, Wo, rows.data());
                                gemm_nn(dyn, rows.data(), dw.data(), K, Ho * Wo, ckk);
                            }
                            if (want_db) {
                                for (int k = 0; k < K; ++k) {
                                    T s = 0;
                                    const T* row = dyn + static_cast<std::int64_t>(k) * Ho * Wo;
                                    for (int i = 0; i < Ho * Wo; ++i) s += row[i];
                                    db[static_cast<std::size_t>(k)] += s;
                                }
                            }
                        }
                    }
                });
                // merge partials in chunk order
                if (want_dw) {
                    T* dw = wc.ensure_grad();
                    for (const auto& part : dw_part)
                        for (std::size_t i = 0; i < part.size(); ++i) dw[i] += part[i];
                }
                if (want_db) {
                    T* db = bc.ensure_grad();
                    for (const auto& part : db_part)
                        for (std::size_t i = 0; i < part.size(); ++i) db[i] += part[i];
                }
            }
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// Batch normalization over N,H,W per channel.
// --------------------------------------------------------------------------
enum class BnMode { train, eval };

template <typename T>
struct BatchNorm {
    Tensor<T> gamma, beta;
    std::vector<T> running_mean, running_var;
    T eps = T(1e-5);
    T momentum = T(0.1);  // running = (1-m)*running + m*batch
    BnMode mode = BnMode::train;

    explicit BatchNorm(int channels)
        : gamma(Tensor<T>::full({channels}, T(1))), beta(Tensor<T>({channels})) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
        running_mean.assign(static_cast<std::size_t>(channels), T(0));
        running_var.assign(static_cast<std::size_t>(channels), T(1));
    }

    int channels() const { return gamma.dim(0); }
};

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, BatchNorm<T>& bn, Tape<T>* tape = nullptr) {
    if (x.rank() != 4) throw ShapeError("batchnorm2d: input must be 4-D, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C != bn.channels())
        throw ShapeError("batchnorm2d: input channels " + std::to_string(C) +
                         " do not match state channels " + std::to_string(bn.channels()));
    const std::int64_t M = static_cast<std::int64_t>(N) * H * W;
    if (bn.mode == BnMode::train && M < 2)
        throw ShapeError("batchnorm2d: train mode needs at least 2 values per channel");

    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    const std::int64_t sample = static_cast<std::int64_t>(C) * plane;
    Tensor<T> y(x.shape());

    auto mean = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));
    auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(C));

    const T* xp = x.data();
    T* yp = y.data();
    const T* g = bn.gamma.data();
    const T* b = bn.beta.data();
    const bool train = bn.mode == BnMode::train;

    if (train) {
        T* rm = bn.running_mean.data();
        T* rv = bn.running_var.data();
        const T mom = bn.momentum;
        parallel_for(0, C, M * C, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t c = lo; c < hi; ++c) {
                // single pass; double accumulators keep the float path accurate
                double sum = 0, sumsq = 0;
                for (int n = 0; n < N; ++n) {
                    const T* src = xp + n * sample + c * plane;
                    for (std::int64_t i = 0; i < plane; ++i) {
                        const double v = src[i];
                        sum += v;
                        sumsq += v * v;
                    }
                }
                const T mu = static_cast<T>(sum / static_cast<double>(M));
                const T var = static_cast<T>(
                    std::max(0.0, sumsq / static_cast<double>(M) -
                                      (sum / static_cast<double>(M)) * (sum / static_cast<double>(M))));  // biased
                const T istd = T(1) / std::sqrt(var + bn.eps);
                (*mean)[static_cast<std::size_t>(c)] = mu;
                (*inv_std)[static_cast<std::size_t>(c)] = istd;
                const T gc = g[c] * istd, bc = b[c];
                for (int n = 0; n < N; ++n) {
                    const T* src = xp + n * sample + c * plane;
                    T* dst = yp + n * sample + c * plane;
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) * gc + bc;
                }
                rm[c] = (T(1) - mom) * rm[c] + mom * mu;
                rv[c] = (T(1) - mom) * rv[c] + mom * var;
            }
        });
    } else {
        const T* rm = bn.running_mean.data();
        const T* rv = bn.running_var.data();
        parallel_for(0, C, M * C, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t c = lo; c < hi; ++c) {
                const T mu = rm[c];
                const T istd = T(1) / std::sqrt(rv[c] + bn.eps);
                (*mean)[static_cast<std::size_t>(c)] = mu;
                (*inv_std)[static_cast<std::size_t>(c)] = istd;
                const T gc = g[c] * istd, bc = b[c];
                for (int n = 0; n < N; ++n) {
                    const T* src = xp + n * sample + c * plane;
                    T* dst = yp + n * sample + c * plane;
                    for (std::int64_t i = 0; i < plane; ++i) dst[i] = (src[i] - mu) * gc + bc;
                }
            }
        });
    }

    const bool track = tape && (x.requires_grad() || bn.gamma.requires_grad() ||
                                bn.beta.requires_grad());
    if (track) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y, gamma = bn.gamma, beta = bn.beta;
        tape->record([xc, yc, gamma, beta, mean, inv_std, train, N, C, plane, sample, M]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            const T* xp = xc.data();
            const T* g = gamma.data();
            T* dg = gamma.requires_grad() ? gamma.ensure_grad() : nullptr;
            T* db = beta.requires_grad() ? beta.ensure_grad() : nullptr;
            T* dx = xc.requires_grad() ? xc.ensure_grad() : nullptr;
            parallel_for(0, C, M * C, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t c = lo; c < hi; ++c) {
                    const T mu = (*mean)[static_cast<std::size_t>(c)];
                    const T istd = (*inv_std)[static_cast<std::size_t>(c)];
                    T sum_dy = 0, sum_dy_xhat = 0;
                    for (int n = 0; n < N; ++n) {
                        const T* dyr = dy + n * sample + c * plane;
                        const T* xr = xp + n * sample + c * plane;
                        for (std::int64_t i = 0; i < plane; ++i) {
                            sum_dy += dyr[i];
                            sum_dy_xhat += dyr[i] * (xr[i] - mu) * istd;
                        }
                    }
                    if (db) db[c] += sum_dy;
                    if (dg) dg[c] += sum_dy_xhat;
                    if (!dx) continue;
                    const T gc = g[c] * istd;
                    if (train) {
                        const T inv_m = T(1) / static_cast<T>(M);
                        for (int n = 0; n < N; ++n) {
                            const T* dyr = dy + n * sample + c * plane;
                            const T* xr = xp + n * sample + c * plane;
                            T* dxr = dx + n * sample + c * plane;
                            for (std::int64_t i = 0; i < plane; ++i) {
                                const T xhat = (xr[i] - mu) * istd;
                                dxr[i] += gc * (dyr[i] - inv_m * sum_dy - xhat * inv_m * sum_dy_xhat);
                            }
                        }
                    } else {
                        for (int n = 0; n < N; ++n) {
                            const T* dyr = dy + n * sample + c * plane;
                            T* dxr = dx + n * sample + c * plane;
                            for (std::int64_t i = 0; i < plane; ++i) dxr[i] += gc * dyr[i];
                        }
                    }
                }
            });
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// Elementwise ops.
// --------------------------------------------------------------------------
template <typename T>
Tensor<T> relu(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    Tensor<T> y(x.shape());
    const T* xp = x.data();
    T* yp = y.data();
    const std::int64_t n = x.size();
    parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t i = lo; i < hi; ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
    });
    if (tape && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        tape->record([xc, yc, n]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            const T* xp = xc.data();
            T* dx = xc.ensure_grad();
            // subgradient at 0 is 0
            parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t i = lo; i < hi; ++i)
                    if (xp[i] > T(0)) dx[i] += dy[i];
            });
        });
    }
    return y;
}

enum class CombineMode { add, max };

inline const char* combine_mode_name(CombineMode m) {
    return m == CombineMode::add ? "add" : "max";
}

template <typename T>
Tensor<T> combine(const Tensor<T>& a, const Tensor<T>& b, CombineMode mode, Tape<T>* tape = nullptr) {
    if (a.shape() != b.shape())
        throw ShapeError("combine: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    Tensor<T> y(a.shape());
    const T* ap = a.data();
    const T* bp = b.data();
    T* yp = y.data();
    const std::int64_t n = a.size();
    if (mode == CombineMode::add) {
        parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) yp[i] = ap[i] + bp[i];
        });
    } else {
        parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t i = lo; i < hi; ++i) yp[i] = ap[i] >= bp[i] ? ap[i] : bp[i];
        });
    }
    if (tape && (a.requires_grad() || b.requires_grad())) {
        y.set_requires_grad(true);
        Tensor<T> ac = a, bc = b, yc = y;
        tape->record([ac, bc, yc, mode, n]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            if (mode == CombineMode::add) {
                if (ac.requires_grad()) {
                    T* da = ac.ensure_grad();
                    parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
                        for (std::int64_t i = lo; i < hi; ++i) da[i] += dy[i];
                    });
                }
                if (bc.requires_grad()) {
                    T* db = bc.ensure_grad();
                    parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
                        for (std::int64_t i = lo; i < hi; ++i) db[i] += dy[i];
                    });
                }
            } else {
                // ties route the gradient to the first input
                const T* ap = ac.data();
                const T* bp = bc.data();
                if (ac.requires_grad()) {
                    T* da = ac.ensure_grad();
                    parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
                        for (std::int64_t i = lo; i < hi; ++i)
                            if (ap[i] >= bp[i]) da[i] += dy[i];
                    });
                }
                if (bc.requires_grad()) {
                    T* db = bc.ensure_grad();
                    parallel_for(0, n, n, [&](std::int64_t lo, std::int64_t hi) {
                        for (std::int64_t i = lo; i < hi; ++i)
                            if (ap[i] < bp[i]) db[i] += dy[i];
                    });
                }
            }
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// Pooling. channel_mean averages along the channel axis (one spatial map per
// sample); global_avg_pool / per_channel_gap average spatially per channel.
// --------------------------------------------------------------------------
template <typename T>
Tensor<T> channel_mean(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    if (x.rank() != 4)
        throw ShapeError("channel_mean: input must be 4-D, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor<T> y({N, 1, H, W});
    const T* xp = x.data();
    T* yp = y.data();
    parallel_for(0, N, static_cast<std::int64_t>(N) * C * plane, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t n = lo; n < hi; ++n) {
            const T* src = xp + n * C * plane;
            T* dst = yp + n * plane;
            for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i];
            for (int c = 1; c < C; ++c) {
                const T* s = src + c * plane;
                for (std::int64_t i = 0; i < plane; ++i) dst[i] += s[i];
            }
            const T inv = T(1) / static_cast<T>(C);
            for (std::int64_t i = 0; i < plane; ++i) dst[i] *= inv;
        }
    });
    if (tape && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        tape->record([xc, yc, N, C, plane]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            T* dx = xc.ensure_grad();
            const T inv = T(1) / static_cast<T>(C);
            parallel_for(0, N, static_cast<std::int64_t>(N) * C * plane,
                         [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t n = lo; n < hi; ++n) {
                    const T* dyr = dy + n * plane;
                    for (int c = 0; c < C; ++c) {
                        T* dxr = dx + (n * C + c) * plane;
                        for (std::int64_t i = 0; i < plane; ++i) dxr[i] += dyr[i] * inv;
                    }
                }
            });
        });
    }
    return y;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    if (x.rank() != 4)
        throw ShapeError("global_avg_pool: input must be 4-D, got " + shape_str(x.shape()));
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    Tensor<T> y({N, C});
    const T* xp = x.data();
    T* yp = y.data();
    parallel_for(0, static_cast<std::int64_t>(N) * C, static_cast<std::int64_t>(N) * C * plane,
                 [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t nc = lo; nc < hi; ++nc) {
            const T* src = xp + nc * plane;
            T s = 0;
            for (std::int64_t i = 0; i < plane; ++i) s += src[i];
            yp[nc] = s / static_cast<T>(plane);
        }
    });
    if (tape && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        tape->record([xc, yc, N, C, plane]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            T* dx = xc.ensure_grad();
            const T inv = T(1) / static_cast<T>(plane);
            parallel_for(0, static_cast<std::int64_t>(N) * C, static_cast<std::int64_t>(N) * C * plane,
                         [&](std::int64_t lo, std::int64_t hi) {
                for (std::int64_t nc = lo; nc < hi; ++nc) {
                    T* dxr = dx + nc * plane;
                    const T g = dy[nc] * inv;
                    for (std::int64_t i = 0; i < plane; ++i) dxr[i] += g;
                }
            });
        });
    }
    return y;
}

// Alias of global_avg_pool kept so transform pool modes stay explicit.
template <typename T>
Tensor<T> per_channel_gap(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    return global_avg_pool(x, tape);
}

// --------------------------------------------------------------------------
// Fully connected: y = x W^T + b with weight stored [M, D].
// --------------------------------------------------------------------------
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, Tape<T>* tape = nullptr) {
    if (x.rank() != 2) throw ShapeError("linear: input must be 2-D, got " + shape_str(x.shape()));
    if (w.rank() != 2) throw ShapeError("linear: weight must be 2-D, got " + shape_str(w.shape()));
    const int N = x.dim(0), D = x.dim(1), M = w.dim(0);
    if (w.dim(1) != D)
        throw ShapeError("linear: inner dimensions disagree, input " + shape_str(x.shape()) +
                         " vs weight " + shape_str(w.shape()));
    if (b.rank() != 1 || b.dim(0) != M)
        throw ShapeError("linear: bias must have shape [" + std::to_string(M) + "]");

    Tensor<T> y({N, M});
    const T* xp = x.data();
    const T* wp = w.data();
    const T* bp = b.data();
    T* yp = y.data();
    const std::int64_t lin_work = static_cast<std::int64_t>(N) * M * D;
    parallel_for(0, N, lin_work, [&](std::int64_t lo, std::int64_t hi) {
        if (lo < hi) gemm_nt(xp + lo * D, wp, yp + lo * M, static_cast<int>(hi - lo), D, M);
        for (std::int64_t n = lo; n < hi; ++n) {
            T* row = yp + n * M;
            for (int m = 0; m < M; ++m) row[m] += bp[m];
        }
    });

    if (tape && (x.requires_grad() || w.requires_grad() || b.requires_grad())) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, wc = w, bc = b, yc = y;
        tape->record([xc, wc, bc, yc, N, D, M]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            if (xc.requires_grad()) {
                T* dx = xc.ensure_grad();
                const T* wp = wc.data();
                parallel_for(0, N, static_cast<std::int64_t>(N) * M * D,
                             [&](std::int64_t lo, std::int64_t hi) {
                    if (lo < hi)
                        gemm_nn(dy + lo * M, wp, dx + lo * D, static_cast<int>(hi - lo), M, D);
                });
            }
            if (wc.requires_grad()) {
                T* dw = wc.ensure_grad();
                const T* xp = xc.data();
                parallel_for(0, M, static_cast<std::int64_t>(N) * M * D,
                             [&](std::int64_t lo, std::int64_t hi) {
                    for (std::int64_t n = 0; n < N; ++n) {
                        const T* xr = xp + n * D;
                        const T* dyr = dy + n * M;
                        for (std::int64_t m = lo; m < hi; ++m) {
                            const T g = dyr[m];
                            T* dwr = dw + m * D;
                            for (int d = 0; d < D; ++d) dwr[d] += g * xr[d];
                        }
                    }
                });
            }
            if (bc.requires_grad()) {
                T* db = bc.ensure_grad();
                for (int n = 0; n < N; ++n) {
                    const T* dyr = dy + static_cast<std::int64_t>(n) * M;
                    for (int m = 0; m < M; ++m) db[m] += dyr[m];
                }
            }
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// Shape plumbing.
// --------------------------------------------------------------------------

// [N, ...] -> [N, prod(...)]; shares storage, so gradients pass through.
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
    if (x.rank() < 2) throw ShapeError("flatten: input must have rank >= 2");
    const int N = x.dim(0);
    return x.reshape({N, static_cast<int>(x.size() / N)});
}

// Concatenates rank-2 tensors along the feature axis.
template <typename T>
Tensor<T> concat_features(const std::vector<Tensor<T>>& xs, Tape<T>* tape = nullptr) {
    if (xs.empty()) throw ShapeError("concat: needs at least one input");
    const int N = xs[0].dim(0);
    int total = 0;
    for (const auto& x : xs) {
        if (x.rank() != 2)
            throw ShapeError("concat: inputs must be 2-D, got " + shape_str(x.shape()));
        if (x.dim(0) != N) throw ShapeError("concat: batch dimensions disagree");
        total += x.dim(1);
    }
    Tensor<T> y({N, total});
    T* yp = y.data();
    int offset = 0;
    for (const auto& x : xs) {
        const int d = x.dim(1);
        const T* xp = x.data();
        parallel_for(0, N, static_cast<std::int64_t>(N) * d, [&](std::int64_t lo, std::int64_t hi) {
            for (std::int64_t n = lo; n < hi; ++n)
                std::memcpy(yp + n * total + offset, xp + n * d, sizeof(T) * static_cast<std::size_t>(d));
        });
        offset += d;
    }
    bool track = false;
    for (const auto& x : xs) track = track || x.requires_grad();
    if (tape && track) {
        y.set_requires_grad(true);
        std::vector<Tensor<T>> inputs = xs;
        Tensor<T> yc = y;
        tape->record([inputs, yc, N, total]() mutable {
            if (!yc.has_grad()) return;
            const T* dy = yc.grad();
            int offset = 0;
            for (auto& x : inputs) {
                const int d = x.dim(1);
                if (x.requires_grad()) {
                    T* dx = x.ensure_grad();
                    for (int n = 0; n < N; ++n) {
                        const T* src = dy + static_cast<std::int64_t>(n) * total + offset;
                        T* dst = dx + static_cast<std::int64_t>(n) * d;
                        for (int i = 0; i < d; ++i) dst[i] += src[i];
                    }
                }
                offset += d;
            }
        });
    }
    return y;
}

// --------------------------------------------------------------------------
// Losses and reductions.
// --------------------------------------------------------------------------

// Mean over the batch of -log softmax(logits)[label], max-subtracted for
// stability. Gradient is (softmax - onehot) / N.
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels,
                                Tape<T>* tape = nullptr) {
    if (logits.rank() != 2)
        throw ShapeError("softmax_cross_entropy: logits must be 2-D, got " + shape_str(logits.shape()));
    const int N = logits.dim(0), M = logits.dim(1);
    if (static_cast<int>(labels.size()) != N)
        throw ShapeError("softmax_cross_entropy: got " + std::to_string(labels.size()) +
                         " labels for batch of " + std::to_string(N));
    for (int n = 0; n < N; ++n)
        if (labels[n] < 0 || labels[n] >= M)
            throw Error("softmax_cross_entropy: label " + std::to_string(labels[n]) +
                        " out of range [0," + std::to_string(M) + ")");

    auto probs = std::make_shared<std::vector<T>>(static_cast<std::size_t>(N) * M);
    const T* zp = logits.data();
    T loss_sum = 0;
    for (int n = 0; n < N; ++n) {
        const T* z = zp + static_cast<std::int64_t>(n) * M;
        T* p = probs->data() + static_cast<std::int64_t>(n) * M;
        T zmax = z[0];
        for (int m = 1; m < M; ++m) zmax = std::max(zmax, z[m]);
        T sum = 0;
        for (int m = 0; m < M; ++m) {
            p[m] = std::exp(z[m] - zmax);
            sum += p[m];
        }
        const T inv = T(1) / sum;
        for (int m = 0; m < M; ++m) p[m] *= inv;
        loss_sum += std::log(sum) - (z[labels[n]] - zmax);
    }
    Tensor<T> loss = Tensor<T>::scalar(loss_sum / static_cast<T>(N));

    if (tape && logits.requires_grad()) {
        loss.set_requires_grad(true);
        Tensor<T> zc = logits, lc = loss;
        std::vector<int> lab = labels;
        tape->record([zc, lc, probs, lab, N, M]() mutable {
            if (!lc.has_grad()) return;
            const T dl = lc.grad()[0];
            T* dz = zc.ensure_grad();
            const T scale = dl / static_cast<T>(N);
            for (int n = 0; n < N; ++n) {
                const T* p = probs->data() + static_cast<std::int64_t>(n) * M;
                T* g = dz + static_cast<std::int64_t>(n) * M;
                for (int m = 0; m < M; ++m) g[m] += scale * p[m];
                g[lab[static_cast<std::size_t>(n)]] -= scale;
            }
        });
    }
    return loss;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x, Tape<T>* tape = nullptr) {
    const T* xp = x.data();
    T s = 0;
    for (std::int64_t i = 0; i < x.size(); ++i) s += xp[i];
    Tensor<T> y = Tensor<T>::scalar(s);
    if (tape && x.requires_grad()) {
        y.set_requires_grad(true);
        Tensor<T> xc = x, yc = y;
        tape->record([xc, yc]() mutable {
            if (!yc.has_grad()) return;
            const T g = yc.grad()[0];
            T* dx = xc.ensure_grad();
            for (std::int64_t i = 0; i < xc.size(); ++i) dx[i] += g;
        });
    }
    return y;
}

}  // namespace mlrn
