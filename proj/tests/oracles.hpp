#pragma once

// Naive scalar-loop reference implementations used only by tests. These stay
// independent of the library's im2col/GEMM path on purpose: they are the
// second route every numerical op is checked against.

#include <cmath>
#include <type_traits>
#include <cstdint>
#include <vector>

#include "mlrn/rng.hpp"
#include "mlrn/tensor.hpp"

namespace oracle {

template <typename T>
mlrn::Tensor<T> conv2d(const mlrn::Tensor<T>& x, const mlrn::Tensor<T>& w,
                       std::type_identity_t<const mlrn::Tensor<T>*> bias, int stride, int pad) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int K = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    mlrn::Tensor<T> y({N, K, Ho, Wo});
    auto xi = [&](int n, int c, int i, int j) -> T {
        if (i < 0 || i >= H || j < 0 || j >= W) return T(0);
        return x.at(((static_cast<std::int64_t>(n) * C + c) * H + i) * W + j);
    };
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k)
            for (int oh = 0; oh < Ho; ++oh)
                for (int ow = 0; ow < Wo; ++ow) {
                    T acc = bias ? bias->at(k) : T(0);
                    for (int c = 0; c < C; ++c)
                        for (int ki = 0; ki < kh; ++ki)
                            for (int kj = 0; kj < kw; ++kj)
                                acc += w.at(((static_cast<std::int64_t>(k) * C + c) * kh + ki) * kw + kj) *
                                       xi(n, c, oh * stride - pad + ki, ow * stride - pad + kj);
                    y.at(((static_cast<std::int64_t>(n) * K + k) * Ho + oh) * Wo + ow) = acc;
                }
    return y;
}

template <typename T>
mlrn::Tensor<T> batchnorm_train(const mlrn::Tensor<T>& x, const std::vector<T>& gamma,
                                const std::vector<T>& beta, T eps) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t m = static_cast<std::int64_t>(N) * H * W;
    mlrn::Tensor<T> y(x.shape());
    for (int c = 0; c < C; ++c) {
        double sum = 0;
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < H * W; ++i)
                sum += x.at((static_cast<std::int64_t>(n) * C + c) * H * W + i);
        const double mu = sum / static_cast<double>(m);
        double sq = 0;
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < H * W; ++i) {
                const double d = x.at((static_cast<std::int64_t>(n) * C + c) * H * W + i) - mu;
                sq += d * d;
            }
        const double var = sq / static_cast<double>(m);
        for (int n = 0; n < N; ++n)
            for (int i = 0; i < H * W; ++i) {
                const std::int64_t idx = (static_cast<std::int64_t>(n) * C + c) * H * W + i;
                y.at(idx) = static_cast<T>(gamma[c] * (x.at(idx) - mu) / std::sqrt(var + eps) + beta[c]);
            }
    }
    return y;
}

template <typename T>
mlrn::Tensor<T> batchnorm_eval(const mlrn::Tensor<T>& x, const std::vector<T>& gamma,
                               const std::vector<T>& beta, const std::vector<T>& mean,
                               const std::vector<T>& var, T eps) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    mlrn::Tensor<T> y(x.shape());
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < H * W; ++i) {
                const std::int64_t idx = (static_cast<std::int64_t>(n) * C + c) * H * W + i;
                y.at(idx) = static_cast<T>(gamma[c] * (x.at(idx) - mean[c]) / std::sqrt(var[c] + eps) +
                                           beta[c]);
            }
    return y;
}

template <typename T>
mlrn::Tensor<T> linear(const mlrn::Tensor<T>& x, const mlrn::Tensor<T>& w,
                       const mlrn::Tensor<T>& b) {
    const int N = x.dim(0), D = x.dim(1), M = w.dim(0);
    mlrn::Tensor<T> y({N, M});
    for (int n = 0; n < N; ++n)
        for (int m = 0; m < M; ++m) {
            T acc = b.at(m);
            for (int d = 0; d < D; ++d)
                acc += x.at(static_cast<std::int64_t>(n) * D + d) * w.at(static_cast<std::int64_t>(m) * D + d);
            y.at(static_cast<std::int64_t>(n) * M + m) = acc;
        }
    return y;
}

template <typename T>
mlrn::Tensor<T> channel_mean(const mlrn::Tensor<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    mlrn::Tensor<T> y({N, 1, H, W});
    for (int n = 0; n < N; ++n)
        for (int i = 0; i < H * W; ++i) {
            T acc = 0;
            for (int c = 0; c < C; ++c)
                acc += x.at((static_cast<std::int64_t>(n) * C + c) * H * W + i);
            y.at(static_cast<std::int64_t>(n) * H * W + i) = acc / static_cast<T>(C);
        }
    return y;
}

template <typename T>
mlrn::Tensor<T> global_avg_pool(const mlrn::Tensor<T>& x) {
    const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    mlrn::Tensor<T> y({N, C});
    for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
            T acc = 0;
            for (int i = 0; i < H * W; ++i)
                acc += x.at((static_cast<std::int64_t>(n) * C + c) * H * W + i);
            y.at(static_cast<std::int64_t>(n) * C + c) = acc / static_cast<T>(H * W);
        }
    return y;
}

// Long-double accumulation; the high-precision route for the loss check.
template <typename T>
double softmax_cross_entropy(const mlrn::Tensor<T>& logits, const std::vector<int>& labels) {
    const int N = logits.dim(0), M = logits.dim(1);
    long double total = 0;
    for (int n = 0; n < N; ++n) {
        long double zmax = logits.at(static_cast<std::int64_t>(n) * M);
        for (int m = 1; m < M; ++m)
            zmax = std::max<long double>(zmax, logits.at(static_cast<std::int64_t>(n) * M + m));
        long double sum = 0;
        for (int m = 0; m < M; ++m)
            sum += std::exp(static_cast<long double>(logits.at(static_cast<std::int64_t>(n) * M + m)) - zmax);
        total += std::log(sum) -
                 (static_cast<long double>(logits.at(static_cast<std::int64_t>(n) * M + labels[n])) - zmax);
    }
    return static_cast<double>(total / N);
}

template <typename T>
void sgd_reference(std::vector<T>& param, std::vector<T>& velocity, const std::vector<T>& grad,
                   T lr, T momentum, T weight_decay) {
    for (std::size_t i = 0; i < param.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i] + weight_decay * param[i];
        param[i] -= lr * velocity[i];
    }
}

// ---------------------------------------------------------------------------

template <typename T>
mlrn::Tensor<T> random_tensor(mlrn::Shape shape, mlrn::Rng& rng, double lo = -1.0, double hi = 1.0) {
    mlrn::Tensor<T> t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i)
        t.at(i) = static_cast<T>(lo + (hi - lo) * rng.uniform());
    return t;
}

template <typename T>
double max_rel_err(const mlrn::Tensor<T>& a, const mlrn::Tensor<T>& b) {
    double worst = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
        const double x = a.at(i), y = b.at(i);
        const double denom = std::max({std::abs(x), std::abs(y), 1e-12});
        worst = std::max(worst, std::abs(x - y) / denom);
    }
    return worst;
}

}  // namespace oracle
