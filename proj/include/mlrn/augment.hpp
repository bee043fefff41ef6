#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mlrn/cifar.hpp"
#include "mlrn/error.hpp"
#include "mlrn/rng.hpp"
#include "mlrn/tensor.hpp"

namespace mlrn {

// Zero-filled shift then optional left-right flip:
//   out[c,y,x] = in[c, y+dy, x+dx] where in bounds, else 0,
// with the flip reversing x after the shift. Equivalent to pad-4 + crop.
inline Image augment_shift_flip(const Image& img, int dx, int dy, bool flip) {
    if (dx < -4 || dx > 4 || dy < -4 || dy > 4)
        throw Error("augment_shift_flip: shift magnitude must be <= 4, got dx=" +
                    std::to_string(dx) + " dy=" + std::to_string(dy));
    const int s = Image::kSide;
    Image out;
    out.label = img.label;
    out.coarse_label = img.coarse_label;
    out.pixels.assign(Image::kPixels, 0.0f);
    for (int c = 0; c < Image::kChannels; ++c) {
        const float* src = img.pixels.data() + c * s * s;
        float* dst = out.pixels.data() + c * s * s;
        for (int y = 0; y < s; ++y) {
            const int sy = y + dy;
            if (sy < 0 || sy >= s) continue;
            for (int x = 0; x < s; ++x) {
                const int sx = x + dx;
                if (sx < 0 || sx >= s) continue;
                dst[y * s + (flip ? s - 1 - x : x)] = src[sy * s + sx];
            }
        }
    }
    return out;
}

// Per-channel (x - mean) / std. Applied after augmentation, so shifted-in
// zeros become -mean/std.
inline Image normalize(const Image& img, const std::array<float, 3>& mean,
                       const std::array<float, 3>& stddev) {
    Image out = img;
    const int plane = Image::kSide * Image::kSide;
    for (int c = 0; c < 3; ++c) {
        const float m = mean[static_cast<std::size_t>(c)];
        const float inv = 1.0f / stddev[static_cast<std::size_t>(c)];
        for (int i = 0; i < plane; ++i) {
            auto& px = out.pixels[static_cast<std::size_t>(c * plane + i)];
            px = (px - m) * inv;
        }
    }
    return out;
}

template <typename T>
struct Batch {
    Tensor<T> images;  // [N,3,32,32]
    std::vector<int> labels;
};

// One epoch of batches. Index order is a seeded Fisher-Yates shuffle; shift,
// flip and shuffle draws all come from the caller's RNG stream, consumed in
// a fixed order, so a given stream state reproduces the epoch exactly. The
// final partial batch is kept.
template <typename T>
class BatchStream {
public:
    BatchStream(const Dataset& ds, int batch_size, Rng& rng, bool shuffle, bool augment,
                bool apply_normalize, std::array<float, 3> mean, std::array<float, 3> stddev)
        : ds_(ds),
          batch_size_(batch_size),
          rng_(rng),
          augment_(augment),
          normalize_(apply_normalize),
          mean_(mean),
          stddev_(stddev) {
        if (batch_size <= 0) throw Error("batch size must be positive");
        order_.resize(ds.images.size());
        std::iota(order_.begin(), order_.end(), 0);
        if (shuffle) {
            for (std::size_t i = order_.size(); i > 1; --i) {
                const auto j = static_cast<std::size_t>(rng_.uniform_int(0, static_cast<int>(i) - 1));
                std::swap(order_[i - 1], order_[j]);
            }
        }
    }

    // Convenience constructor matching the dataset's own statistics.
    BatchStream(const Dataset& ds, int batch_size, Rng& rng, bool shuffle, bool augment,
                bool apply_normalize)
        : BatchStream(ds, batch_size, rng, shuffle, augment, apply_normalize, ds.mean, ds.stddev) {}

    std::size_t batch_count() const {
        return (order_.size() + static_cast<std::size_t>(batch_size_) - 1) /
               static_cast<std::size_t>(batch_size_);
    }

    bool next(Batch<T>& out) {
        if (pos_ >= order_.size()) return false;
        const std::size_t n = std::min(static_cast<std::size_t>(batch_size_), order_.size() - pos_);
        out.images = Tensor<T>({static_cast<int>(n), 3, Image::kSide, Image::kSide});
        out.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const Image& src = ds_.images[order_[pos_ + i]];
            Image img;
            if (augment_) {
                const int dx = rng_.uniform_int(-4, 4);
                const int dy = rng_.uniform_int(-4, 4);
                const bool flip = rng_.bernoulli(0.5);
                img = augment_shift_flip(src, dx, dy, flip);
            } else {
                img = src;
            }
            if (normalize_) img = normalize(img, mean_, stddev_);
            T* dst = out.images.data() + static_cast<std::int64_t>(i) * Image::kPixels;
            for (int p = 0; p < Image::kPixels; ++p)
                dst[p] = static_cast<T>(img.pixels[static_cast<std::size_t>(p)]);
            out.labels[i] = src.label;
        }
        pos_ += n;
        return true;
    }

private:
    const Dataset& ds_;
    int batch_size_;
    Rng& rng_;
    bool augment_;
    bool normalize_;
    std::array<float, 3> mean_, stddev_;
    std::vector<std::size_t> order_;
    std::size_t pos_ = 0;
};

}  // namespace mlrn
