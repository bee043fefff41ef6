#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mlrn/error.hpp"

namespace mlrn {

// One decoded 32x32 RGB image, pixels scaled to [0,1], stored row-major per
// channel plane (R plane, G plane, B plane).
struct Image {
    static constexpr int kChannels = 3;
    static constexpr int kSide = 32;
    static constexpr int kPixels = kChannels * kSide * kSide;

    std::vector<float> pixels;  // kPixels values in [0,1]
    int label = 0;              // fine label
    int coarse_label = -1;      // CIFAR-100 only
};

enum class CifarVariant { cifar10, cifar100 };
enum class Split { train, test };

inline const char* variant_name(CifarVariant v) {
    return v == CifarVariant::cifar10 ? "cifar10" : "cifar100";
}

struct Dataset {
    CifarVariant variant = CifarVariant::cifar10;
    Split split = Split::train;
    std::vector<Image> images;
    // per-channel statistics of the loaded split, for normalization
    std::array<float, 3> mean{0.f, 0.f, 0.f};
    std::array<float, 3> stddev{1.f, 1.f, 1.f};

    int class_count() const { return variant == CifarVariant::cifar10 ? 10 : 100; }
    std::size_t size() const { return images.size(); }

    // First-k slice; keeps the parent's normalization statistics.
    Dataset subset(std::size_t k) const {
        Dataset d = *this;
        if (k < d.images.size()) d.images.resize(k);
        return d;
    }
};

namespace detail {

inline std::vector<unsigned char> read_exact(const std::string& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IoError("cannot open '" + path + "'");
    const auto actual = static_cast<std::size_t>(in.tellg());
    if (actual != expected)
        throw IoError("'" + path + "': expected " + std::to_string(expected) + " bytes, found " +
                      std::to_string(actual));
    std::vector<unsigned char> buf(expected);
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
    if (!in) throw IoError("short read from '" + path + "'");
    return buf;
}

inline Image decode_record(const unsigned char* rec, bool has_coarse) {
    Image img;
    if (has_coarse) {
        img.coarse_label = rec[0];
        img.label = rec[1];
        rec += 2;
    } else {
        img.label = rec[0];
        rec += 1;
    }
    img.pixels.resize(Image::kPixels);
    for (int i = 0; i < Image::kPixels; ++i)
        img.pixels[static_cast<std::size_t>(i)] = static_cast<float>(rec[i]) * (1.0f / 255.0f);
    return img;
}

inline void compute_stats(Dataset& ds) {
    const int plane = Image::kSide * Image::kSide;
    for (int c = 0; c < 3; ++c) {
        double sum = 0, sq = 0;
        for (const auto& img : ds.images)
            for (int i = 0; i < plane; ++i) {
                const double v = img.pixels[static_cast<std::size_t>(c * plane + i)];
                sum += v;
                sq += v * v;
            }
        const double n = static_cast<double>(ds.images.size()) * plane;
        const double mean = n > 0 ? sum / n : 0.0;
        const double var = n > 0 ? std::max(0.0, sq / n - mean * mean) : 1.0;
        ds.mean[static_cast<std::size_t>(c)] = static_cast<float>(mean);
        const double sd = std::sqrt(var);
        ds.stddev[static_cast<std::size_t>(c)] = static_cast<float>(sd > 1e-8 ? sd : 1.0);
    }
}

}  // namespace detail

// Decodes the CIFAR binary layout: CIFAR-10 records are 1 label byte + 3072
// pixel bytes, CIFAR-100 records are coarse byte + fine byte + 3072 pixels.
// Train split: 50000 records (5 files for CIFAR-10), test split: 10000.
inline Dataset load_cifar(const std::string& dir, CifarVariant variant, Split split) {
    Dataset ds;
    ds.variant = variant;
    ds.split = split;
    const std::size_t rec = variant == CifarVariant::cifar10 ? 3073 : 3074;
    const bool coarse = variant == CifarVariant::cifar100;

    std::vector<std::string> files;
    std::size_t per_file = 10000;
    if (variant == CifarVariant::cifar10) {
        if (split == Split::train)
            for (int i = 1; i <= 5; ++i) files.push_back(dir + "/data_batch_" + std::to_string(i) + ".bin");
        else
            files.push_back(dir + "/test_batch.bin");
    } else {
        if (split == Split::train) {
            files.push_back(dir + "/train.bin");
            per_file = 50000;
        } else {
            files.push_back(dir + "/test.bin");
        }
    }

    for (const auto& f : files) {
        const auto buf = detail::read_exact(f, per_file * rec);
        for (std::size_t i = 0; i < per_file; ++i)
            ds.images.push_back(detail::decode_record(buf.data() + i * rec, coarse));
    }
    for (const auto& img : ds.images)
        if (img.label < 0 || img.label >= ds.class_count())
            throw ParseError("label " + std::to_string(img.label) + " out of range for " +
                             variant_name(variant));
    detail::compute_stats(ds);
    return ds;
}

}  // namespace mlrn
