#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mlrn/cifar.hpp"
#include "mlrn/error.hpp"
#include "mlrn/rng.hpp"

namespace mlrn {

// Deterministic class-conditional image generator emitting files in the
// exact CIFAR binary layout. Each class is a mixture of oriented sinusoid
// textures over a base color; samples add phase jitter, a random toroidal
// shift and pixel noise, so the classes are separable by a small conv net
// but not trivially so. Train and test draws share the distribution.
class SynthCifar {
public:
    explicit SynthCifar(int classes, std::uint64_t seed) : classes_(classes) {
        Rng class_rng(mix_seed(seed, 400));
        protos_.resize(static_cast<std::size_t>(classes));
        for (auto& p : protos_) {
            for (int c = 0; c < 3; ++c) {
                p.base[c] = 0.25 + 0.5 * class_rng.uniform();
                for (int k = 0; k < kWaves; ++k) {
                    auto& w = p.waves[c][k];
                    w.fx = (0.5 + 2.5 * class_rng.uniform()) * (2.0 * kPi / 32.0);
                    w.fy = (0.5 + 2.5 * class_rng.uniform()) * (2.0 * kPi / 32.0);
                    w.amp = 0.06 + 0.10 * class_rng.uniform();
                    w.phase = 2.0 * kPi * class_rng.uniform();
                }
            }
        }
    }

    // Renders sample `index` of class `label` for the given stream (train=0,
    // test=1). Fully determined by (seed fields, label, stream, index).
    std::vector<unsigned char> render(int label, int stream, std::uint64_t index,
                                      std::uint64_t seed) const {
        Rng rng(mix_seed(mix_seed(seed, 500 + static_cast<std::uint64_t>(stream)),
                         static_cast<std::uint64_t>(label) * 1000003ULL + index));
        const auto& p = protos_[static_cast<std::size_t>(label)];
        const int ox = rng.uniform_int(0, 31), oy = rng.uniform_int(0, 31);
        std::vector<unsigned char> out(3072);
        double rowv[kWaves][32], colv[kWaves][32], roww[kWaves][32], colw[kWaves][32];
        for (int c = 0; c < 3; ++c) {
            for (int k = 0; k < kWaves; ++k) {
                const auto& w = p.waves[c][k];
                const double jitter = 0.8 * rng.normal();
                for (int i = 0; i < 32; ++i) {
                    const int xi = (i + ox) & 31, yi = (i + oy) & 31;
                    rowv[k][i] = std::sin(w.fy * yi + w.phase + jitter);
                    roww[k][i] = std::cos(w.fy * yi + w.phase + jitter);
                    colv[k][i] = std::cos(w.fx * xi);
                    colw[k][i] = std::sin(w.fx * xi);
                }
            }
            const double gain = 0.7 + 0.6 * rng.uniform();
            const double shade = 0.12 * rng.normal();
            for (int y = 0; y < 32; ++y) {
                for (int x = 0; x < 32; ++x) {
                    double v = p.base[c];
                    for (int k = 0; k < kWaves; ++k) {
                        // sin(fy*y + fx*x + phase) via the precomputed tables
                        v += p.waves[c][k].amp * (rowv[k][y] * colv[k][x] + roww[k][y] * colw[k][x]);
                    }
                    v = v * gain + shade + 0.16 * rng.normal();
                    v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
                    out[static_cast<std::size_t>(c * 1024 + y * 32 + x)] =
                        static_cast<unsigned char>(v * 255.0 + 0.5);
                }
            }
        }
        return out;
    }

private:
    static constexpr int kWaves = 3;
    static constexpr double kPi = 3.14159265358979323846;
    struct Wave {
        double fx, fy, amp, phase;
    };
    struct Proto {
        double base[3];
        Wave waves[3][kWaves];
    };
    int classes_;
    std::vector<Proto> protos_;
};

namespace detail {

inline void write_synth_records(const std::string& path, const SynthCifar& gen, int classes,
                                std::size_t count, int stream, std::uint64_t seed,
                                std::uint64_t first_index, bool coarse) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    // balanced labels in a fixed interleaved order
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t gi = first_index + i;
        const int label = static_cast<int>(gi % static_cast<std::uint64_t>(classes));
        const auto px = gen.render(label, stream, gi / static_cast<std::uint64_t>(classes), seed);
        if (coarse) out.put(static_cast<char>(label / 5));
        out.put(static_cast<char>(label));
        out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
    }
    if (!out) throw IoError("failed writing '" + path + "'");
}

}  // namespace detail

inline std::vector<std::pair<std::string, std::size_t>> cifar_file_manifest(CifarVariant variant) {
    if (variant == CifarVariant::cifar10) {
        std::vector<std::pair<std::string, std::size_t>> m;
        for (int i = 1; i <= 5; ++i)
            m.emplace_back("data_batch_" + std::to_string(i) + ".bin", 10000u * 3073u);
        m.emplace_back("test_batch.bin", 10000u * 3073u);
        return m;
    }
    return {{"train.bin", 50000u * 3074u}, {"test.bin", 10000u * 3074u}};
}

// Writes a complete synthetic dataset in CIFAR binary layout (canonical file
// names and record counts) into `dir`.
inline void write_synth_cifar(const std::string& dir, CifarVariant variant, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    const int classes = variant == CifarVariant::cifar10 ? 10 : 100;
    SynthCifar gen(classes, seed);
    if (variant == CifarVariant::cifar10) {
        for (int f = 0; f < 5; ++f)
            detail::write_synth_records(dir + "/data_batch_" + std::to_string(f + 1) + ".bin", gen,
                                        classes, 10000, 0, seed, static_cast<std::uint64_t>(f) * 10000,
                                        false);
        detail::write_synth_records(dir + "/test_batch.bin", gen, classes, 10000, 1, seed, 0, false);
    } else {
        detail::write_synth_records(dir + "/train.bin", gen, classes, 50000, 0, seed, 0, true);
        detail::write_synth_records(dir + "/test.bin", gen, classes, 10000, 1, seed, 0, true);
    }
}

// Generates the dataset under root/<variant>/ unless complete files are
// already present; the generator is deterministic, so reuse is safe. Returns
// the dataset directory.
inline std::string ensure_synth_dataset(const std::string& root, CifarVariant variant,
                                        std::uint64_t seed) {
    namespace fs = std::filesystem;
    const std::string dir = root + "/" + variant_name(variant);
    bool complete = true;
    for (const auto& [name, size] : cifar_file_manifest(variant)) {
        std::error_code ec;
        if (fs::file_size(dir + "/" + name, ec) != size || ec) complete = false;
    }
    if (!complete) write_synth_cifar(dir, variant, seed);
    return dir;
}

}  // namespace mlrn
