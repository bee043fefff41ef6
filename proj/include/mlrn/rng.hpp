#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "mlrn/error.hpp"

namespace mlrn {

// Seeded generator with hand-rolled draw functions so that sampled values
// depend only on the mt19937 stream, not on library-specific distribution
// internals. State round-trips through text for checkpointing.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

    std::uint32_t next_u32() { return gen_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u32()) * (1.0 / 4294967296.0);
    }

    // Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
    int uniform_int(int lo, int hi) {
        if (lo > hi) throw Error("uniform_int: empty range");
        const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        const std::uint64_t limit = (std::uint64_t(1) << 32) - ((std::uint64_t(1) << 32) % span);
        std::uint64_t v;
        do {
            v = next_u32();
        } while (v >= limit);
        return lo + static_cast<int>(v % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller; second value of each pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::string state() const {
        std::ostringstream os;
        os << gen_ << " " << (have_spare_ ? 1 : 0) << " ";
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void restore(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        if (!(is >> gen_ >> flag >> spare_)) throw ParseError("invalid RNG state string");
        have_spare_ = flag != 0;
    }

private:
    std::mt19937 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Splits one user seed into independent stream seeds (init, data, ...).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace mlrn
