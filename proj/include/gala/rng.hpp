#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace gala {

// All randomness in the pipeline fans out from one root seed through named
// substreams, so changing how one stage consumes randomness never perturbs
// the others.
class RngStream {
public:
    RngStream(std::uint64_t root_seed, std::string_view label)
        : engine_(mix(root_seed, label)) {}

    std::mt19937_64& engine() { return engine_; }

    double uniform(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        std::normal_distribution<double> d(mean, stddev);
        return d(engine_);
    }

    // Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
        return d(engine_);
    }

private:
    static std::uint64_t mix(std::uint64_t seed, std::string_view label) {
        // FNV-1a over the label, folded into the seed via splitmix64.
        std::uint64_t h = 1469598103934665603ull;
        for (char c : label) {
            h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
            h *= 1099511628211ull;
        }
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ull + h;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::mt19937_64 engine_;
};

} // namespace gala
