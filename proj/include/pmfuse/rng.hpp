#pragma once

#include <cstdint>
#include <cstddef>
#include <string_view>
#include <vector>

namespace pmfuse {

// Deterministic, platform-independent RNG (splitmix64 core). std:: engines
// are avoided for anything that lands in output files: distribution results
// are implementation-defined, and pipeline outputs must be reproducible
// byte-for-byte from the manifest seeds alone.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        // Multiply-shift bounded draw; bias is < 2^-64 * n, irrelevant here
        // and fully deterministic.
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller (one value per call, cached pair).
    double next_gaussian();

    // Deterministic Fisher-Yates shuffle of indices [0, n).
    std::vector<std::size_t> shuffled_indices(std::size_t n);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a 64-bit over bytes; used for substream derivation and content
// checksums in run manifests.
inline std::uint64_t fnv1a64(const void* data, std::size_t len,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a64(s.data(), s.size(), h);
}

// Named substream: one master seed, independent streams per purpose
// ("scenario", "calibration_split", "cv_folds", "forest", ...).
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
    std::uint64_t h = fnv1a64(name);
    h ^= master + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
}

}  // namespace pmfuse
