#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace deepjscc {

// splitmix64 step; used to mix (seed, tag...) tuples into substream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// A seeded random stream with its own Gaussian sampler. Box-Muller is used
// instead of std::normal_distribution so that sequences are identical across
// standard library implementations; frozen test values depend on this.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}

    double uniform() {
        // (0, 1]; never 0 so log() below is safe.
        return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - (std::numeric_limits<std::uint64_t>::max() % n);
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    std::uint64_t bits() { return gen_(); }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Derives an independent stream from a master seed and a tag path, e.g.
// substream(seed, {kTagChannel, epoch, batch}). Streams with different tag
// paths are computationally independent.
inline RngStream substream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t state = seed ^ 0x6a09e667f3bcc908ull;
    splitmix64(state);
    for (std::uint64_t t : tags) {
        state ^= splitmix64(state) ^ (t + 0x9e3779b97f4a7c15ull);
        splitmix64(state);
    }
    return RngStream(splitmix64(state));
}

// Stream tag roots, one per consumer so streams never collide.
namespace rng_tag {
constexpr std::uint64_t kInit = 0x01;      // weight initialization
constexpr std::uint64_t kShuffle = 0x02;   // epoch shuffling
constexpr std::uint64_t kChannel = 0x03;   // channel noise during training
constexpr std::uint64_t kScheme = 0x04;    // scheme-level draws (masking etc.)
constexpr std::uint64_t kEval = 0x05;      // evaluation noise
constexpr std::uint64_t kEstimate = 0x06;  // receiver-output estimation
}  // namespace rng_tag

}  // namespace deepjscc
