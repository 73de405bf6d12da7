#pragma once

#include <cmath>
#include <cstdint>

namespace plrnn {

// Counter-based generator: output i is a strong 64-bit mix of (key, i), so a
// stream is fully determined by its key and the draw index. Streams are split
// by deriving a child key from (parent key, label); sibling streams never
// share output. All fits and simulations take their randomness from forks of
// one root seed, which keeps runs reproducible regardless of scheduling.
class CounterRng {
  public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : key_(mix(mix(seed + kGolden) ^ mix(stream + kComma))) {}

    CounterRng fork(std::uint64_t label) const {
        CounterRng child(0);
        child.key_ = mix(key_ ^ mix(label + kGolden));
        child.counter_ = 0;
        child.has_spare_ = false;
        return child;
    }

    std::uint64_t next_u64() { return mix(key_ + (++counter_) * kGolden); }

    // Uniform on (0, 1]; never returns 0 so logs are safe.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;
    static constexpr std::uint64_t kComma = 0xC2B2AE3D27D4EB4Full;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace plrnn
