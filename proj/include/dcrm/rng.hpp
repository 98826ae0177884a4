#pragma once

#include <cmath>
#include <cstdint>

namespace dcrm {

// Counter-based random stream: every output word is a pure function of
// (key, index), so draws can be generated in any order, on any thread,
// and still reproduce bit-exactly.  The mixer is the splitmix64
// finalizer applied to an affine counter walk.
class CounterStream {
  public:
    CounterStream(std::uint64_t seed, std::uint64_t stream_a, std::uint64_t stream_b)
        : key_(derive_key(seed, stream_a, stream_b)) {}

    std::uint64_t word(std::uint64_t index) const {
        return mix(key_ + (index + 1) * 0x9E3779B97F4A7C15ull);
    }

    // Uniform on (0, 1]: never zero, safe under log().
    double uniform_pos(std::uint64_t index) const {
        return static_cast<double>((word(index) >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform on [0, 1).
    double uniform(std::uint64_t index) const {
        return static_cast<double>(word(index) >> 11) * 0x1.0p-53;
    }

    // Standard normal pair via Box-Muller; consumes word indices 2j, 2j+1.
    void normal_pair(std::uint64_t j, double& z0, double& z1) const {
        const double u1 = uniform_pos(2 * j);
        const double u2 = uniform(2 * j + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        z0 = r * std::cos(a);
        z1 = r * std::sin(a);
    }

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

  private:
    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
        std::uint64_t k = mix(seed + 0xD1B54A32D192ED03ull);
        k = mix(k ^ (a + 1) * 0x8CB92BA72F3D8DD7ull);
        k = mix(k ^ (b + 1) * 0xABCC5167CCAD925Full);
        return k;
    }

    std::uint64_t key_;
};

}  // namespace dcrm
