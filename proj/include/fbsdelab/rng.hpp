#ifndef FBSDELAB_RNG_HPP
#define FBSDELAB_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>

namespace fbsde {

// splitmix64 finalizer; used both as a generator step and as a seed mixer.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Substream derivation: the 64-bit seed of the stream for (master_seed,
/// path, channel) is
///
///   s0 = splitmix64(master_seed)
///   s1 = splitmix64(s0 ^ (0xA0761D6478BD642FULL * (path + 1)))
///   s2 = splitmix64(s1 ^ (0xE7037ED1A0B428DBULL * (channel + 1)))
///
/// and s2 seeds a mersenne-twister-64. Uniforms are (x >> 11) * 2^-53,
/// normals come from Box-Muller on those uniforms, so every draw is a pure
/// function of (master_seed, path, channel, draw index).
inline std::uint64_t substream_seed(std::uint64_t master_seed, std::uint64_t path,
                                    std::uint64_t channel) {
    std::uint64_t s = splitmix64(master_seed);
    s = splitmix64(s ^ (0xA0761D6478BD642FULL * (path + 1)));
    s = splitmix64(s ^ (0xE7037ED1A0B428DBULL * (channel + 1)));
    return s;
}

class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : gen_(seed) {}
    RngStream(std::uint64_t master_seed, std::uint64_t path, std::uint64_t channel)
        : gen_(substream_seed(master_seed, path, channel)) {}

    // uniform on (0,1); never returns exactly 0
    double uniform() {
        std::uint64_t x = gen_();
        double u = static_cast<double>(x >> 11) * 0x1.0p-53;
        return u > 0.0 ? u : 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

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

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    // index into a discrete distribution given by (value, weight) pairs
    template <typename Pairs>
    int discrete(const Pairs& pw) {
        double u = uniform();
        double acc = 0.0;
        for (std::size_t i = 0; i < pw.size(); ++i) {
            acc += pw[i].second;
            if (u <= acc) return static_cast<int>(i);
        }
        return static_cast<int>(pw.size()) - 1;
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fbsde

#endif
