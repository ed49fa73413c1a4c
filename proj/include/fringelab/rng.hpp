#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace fringelab {

// Deterministic random stream. std::normal_distribution is
// implementation-defined, so uniform/normal are generated explicitly to keep
// outputs stable across standard-library versions.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    // Derive an independent stream from (seed, index); serial and parallel
    // consumers of per-item streams see identical bytes.
    static Rng substream(uint64_t seed, uint64_t index) {
        return Rng(mix(seed, index));
    }

    uint64_t bits() { return eng_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Integer in [0, n).
    uint64_t index(uint64_t n) {
        // Rejection sampling keeps the distribution exact.
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; second value of each pair is cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1, u2;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.28318530717958647692 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::string save_state() const {
        std::ostringstream os;
        os << eng_ << " " << (have_spare_ ? 1 : 0) << " ";
        os.precision(17);
        os << spare_;
        return os.str();
    }

    void load_state(const std::string& s) {
        std::istringstream is(s);
        int flag = 0;
        is >> eng_ >> flag >> spare_;
        have_spare_ = (flag != 0);
    }

    static uint64_t mix(uint64_t seed, uint64_t index) {
        // splitmix64 finalizer over the combined value
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace fringelab
