#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sedid/tensor.hpp"

namespace sedid {

// splitmix64 finalizer (Vigna). All randomness in the engine flows through
// this mix; it is pure integer arithmetic, so streams are identical across
// platforms. Reference vectors are frozen in the test suite.
constexpr uint64_t mix64(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr uint64_t kGolden = 0x9E3779B97F4A7C15ull;

// Substream derivation: independent child seed for (parent seed, stream tag).
// Used wherever work is fanned out (per-sample sampling, per-cell sweeps) so
// results do not depend on execution order.
constexpr uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    return mix64(seed ^ mix64(stream + kGolden));
}

constexpr uint64_t derive_seed(uint64_t seed, uint64_t stream, uint64_t index) {
    return derive_seed(derive_seed(seed, stream), index);
}

// Counter-based deterministic generator: the stream is splitmix64 over an
// incrementing state. Normal draws use the Marsaglia polar method (sqrt/log
// only, no trig), with the paired value cached. One owner per instance.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() {
        state_ += kGolden;
        return mix64(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    uint64_t next_below(uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::next_below: n == 0");
        return next_u64() % n;
    }

    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_double() - 1.0;
            v = 2.0 * next_double() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

    Rng substream(uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

private:
    uint64_t seed_;
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// i.i.d. standard normal tensor from the seeded stream.
inline Tensor gaussian(Rng& rng, const std::vector<size_t>& shape) {
    if (shape.empty()) throw std::invalid_argument("gaussian: empty shape");
    for (size_t d : shape)
        if (d == 0) throw std::invalid_argument("gaussian: zero dimension");
    Tensor out(shape);
    for (size_t i = 0; i < out.size(); ++i) out[i] = rng.next_normal();
    return out;
}

}  // namespace sedid
