#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ctmc/errors.hpp"

namespace ctmc {

/// SplitMix64 (Steele, Lea & Flood 2014): a counter advanced by a fixed odd
/// increment, with the output produced by a bijective finalizer of the
/// counter. Fully specified here, so sequences are identical on every
/// platform. Streams derived via split() are independent for distinct ids,
/// which keeps parallel and serial runs bit-identical.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Deterministically derive an independent stream for the given id.
    Rng split(std::uint64_t stream_id) const {
        Rng child(0);
        child.state_ = mix(state_ ^ mix(stream_id ^ 0xA3EC4E93C5227EC5ull));
        return child;
    }

    /// Uniform double in [0, 1), 53 bits of precision.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Exponential with the given rate; rate must be positive.
    double exponential(double rate) {
        if (!(rate > 0.0)) throw argument_error("exponential: rate must be > 0");
        // -log1p(-u) is safe: u in [0,1) keeps the argument in (0,1].
        return -std::log1p(-uniform()) / rate;
    }

    /// Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) throw argument_error("below: n must be > 0");
        while (true) {
            std::uint64_t x = next_u64();
            __uint128_t m = static_cast<__uint128_t>(x) * n;
            std::uint64_t lo = static_cast<std::uint64_t>(m);
            if (lo < n) {
                std::uint64_t threshold = (0ull - n) % n;
                if (lo < threshold) continue;
            }
            return static_cast<std::uint64_t>(m >> 64);
        }
    }

    /// Index drawn with probability weights[i] / sum(weights).
    std::size_t categorical(const std::vector<double>& weights) {
        double total = 0.0;
        for (double w : weights) total += w;
        if (!(total > 0.0)) throw argument_error("categorical: weights sum to zero");
        double u = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
            acc += weights[i];
            if (u < acc) return i;
        }
        return weights.size() - 1;
    }

    /// Standard normal via Box-Muller (uses two uniforms per pair of calls).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do { u1 = uniform(); } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ctmc
