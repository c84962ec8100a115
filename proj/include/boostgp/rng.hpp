#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "boostgp/mathutil.hpp"

namespace boostgp {

/// Philox4x32-10 block function (Salmon et al. counter-based generator).
/// Pure: output depends only on (counter, key), which is what makes per-gene
/// streams reproducible regardless of thread scheduling.
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
    constexpr std::uint32_t M0 = 0xD2511F53u;
    constexpr std::uint32_t M1 = 0xCD9E8D57u;
    constexpr std::uint32_t W0 = 0x9E3779B9u;
    constexpr std::uint32_t W1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(M0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(M1) * ctr[2];
        const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
        const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
        const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += W0;
        key[1] += W1;
    }
    return ctr;
}

/// Stream identifiers: the 64-bit stream id occupies the high counter words,
/// so streams of the same seed are disjoint counter ranges by construction.
enum class StreamDomain : std::uint64_t {
    chain = 1,      // chain-level draws (gene selection in the add-delete move)
    gene = 2,       // per-(chain, gene) update draws
    sim_global = 3, // simulation: size factors, dispersions
    sim_gene = 4,   // simulation: per-gene counts and noise
    init = 5,       // chain state initialization
    test = 6,       // scratch streams in tests
};

inline std::uint64_t make_stream_id(StreamDomain domain, std::uint64_t chain, std::uint64_t index) {
    return (static_cast<std::uint64_t>(domain) << 56) | ((chain & 0xFFFFu) << 40) |
           (index & 0xFFFFFFFFFFull);
}

/// Counter-based RNG: one instance per stream, sequential draws within it.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t stream_id)
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          hi_{static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)} {}

    CounterRng(std::uint64_t seed, StreamDomain domain, std::uint64_t chain, std::uint64_t index)
        : CounterRng(seed, make_stream_id(domain, chain, index)) {}

    std::uint32_t next_u32() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform integer in [0, n); n >= 1. Multiply-shift range reduction.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller (cosine branch only; fixed two uniforms
    /// per draw keeps stream consumption deterministic).
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double normal(double mu, double sigma) { return mu + sigma * normal(); }

    double exponential(double mean) { return -mean * std::log(uniform_pos()); }

    /// Gamma(shape, rate) by Marsaglia-Tsang squeeze, with the standard
    /// shape<1 boost. Underflows to 0.0 for tiny shapes; callers that need a
    /// positive value clamp.
    double gamma(double shape, double rate) {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0, 1.0);
            const double u = uniform_pos();
            return g * std::pow(u, 1.0 / shape) / rate;
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) return d * v / rate;
        }
    }

    /// Poisson(mu) by exponential arrival counting; exact for any mu, O(mu).
    std::uint64_t poisson(double mu) {
        std::uint64_t k = 0;
        double acc = exponential(1.0);
        while (acc <= mu) {
            ++k;
            acc += exponential(1.0);
        }
        return k;
    }

    /// Negative binomial with mean mu and dispersion phi (variance mu + mu^2/phi),
    /// sampled as a gamma-Poisson mixture.
    std::uint64_t negative_binomial(double mu, double phi) {
        const double lam = gamma(phi, phi / mu);
        return poisson(lam);
    }

    /// N(mu, sigma^2) truncated to [lo, hi], by inverse-CDF.
    double truncated_normal(double mu, double sigma, double lo, double hi) {
        const double a = normal_cdf((lo - mu) / sigma);
        const double b = normal_cdf((hi - mu) / sigma);
        const double u = a + uniform() * (b - a);
        return mu + sigma * normal_quantile(u);
    }

private:
    void refill() {
        buf_ = philox4x32({static_cast<std::uint32_t>(block_),
                           static_cast<std::uint32_t>(block_ >> 32), hi_[0], hi_[1]},
                          key_);
        ++block_;
        buf_pos_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::array<std::uint32_t, 2> hi_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buf_{};
    int buf_pos_ = 4;
};

} // namespace boostgp
