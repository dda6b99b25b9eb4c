#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace htcsim {

/// 64-bit FNV-1a. Used to turn stream labels and scenario text into seeds
/// and hashes.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// SplitMix64 step (Steele, Lea, Flood), used only to expand seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Reproducible random stream: xoshiro256** 1.0 (Blackman and Vigna) seeded
/// from SplitMix64(seed XOR fnv1a64(stream_id)).
///
/// Distribution transforms are written out here instead of using <random>
/// distributions, whose output differs between standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view stream_id);

    std::uint64_t next_u64();
    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform01();
    double uniform(double lo, double hi);
    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t below(std::uint64_t n);
    /// Exponential with the given rate (mean 1/rate).
    double exponential(double rate);
    /// Standard normal via Box-Muller; the paired value is discarded so each
    /// call consumes exactly two raw draws.
    double normal();
    double lognormal(double mu, double sigma);

    std::uint64_t seed() const { return seed_; }
    const std::string& stream_id() const { return stream_id_; }

private:
    std::array<std::uint64_t, 4> s_{};
    std::uint64_t seed_;
    std::string stream_id_;
};

}  // namespace htcsim
