#include "htcsim/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace htcsim {

namespace {

constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

std::uint64_t fnv1a64(std::string_view data, std::uint64_t basis) {
    std::uint64_t h = basis;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::string_view stream_id) : seed_(seed), stream_id_(stream_id) {
    std::uint64_t sm = seed ^ fnv1a64(stream_id);
    for (auto& word : s_) word = splitmix64(sm);
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double RngStream::uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("RngStream::below(0)");
    // Rejection keeps the result unbiased.
    const std::uint64_t limit = -n % n;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= limit) return r % n;
    }
}

double RngStream::exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

double RngStream::normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

}  // namespace htcsim
