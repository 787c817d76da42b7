#include "adafuse/rng.hpp"

#include <cmath>
#include <numbers>

#include "adafuse/common.hpp"

namespace adafuse {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

RngStream::RngStream(std::uint64_t seed, std::string_view stream,
                     std::uint64_t a, std::uint64_t b) {
    std::uint64_t h = seed;
    h = splitmix64(h ^ fnv1a64(stream.data(), stream.size()));
    h = splitmix64(h ^ (a * 0x9e3779b97f4a7c15ULL));
    h = splitmix64(h ^ (b * 0xc2b2ae3d27d4eb4fULL));
    eng_.seed(h);
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RngStream::uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RngStream::normal() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RngStream::gumbel() {
    return -std::log(-std::log(uniform_open()));
}

std::uint64_t RngStream::uniform_int(std::uint64_t n) {
    if (n == 0) throw UsageError("uniform_int: n must be > 0");
    // Modulo bias is ~n/2^64; irrelevant at the sizes used here.
    return next_u64() % n;
}

std::size_t RngStream::categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) throw NumericError("categorical: bad weight");
        total += w;
    }
    if (total <= 0.0) throw NumericError("categorical: zero total weight");
    const double x = uniform() * total;
    double cum = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        cum += weights[i];
        if (x < cum) return i;
    }
    return weights.size() - 1;
}

}  // namespace adafuse
