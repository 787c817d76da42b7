#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace adafuse {

// Every random draw in a run flows from one seed through named substreams,
// keyed as (seed, stream name, a, b). Streams are stateless with respect to
// the training loop: the stream for step s can be reconstructed after a
// resume, which is what makes interrupted runs replay byte-identically.
//
// Distribution sampling is hand-rolled on top of the raw mt19937_64 output
// (the engine is fully specified by the standard; std:: distributions are
// not), so the byte streams are portable across standard libraries.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string_view stream,
              std::uint64_t a = 0, std::uint64_t b = 0);

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0,1).
    double uniform();
    // Uniform on [lo,hi).
    double uniform(double lo, double hi);
    // Uniform on the open interval (0,1); safe under log().
    double uniform_open();
    // Standard normal via Box-Muller; consumes two uniforms per call.
    double normal();
    // Standard Gumbel(0,1): -log(-log(u)).
    double gumbel();
    // Uniform integer in [0,n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);
    // Index draw proportional to nonnegative weights.
    std::size_t categorical(const std::vector<double>& weights);

private:
    std::mt19937_64 eng_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace adafuse
