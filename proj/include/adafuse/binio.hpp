#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>

namespace adafuse::binio {

// Little-endian scalar IO, independent of host byte order.

inline void write_u32(std::ostream& out, std::uint32_t x) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4] = {};
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return x;
}

inline void write_u64(std::ostream& out, std::uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8] = {};
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t x = 0;
    for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return x;
}

inline void write_f64(std::ostream& out, double x) {
    write_u64(out, std::bit_cast<std::uint64_t>(x));
}

inline double read_f64(std::istream& in) {
    return std::bit_cast<double>(read_u64(in));
}

}  // namespace adafuse::binio
