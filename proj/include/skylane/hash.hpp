#pragma once

#include <bit>
#include <cstdint>
#include <string_view>

namespace skylane {

// Incremental 64-bit FNV-1a.
class Fnv1a {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 1099511628211ULL;
        }
    }
    void text(std::string_view s) {
        bytes(s.data(), s.size());
        u64(s.size());
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            const auto b = static_cast<unsigned char>(v >> (8 * i));
            bytes(&b, 1);
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v)); }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 14695981039346656037ULL;
};

inline std::uint64_t fnv1a(std::string_view s) {
    Fnv1a h;
    h.bytes(s.data(), s.size());
    return h.value();
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Uniform double in [0, 1) from the top 53 bits.
inline double unit_interval(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

}  // namespace skylane
