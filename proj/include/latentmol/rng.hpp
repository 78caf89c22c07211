#pragma once

// Counter-based random streams (Philox 4x32-10). A stream is fully
// determined by (seed, stream id); draws are independent of execution
// order across streams, which is what makes parallel runs reproducible.

#include <cmath>
#include <cstdint>
#include <string_view>

namespace latentmol {

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

class RngStream {
public:
    RngStream(uint64_t seed, uint64_t stream)
        : key0_(static_cast<uint32_t>(seed)),
          key1_(static_cast<uint32_t>(seed >> 32)),
          ctr2_(static_cast<uint32_t>(stream)),
          ctr3_(static_cast<uint32_t>(stream >> 32)) {}

    RngStream(uint64_t seed, std::string_view tag, uint64_t index = 0)
        : RngStream(seed, fnv1a64(tag) ^ (index * 0x9E3779B97F4A7C15ull)) {}

    uint32_t next_u32() {
        if (buf_pos_ == 4) refill();
        return buf_[buf_pos_++];
    }

    uint64_t next_u64() {
        uint64_t lo = next_u32();
        uint64_t hi = next_u32();
        return lo | (hi << 32);
    }

    // Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float next_float() { return static_cast<float>(next_double()); }

    // Uniform in [0, n).
    uint32_t uniform_int(uint32_t n) {
        if (n == 0) return 0;
        return static_cast<uint32_t>(next_double() * n) % n;
    }

    // Standard normal via Box-Muller.
    float gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = next_double();
        double u2 = next_double();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        cached_ = static_cast<float>(r * std::sin(a));
        have_cached_ = true;
        return static_cast<float>(r * std::cos(a));
    }

private:
    static void philox_round(uint32_t& x0, uint32_t& x1, uint32_t& x2, uint32_t& x3,
                             uint32_t k0, uint32_t k1) {
        uint64_t p0 = 0xD2511F53ull * x0;
        uint64_t p1 = 0xCD9E8D57ull * x2;
        uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
        uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
        uint32_t y0 = hi1 ^ x1 ^ k0;
        uint32_t y1 = lo1;
        uint32_t y2 = hi0 ^ x3 ^ k1;
        uint32_t y3 = lo0;
        x0 = y0; x1 = y1; x2 = y2; x3 = y3;
    }

    void refill() {
        uint32_t x0 = static_cast<uint32_t>(counter_);
        uint32_t x1 = static_cast<uint32_t>(counter_ >> 32);
        uint32_t x2 = ctr2_;
        uint32_t x3 = ctr3_;
        uint32_t k0 = key0_, k1 = key1_;
        for (int i = 0; i < 10; ++i) {
            philox_round(x0, x1, x2, x3, k0, k1);
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf_[0] = x0; buf_[1] = x1; buf_[2] = x2; buf_[3] = x3;
        buf_pos_ = 0;
        ++counter_;
    }

    uint32_t key0_, key1_;
    uint32_t ctr2_, ctr3_;
    uint64_t counter_ = 0;
    uint32_t buf_[4] = {0, 0, 0, 0};
    int buf_pos_ = 4;
    bool have_cached_ = false;
    float cached_ = 0.0f;
};

}  // namespace latentmol
