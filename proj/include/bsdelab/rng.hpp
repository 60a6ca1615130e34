#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace bsdelab {

/// Philox-4x32-10 counter-based generator (Salmon et al., SC 2011).
/// Samples are a pure function of (seed, path, step, block), so an ensemble
/// is bit-reproducible regardless of how work is scheduled across threads.
class Philox {
public:
    explicit Philox(uint64_t seed) : seed_(seed) {}

    uint64_t seed() const { return seed_; }

    /// Raw 4x32 output block for the given counter position.
    std::array<uint32_t, 4> block(uint64_t path, uint64_t step, uint32_t block_index) const {
        std::array<uint32_t, 4> ctr = {
            static_cast<uint32_t>(step),
            static_cast<uint32_t>(step >> 32),
            static_cast<uint32_t>(path),
            static_cast<uint32_t>(path >> 32) ^ block_index,
        };
        std::array<uint32_t, 2> key = {static_cast<uint32_t>(seed_),
                                       static_cast<uint32_t>(seed_ >> 32)};
        for (int round = 0; round < 10; ++round) {
            const uint64_t p0 = static_cast<uint64_t>(kM0) * ctr[0];
            const uint64_t p1 = static_cast<uint64_t>(kM1) * ctr[2];
            const std::array<uint32_t, 4> next = {
                static_cast<uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0],
                static_cast<uint32_t>(p1),
                static_cast<uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1],
                static_cast<uint32_t>(p0),
            };
            ctr = next;
            key[0] += kW0;
            key[1] += kW1;
        }
        return ctr;
    }

    /// Two independent uniforms in (0,1), each built from 64 bits.
    std::array<double, 2> uniform_pair(uint64_t path, uint64_t step, uint32_t block_index) const {
        const auto b = block(path, step, block_index);
        const uint64_t u0 = (static_cast<uint64_t>(b[0]) << 32) | b[1];
        const uint64_t u1 = (static_cast<uint64_t>(b[2]) << 32) | b[3];
        return {to_unit(u0), to_unit(u1)};
    }

    /// Two independent standard normals (Box-Muller).
    std::array<double, 2> normal_pair(uint64_t path, uint64_t step, uint32_t block_index) const {
        const auto u = uniform_pair(path, step, block_index);
        const double r = std::sqrt(-2.0 * std::log(u[0]));
        const double theta = 2.0 * std::numbers::pi * u[1];
        return {r * std::cos(theta), r * std::sin(theta)};
    }

    /// Fills out with independent standard normals for the (path, step) cell.
    void fill_normals(uint64_t path, uint64_t step, std::span<double> out) const {
        for (size_t i = 0; i < out.size(); i += 2) {
            const auto z = normal_pair(path, step, static_cast<uint32_t>(i / 2));
            out[i] = z[0];
            if (i + 1 < out.size()) out[i + 1] = z[1];
        }
    }

private:
    static constexpr uint32_t kM0 = 0xD2511F53u;
    static constexpr uint32_t kM1 = 0xCD9E8D57u;
    static constexpr uint32_t kW0 = 0x9E3779B9u;
    static constexpr uint32_t kW1 = 0xBB67AE85u;

    // Maps 64 random bits to (0,1); never returns 0 or 1.
    static double to_unit(uint64_t v) {
        return (static_cast<double>(v >> 11) + 0.5) * 0x1.0p-53;
    }

    uint64_t seed_;
};

} // namespace bsdelab
