#pragma once

// Counter-based random number core (Philox4x32-10).
//
// Every random variate in the simulator is addressed as (seed, stream,
// index): the same triple always yields the same value, independent of
// generation order, chunk size, thread count, or kernel backend. One
// Philox block yields four 32-bit words = two doubles.

#include <array>
#include <cstdint>

namespace calib::kernels {

struct Philox4x32 {
    static constexpr uint32_t kMul0 = 0xD2511F53u;
    static constexpr uint32_t kMul1 = 0xCD9E8D57u;
    static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr uint32_t kWeyl1 = 0xBB67AE85u;
    static constexpr int kRounds = 10;

    static std::array<uint32_t, 4> block(uint64_t block_index, uint64_t stream,
                                         uint64_t seed) {
        uint32_t c0 = static_cast<uint32_t>(block_index);
        uint32_t c1 = static_cast<uint32_t>(block_index >> 32);
        uint32_t c2 = static_cast<uint32_t>(stream);
        uint32_t c3 = static_cast<uint32_t>(stream >> 32);
        uint32_t k0 = static_cast<uint32_t>(seed);
        uint32_t k1 = static_cast<uint32_t>(seed >> 32);
        for (int r = 0; r < kRounds; ++r) {
            const uint64_t p0 = static_cast<uint64_t>(kMul0) * c0;
            const uint64_t p1 = static_cast<uint64_t>(kMul1) * c2;
            const uint32_t hi0 = static_cast<uint32_t>(p0 >> 32);
            const uint32_t lo0 = static_cast<uint32_t>(p0);
            const uint32_t hi1 = static_cast<uint32_t>(p1 >> 32);
            const uint32_t lo1 = static_cast<uint32_t>(p1);
            c0 = hi1 ^ c1 ^ k0;
            c1 = lo1;
            c2 = hi0 ^ c3 ^ k1;
            c3 = lo0;
            k0 += kWeyl0;
            k1 += kWeyl1;
        }
        return {c0, c1, c2, c3};
    }
};

// 64-bit word `half` (0 or 1) of a block.
inline uint64_t philox_u64(uint64_t block_index, uint64_t stream, uint64_t seed,
                           unsigned half) {
    const auto b = Philox4x32::block(block_index, stream, seed);
    return half == 0
               ? (static_cast<uint64_t>(b[0]) | (static_cast<uint64_t>(b[1]) << 32))
               : (static_cast<uint64_t>(b[2]) | (static_cast<uint64_t>(b[3]) << 32));
}

// Uniform double in the open interval (0,1): 52 random bits centered on the
// grid, so 0 and 1 are unreachable and -log stays finite.
inline double u01_from_bits(uint64_t u64) {
    const double v = static_cast<double>(u64 >> 12);
    return (v + 0.5) * 0x1.0p-52;
}

// Uniform double at position `index` of stream (seed, stream).
inline double u01_at(uint64_t seed, uint64_t stream, uint64_t index) {
    return u01_from_bits(
        philox_u64(index >> 1, stream, seed, static_cast<unsigned>(index & 1)));
}

// Deterministic per-record seed derivation for sweeps.
inline uint64_t derive_seed(uint64_t base_seed, uint64_t index) {
    constexpr uint64_t kSeedDeriveStream = 0x5EEDDE21AA7E5EEDull;
    return philox_u64(index, kSeedDeriveStream, base_seed, 0);
}

}  // namespace calib::kernels
