#include "calib/kernels/kernels.hpp"

#include <bit>
#include <cmath>
#include <cstdint>

#include "calib/kernels/philox.hpp"

namespace calib::kernels::detail {

namespace {

constexpr uint64_t kMantissaMask = 0x000FFFFFFFFFFFFFull;
constexpr uint64_t kOneBits = 0x3FF0000000000000ull;
// Nearest double to sqrt(2); either rounding direction of the boundary is a
// valid mantissa split, it only has to match the AVX2 path.
constexpr double kSqrt2 = 1.41421356237309514547462185873883;
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;

// atanh series: log(m) = s*(2 + (2/3)z + (2/5)z^2 + ...), s=(m-1)/(m+1), z=s^2.
constexpr double kC0 = 2.0;
constexpr double kC1 = 2.0 / 3.0;
constexpr double kC2 = 2.0 / 5.0;
constexpr double kC3 = 2.0 / 7.0;
constexpr double kC4 = 2.0 / 9.0;
constexpr double kC5 = 2.0 / 11.0;
constexpr double kC6 = 2.0 / 13.0;
constexpr double kC7 = 2.0 / 15.0;
constexpr double kC8 = 2.0 / 17.0;
constexpr double kC9 = 2.0 / 19.0;

}  // namespace

double neg_log_u01_element(double u) {
    const uint64_t bits = std::bit_cast<uint64_t>(u);
    double e = static_cast<double>(static_cast<int64_t>(bits >> 52)) - 1023.0;
    double m = std::bit_cast<double>((bits & kMantissaMask) | kOneBits);
    if (m > kSqrt2) {
        m *= 0.5;
        e += 1.0;
    }
    const double r = m - 1.0;  // exact: m in [sqrt2/2, sqrt2]
    const double s = r / (2.0 + r);
    const double z = s * s;
    double p = kC9;
    p = std::fma(z, p, kC8);
    p = std::fma(z, p, kC7);
    p = std::fma(z, p, kC6);
    p = std::fma(z, p, kC5);
    p = std::fma(z, p, kC4);
    p = std::fma(z, p, kC3);
    p = std::fma(z, p, kC2);
    p = std::fma(z, p, kC1);
    p = std::fma(z, p, kC0);
    const double lnm = s * p;
    const double t = std::fma(e, kLn2Lo, lnm);
    return -std::fma(e, kLn2Hi, t);
}

void fill_u01_scalar(uint64_t seed, uint64_t stream, uint64_t first_index,
                     std::span<double> out) {
    uint64_t i = first_index;
    size_t k = 0;
    const size_t n = out.size();
    if (n > 0 && (i & 1)) {
        out[k++] = u01_from_bits(philox_u64(i >> 1, stream, seed, 1));
        ++i;
    }
    while (k + 2 <= n) {
        const auto b = Philox4x32::block(i >> 1, stream, seed);
        out[k] = u01_from_bits(static_cast<uint64_t>(b[0]) |
                               (static_cast<uint64_t>(b[1]) << 32));
        out[k + 1] = u01_from_bits(static_cast<uint64_t>(b[2]) |
                                   (static_cast<uint64_t>(b[3]) << 32));
        k += 2;
        i += 2;
    }
    if (k < n) {
        out[k] = u01_from_bits(philox_u64(i >> 1, stream, seed, 0));
    }
}

void neg_log_scalar(std::span<double> x) {
    for (double& v : x) v = neg_log_u01_element(v);
}

void less_than_mask_scalar(std::span<const double> x, double threshold,
                           std::span<uint8_t> out) {
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] < threshold ? 1 : 0;
}

}  // namespace calib::kernels::detail
