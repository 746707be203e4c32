#include "calib/kernels/kernels.hpp"

#ifdef CALIB_KERNELS_AVX2_COMPILED

#include <immintrin.h>

#include <cstdint>

#include "calib/kernels/philox.hpp"

namespace calib::kernels::detail {

namespace {

// Four Philox blocks in parallel, one block per 64-bit lane; all words are
// kept as u32 values zero-extended in epi64 lanes so _mm256_mul_epu32 gives
// the full 64-bit product directly.
struct Blocks4 {
    __m256i u64_first;   // word0|word1<<32 per block (double 0 of the block)
    __m256i u64_second;  // word2|word3<<32 per block (double 1 of the block)
};

inline Blocks4 philox4_blocks(uint64_t block0, uint64_t stream, uint64_t seed) {
    const __m256i m32 = _mm256_set1_epi64x(0xFFFFFFFFll);
    const __m256i idx = _mm256_add_epi64(
        _mm256_set1_epi64x(static_cast<int64_t>(block0)),
        _mm256_setr_epi64x(0, 1, 2, 3));
    __m256i c0 = _mm256_and_si256(idx, m32);
    __m256i c1 = _mm256_srli_epi64(idx, 32);
    __m256i c2 = _mm256_set1_epi64x(static_cast<int64_t>(stream & 0xFFFFFFFFull));
    __m256i c3 = _mm256_set1_epi64x(static_cast<int64_t>(stream >> 32));
    __m256i k0 = _mm256_set1_epi64x(static_cast<int64_t>(seed & 0xFFFFFFFFull));
    __m256i k1 = _mm256_set1_epi64x(static_cast<int64_t>(seed >> 32));
    const __m256i mul0 = _mm256_set1_epi64x(Philox4x32::kMul0);
    const __m256i mul1 = _mm256_set1_epi64x(Philox4x32::kMul1);
    const __m256i weyl0 = _mm256_set1_epi64x(Philox4x32::kWeyl0);
    const __m256i weyl1 = _mm256_set1_epi64x(Philox4x32::kWeyl1);
    for (int r = 0; r < Philox4x32::kRounds; ++r) {
        const __m256i p0 = _mm256_mul_epu32(c0, mul0);
        const __m256i p1 = _mm256_mul_epu32(c2, mul1);
        const __m256i hi0 = _mm256_srli_epi64(p0, 32);
        const __m256i lo0 = _mm256_and_si256(p0, m32);
        const __m256i hi1 = _mm256_srli_epi64(p1, 32);
        const __m256i lo1 = _mm256_and_si256(p1, m32);
        c0 = _mm256_xor_si256(_mm256_xor_si256(hi1, c1), k0);
        c1 = lo1;
        c2 = _mm256_xor_si256(_mm256_xor_si256(hi0, c3), k1);
        c3 = lo0;
        k0 = _mm256_and_si256(_mm256_add_epi64(k0, weyl0), m32);
        k1 = _mm256_and_si256(_mm256_add_epi64(k1, weyl1), m32);
    }
    return {_mm256_or_si256(c0, _mm256_slli_epi64(c1, 32)),
            _mm256_or_si256(c2, _mm256_slli_epi64(c3, 32))};
}

// (double(u64 >> 12) + 0.5) * 2^-52, exact, matching u01_from_bits bit for bit.
inline __m256d u01_from_u64(__m256i u64) {
    const __m256i magic_i = _mm256_set1_epi64x(0x4330000000000000ll);
    const __m256d magic_d = _mm256_set1_pd(0x1.0p52);
    const __m256i v52 = _mm256_srli_epi64(u64, 12);
    const __m256d v = _mm256_sub_pd(
        _mm256_castsi256_pd(_mm256_or_si256(v52, magic_i)), magic_d);
    return _mm256_mul_pd(_mm256_add_pd(v, _mm256_set1_pd(0.5)),
                         _mm256_set1_pd(0x1.0p-52));
}

constexpr double kSqrt2 = 1.41421356237309514547462185873883;
constexpr double kLn2Hi = 6.93147180369123816490e-01;
constexpr double kLn2Lo = 1.90821492927058770002e-10;

inline __m256d neg_log_pd(__m256d u) {
    const __m256i bits = _mm256_castpd_si256(u);
    const __m256i magic_i = _mm256_set1_epi64x(0x4330000000000000ll);
    // biased exponent as exact double, then e = eb - 1023
    const __m256d eb = _mm256_sub_pd(
        _mm256_castsi256_pd(_mm256_or_si256(_mm256_srli_epi64(bits, 52), magic_i)),
        _mm256_set1_pd(0x1.0p52));
    __m256d e = _mm256_sub_pd(eb, _mm256_set1_pd(1023.0));
    __m256d m = _mm256_castsi256_pd(_mm256_or_si256(
        _mm256_and_si256(bits, _mm256_set1_epi64x(0x000FFFFFFFFFFFFFll)),
        _mm256_set1_epi64x(0x3FF0000000000000ll)));
    const __m256d gt = _mm256_cmp_pd(m, _mm256_set1_pd(kSqrt2), _CMP_GT_OQ);
    m = _mm256_blendv_pd(m, _mm256_mul_pd(m, _mm256_set1_pd(0.5)), gt);
    e = _mm256_add_pd(e, _mm256_and_pd(gt, _mm256_set1_pd(1.0)));
    const __m256d r = _mm256_sub_pd(m, _mm256_set1_pd(1.0));
    const __m256d s = _mm256_div_pd(r, _mm256_add_pd(_mm256_set1_pd(2.0), r));
    const __m256d z = _mm256_mul_pd(s, s);
    __m256d p = _mm256_set1_pd(2.0 / 19.0);
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 17.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 15.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 13.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 11.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 9.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 7.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 5.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0 / 3.0));
    p = _mm256_fmadd_pd(z, p, _mm256_set1_pd(2.0));
    const __m256d lnm = _mm256_mul_pd(s, p);
    const __m256d t = _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Lo), lnm);
    const __m256d res = _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Hi), t);
    return _mm256_xor_pd(res, _mm256_set1_pd(-0.0));
}

}  // namespace

void fill_u01_avx2(uint64_t seed, uint64_t stream, uint64_t first_index,
                   std::span<double> out) {
    uint64_t i = first_index;
    size_t k = 0;
    const size_t n = out.size();
    if (n > 0 && (i & 1)) {
        out[k++] = u01_from_bits(philox_u64(i >> 1, stream, seed, 1));
        ++i;
    }
    while (k + 8 <= n) {
        const Blocks4 b = philox4_blocks(i >> 1, stream, seed);
        const __m256d da = u01_from_u64(b.u64_first);
        const __m256d db = u01_from_u64(b.u64_second);
        const __m256d lo = _mm256_unpacklo_pd(da, db);  // a0 b0 | a2 b2
        const __m256d hi = _mm256_unpackhi_pd(da, db);  // a1 b1 | a3 b3
        _mm256_storeu_pd(&out[k], _mm256_permute2f128_pd(lo, hi, 0x20));
        _mm256_storeu_pd(&out[k + 4], _mm256_permute2f128_pd(lo, hi, 0x31));
        k += 8;
        i += 8;
    }
    if (k < n) {
        fill_u01_scalar(seed, stream, i, out.subspan(k));
    }
}

void neg_log_avx2(std::span<double> x) {
    size_t k = 0;
    const size_t n = x.size();
    for (; k + 4 <= n; k += 4) {
        _mm256_storeu_pd(&x[k], neg_log_pd(_mm256_loadu_pd(&x[k])));
    }
    for (; k < n; ++k) x[k] = neg_log_u01_element(x[k]);
}

void less_than_mask_avx2(std::span<const double> x, double threshold,
                         std::span<uint8_t> out) {
    const __m256d th = _mm256_set1_pd(threshold);
    size_t k = 0;
    const size_t n = x.size();
    for (; k + 4 <= n; k += 4) {
        const int bits =
            _mm256_movemask_pd(_mm256_cmp_pd(_mm256_loadu_pd(&x[k]), th, _CMP_LT_OQ));
        out[k] = static_cast<uint8_t>(bits & 1);
        out[k + 1] = static_cast<uint8_t>((bits >> 1) & 1);
        out[k + 2] = static_cast<uint8_t>((bits >> 2) & 1);
        out[k + 3] = static_cast<uint8_t>((bits >> 3) & 1);
    }
    for (; k < n; ++k) out[k] = x[k] < threshold ? 1 : 0;
}

}  // namespace calib::kernels::detail

#else

// Non-x86 build: the dispatcher never routes here.
namespace calib::kernels::detail {
void fill_u01_avx2(uint64_t seed, uint64_t stream, uint64_t first_index,
                   std::span<double> out) {
    fill_u01_scalar(seed, stream, first_index, out);
}
void neg_log_avx2(std::span<double> x) { neg_log_scalar(x); }
void less_than_mask_avx2(std::span<const double> x, double threshold,
                         std::span<uint8_t> out) {
    less_than_mask_scalar(x, threshold, out);
}
}  // namespace calib::kernels::detail

#endif
