#pragma once

// Bulk array kernels behind the Monte Carlo engine: uniform-variate fill,
// -log transform, threshold masks. Each has a scalar reference
// implementation and an AVX2 variant selected at runtime; the two are
// bit-identical by construction (integer RNG core, pinned FP operation
// order, FMA both sides), so the choice of backend never changes results.

#include <cstdint>
#include <span>
#include <string>

namespace calib::kernels {

enum class Backend { Scalar, Avx2 };

// Backend selected at startup: AVX2 when the CPU supports AVX2+FMA, else
// scalar. Override with environment variable CALIB_KERNELS=scalar|avx2 or
// set_backend().
Backend active_backend();
bool backend_supported(Backend b);
void set_backend(Backend b);  // throws std::runtime_error if unsupported
std::string backend_name(Backend b);

// out[i] = uniform(0,1) at stream position first_index + i.
void fill_u01(uint64_t seed, uint64_t stream, uint64_t first_index,
              std::span<double> out);

// x[i] = -log(x[i]); domain (0,1), as produced by fill_u01.
void neg_log(std::span<double> x);

// out[i] = x[i] < threshold ? 1 : 0.
void less_than_mask(std::span<const double> x, double threshold,
                    std::span<uint8_t> out);

namespace detail {
void fill_u01_scalar(uint64_t seed, uint64_t stream, uint64_t first_index,
                     std::span<double> out);
void neg_log_scalar(std::span<double> x);
void less_than_mask_scalar(std::span<const double> x, double threshold,
                           std::span<uint8_t> out);
void fill_u01_avx2(uint64_t seed, uint64_t stream, uint64_t first_index,
                   std::span<double> out);
void neg_log_avx2(std::span<double> x);
void less_than_mask_avx2(std::span<const double> x, double threshold,
                         std::span<uint8_t> out);

// Shared element functions; both backends reduce to these semantics.
double neg_log_u01_element(double u);
}  // namespace detail

}  // namespace calib::kernels
