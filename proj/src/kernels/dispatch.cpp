#include <cstdlib>
#include <stdexcept>
#include <string>

#include "calib/kernels/kernels.hpp"

namespace calib::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(CALIB_KERNELS_AVX2_COMPILED) && (defined(__GNUC__) || defined(__clang__))
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Backend initial_backend() {
    if (const char* env = std::getenv("CALIB_KERNELS")) {
        const std::string v(env);
        if (v == "scalar") return Backend::Scalar;
        if (v == "avx2" && cpu_has_avx2_fma()) return Backend::Avx2;
    }
    return cpu_has_avx2_fma() ? Backend::Avx2 : Backend::Scalar;
}

Backend& backend_ref() {
    static Backend b = initial_backend();
    return b;
}

}  // namespace

Backend active_backend() { return backend_ref(); }

bool backend_supported(Backend b) {
    return b == Backend::Scalar || cpu_has_avx2_fma();
}

void set_backend(Backend b) {
    if (!backend_supported(b)) {
        throw std::runtime_error("kernel backend not supported on this CPU: " +
                                 backend_name(b));
    }
    backend_ref() = b;
}

std::string backend_name(Backend b) {
    return b == Backend::Scalar ? "scalar" : "avx2";
}

void fill_u01(uint64_t seed, uint64_t stream, uint64_t first_index,
              std::span<double> out) {
    if (active_backend() == Backend::Avx2) {
        detail::fill_u01_avx2(seed, stream, first_index, out);
    } else {
        detail::fill_u01_scalar(seed, stream, first_index, out);
    }
}

void neg_log(std::span<double> x) {
    if (active_backend() == Backend::Avx2) {
        detail::neg_log_avx2(x);
    } else {
        detail::neg_log_scalar(x);
    }
}

void less_than_mask(std::span<const double> x, double threshold,
                    std::span<uint8_t> out) {
    if (active_backend() == Backend::Avx2) {
        detail::less_than_mask_avx2(x, threshold, out);
    } else {
        detail::less_than_mask_scalar(x, threshold, out);
    }
}

}  // namespace calib::kernels
