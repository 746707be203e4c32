#include "calib/analytic.hpp"

#include <cmath>
#include <numbers>

namespace calib::analytic {

namespace {
double cos_2theta(double theta_deg) {
    return std::cos(2.0 * theta_deg * std::numbers::pi / 180.0);
}
}  // namespace

double expected_rate_d2(double theta_deg, const RateParams& p, bool pc_enabled) {
    const double flat = 0.5 * p.alpha * p.eta2 * p.W0;
    if (!pc_enabled) return flat;
    return flat * (1.0 - p.epsilon * p.eta1 * cos_2theta(theta_deg));
}

double expected_coincidence_rate(double theta_deg, const RateParams& p,
                                 bool pc_enabled) {
    const double scale = 0.5 * p.W0 * p.epsilon * p.eta1 * p.alpha * p.eta2;
    const double c2 = cos_2theta(theta_deg);
    // cos^2 = (1+cos 2theta)/2, sin^2 = (1-cos 2theta)/2
    return pc_enabled ? scale * 0.5 * (1.0 - c2) : scale * 0.5 * (1.0 + c2);
}

double visibility_from_extrema(double w_max, double w_min) {
    if (!(w_min >= 0.0) || !(w_max >= 0.0))
        throw ValidationError("visibility_from_extrema: rates must be non-negative");
    if (w_min > w_max)
        throw ValidationError(
            "visibility_from_extrema: w_min exceeds w_max (argument order)");
    const double sum = w_max + w_min;
    if (sum <= 0.0)
        throw NumericError("visibility_from_extrema: undefined for zero extrema");
    return (w_max - w_min) / sum;
}

}  // namespace calib::analytic
