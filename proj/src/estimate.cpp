#include "calib/estimate.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace calib::est {

namespace {

constexpr double kEtaSlack = 1.05;  // statistical overshoot allowance

void check_quantity_positive(const Quantity& q, const std::string& name) {
    if (!(q.value > 0.0) || !std::isfinite(q.value))
        throw ValidationError(name + ": must be positive");
    if (!(q.std_uncertainty >= 0.0) || !std::isfinite(q.std_uncertainty))
        throw ValidationError(name + ": uncertainty must be non-negative");
}

Quantity checked_eta(double value, double rel_u, const std::string& who) {
    if (!(value >= 0.0) || value > kEtaSlack)
        throw NumericError(who + ": eta1 = " + std::to_string(value) +
                           " outside [0, 1.05]");
    return {value, value * rel_u};
}

}  // namespace

Quantity estimate_background(std::span<const CountRecord> bg_records) {
    double total_n2 = 0.0;
    double total_t = 0.0;
    for (const auto& r : bg_records) {
        total_n2 += static_cast<double>(r.n2);
        total_t += r.duration;
    }
    if (!(total_t > 0.0))
        throw ValidationError("estimate_background: zero total duration");
    return {total_n2 / total_t, std::sqrt(total_n2) / total_t};
}

BackgroundCorrected subtract_background(const CountRecord& rec,
                                        const Quantity& background_rate) {
    if (background_rate.value < 0.0)
        throw ValidationError("subtract_background: negative background rate");
    const double expected_bg = background_rate.value * rec.duration;
    const double value = static_cast<double>(rec.n2) - expected_bg;
    const double u_bg = background_rate.std_uncertainty * rec.duration;
    const double u = std::sqrt(static_cast<double>(rec.n2) + u_bg * u_bg);
    return {{value, u}, value < 0.0};
}

FitResult fit_modulation(std::span<const AnglePoint> points) {
    if (points.size() < 3)
        throw ValidationError("fit_modulation: need at least 3 points");
    double s_w = 0.0, s_wx = 0.0, s_wxx = 0.0, s_wy = 0.0, s_wxy = 0.0;
    for (const auto& p : points) {
        if (!(p.sigma > 0.0))
            throw ValidationError("fit_modulation: sigma must be positive");
        const double x = std::cos(2.0 * p.theta_deg * std::numbers::pi / 180.0);
        const double w = 1.0 / (p.sigma * p.sigma);
        s_w += w;
        s_wx += w * x;
        s_wxx += w * x * x;
        s_wy += w * p.y;
        s_wxy += w * x * p.y;
    }
    const double det = s_wxx * s_w - s_wx * s_wx;
    // rank checks: a numerically vanishing cos(2 theta) column (all angles
    // at 45 mod 90), or collinear columns (a single angle mod 180)
    if (!(s_wxx > 1e-24 * s_w) || !(det > 1e-12 * std::max(s_wxx * s_w, 1e-300)))
        throw NumericError("fit_modulation: singular design (angles do not "
                           "separate amplitude from mean)");
    FitResult fit;
    fit.W_A = (s_w * s_wxy - s_wx * s_wy) / det;
    fit.W_B = (s_wxx * s_wy - s_wx * s_wxy) / det;
    fit.covariance[0][0] = s_w / det;
    fit.covariance[0][1] = -s_wx / det;
    fit.covariance[1][0] = -s_wx / det;
    fit.covariance[1][1] = s_wxx / det;
    double chi2 = 0.0;
    for (const auto& p : points) {
        const double x = std::cos(2.0 * p.theta_deg * std::numbers::pi / 180.0);
        const double r = (p.y - fit.W_A * x - fit.W_B) / p.sigma;
        chi2 += r * r;
    }
    fit.chi2 = chi2;
    fit.dof = static_cast<int>(points.size()) - 2;
    return fit;
}

Quantity visibility_from_fit(const FitResult& fit) {
    if (!(fit.W_B > 0.0))
        throw NumericError("visibility_from_fit: mean level W_B must be positive");
    const double value = std::abs(fit.W_A) / fit.W_B;
    const double sign = fit.W_A < 0.0 ? -1.0 : 1.0;
    // gradient of |W_A|/W_B over (W_A, W_B)
    const double ga = sign / fit.W_B;
    const double gb = -value / fit.W_B;
    const double var = ga * ga * fit.covariance[0][0] +
                       2.0 * ga * gb * fit.covariance[0][1] +
                       gb * gb * fit.covariance[1][1];
    return {value, std::sqrt(std::max(var, 0.0))};
}

Correction dead_time_correction_factor(double W1, double tau) {
    if (!(W1 >= 0.0) || !(tau >= 0.0))
        throw ValidationError("dead_time_correction_factor: W1 and tau must be "
                              "non-negative");
    return {"dead_time(model)", {1.0 / (1.0 + W1 * tau), 0.0}};
}

Correction dead_time_correction_external(const Quantity& factor) {
    check_quantity_positive(factor, "dead_time_correction_external");
    return {"dead_time(external)", factor};
}

EfficiencyEstimate eta_from_visibility(const Quantity& visibility,
                                       const Correction& delta,
                                       const Correction& eps) {
    check_quantity_positive(visibility, "eta_from_visibility: visibility");
    check_quantity_positive(delta.value, "eta_from_visibility: delta");
    check_quantity_positive(eps.value, "eta_from_visibility: eps");
    if (delta.value.value > 1.0 || eps.value.value > 1.0)
        throw ValidationError("eta_from_visibility: corrections must be in (0,1]");
    if (visibility.value > delta.value.value * eps.value.value * kEtaSlack)
        throw ValidationError(
            "eta_from_visibility: visibility exceeds correction product beyond "
            "statistical slack");
    const double value =
        visibility.value / (delta.value.value * eps.value.value);
    const double rel = std::sqrt(
        std::pow(visibility.std_uncertainty / visibility.value, 2) +
        std::pow(delta.value.std_uncertainty / delta.value.value, 2) +
        std::pow(eps.value.std_uncertainty / eps.value.value, 2));
    EfficiencyEstimate est;
    est.method = Method::ConditionedVisibility;
    est.eta1 = checked_eta(value, rel, "eta_from_visibility");
    est.visibility = visibility;
    est.corrections.push_back(delta);
    est.corrections.push_back({"polarizer_loss", eps.value});
    return est;
}

EfficiencyEstimate apply_correction(EfficiencyEstimate est,
                                    const Correction& correction) {
    check_quantity_positive(correction.value, "apply_correction: " + correction.name);
    const double value = est.eta1.value / correction.value.value;
    const double rel_old =
        est.eta1.value > 0.0 ? est.eta1.std_uncertainty / est.eta1.value : 0.0;
    const double rel_corr =
        correction.value.std_uncertainty / correction.value.value;
    const double rel = std::sqrt(rel_old * rel_old + rel_corr * rel_corr);
    est.eta1 = checked_eta(value, rel, "apply_correction");
    est.corrections.push_back(correction);
    return est;
}

std::vector<NormalizedRecord> pump_drift_normalize(
    std::span<const CountRecord> records, double reference_W1) {
    if (!(reference_W1 > 0.0))
        throw ValidationError("pump_drift_normalize: reference_W1 must be positive");
    std::vector<NormalizedRecord> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (r.n1 == 0)
            throw ValidationError("pump_drift_normalize: record with n1 = 0");
        const double scale =
            reference_W1 * r.duration / static_cast<double>(r.n1);
        out.push_back({r.theta_deg, r.duration, r.n1,
                       static_cast<double>(r.n2) * scale,
                       static_cast<double>(r.nc) * scale, scale});
    }
    return out;
}

EfficiencyEstimate eta_klyshko_from_totals(
    double sum_nc, const Quantity& sum_n2, const Quantity& eps,
    std::span<const Correction> dead_time_corrections) {
    if (!(sum_n2.value > 0.0))
        throw NumericError("eta_klyshko: no idler counts after correction");
    check_quantity_positive(eps, "eta_klyshko: eps");
    const double raw = sum_nc / sum_n2.value;
    // binomial on nc given n2, plus the corrected-denominator uncertainty
    const double var_binom =
        std::max(raw * (1.0 - raw), 0.0) / sum_n2.value;
    const double rel_n2 = sum_n2.std_uncertainty / sum_n2.value;
    const double u_raw = std::sqrt(var_binom + raw * raw * rel_n2 * rel_n2);

    double divisor = eps.value;
    double rel2 = std::pow(eps.std_uncertainty / eps.value, 2);
    if (raw > 0.0) rel2 += std::pow(u_raw / raw, 2);
    EfficiencyEstimate est;
    est.method = Method::Klyshko;
    est.corrections.push_back({"polarizer_loss", eps});
    for (const auto& c : dead_time_corrections) {
        check_quantity_positive(c.value, "eta_klyshko: " + c.name);
        divisor *= c.value.value;
        rel2 += std::pow(c.value.std_uncertainty / c.value.value, 2);
        est.corrections.push_back(c);
    }
    const double value = raw / divisor;
    est.eta1 = checked_eta(value, std::sqrt(rel2), "eta_klyshko");
    return est;
}

EfficiencyEstimate eta_klyshko(std::span<const CountRecord> records,
                               const Quantity& background_rate,
                               const Quantity& eps,
                               std::span<const Correction> dead_time_corrections) {
    double sum_nc = 0.0, sum_n2 = 0.0, sum_t = 0.0;
    for (const auto& r : records) {
        sum_nc += static_cast<double>(r.nc);
        sum_n2 += static_cast<double>(r.n2);
        sum_t += r.duration;
    }
    if (sum_n2 <= 0.0) throw NumericError("eta_klyshko: sum(n2) = 0");
    const double bg = background_rate.value * sum_t;
    const double u_bg = background_rate.std_uncertainty * sum_t;
    const Quantity corrected{sum_n2 - bg, std::sqrt(sum_n2 + u_bg * u_bg)};
    auto est = eta_klyshko_from_totals(sum_nc, corrected, eps,
                                       dead_time_corrections);
    est.corrections.insert(est.corrections.begin(),
                           {"background", background_rate});
    return est;
}

MethodComparison compare_methods(const EfficiencyEstimate& a,
                                 const EfficiencyEstimate& b) {
    MethodComparison cmp;
    cmp.difference = std::abs(a.eta1.value - b.eta1.value);
    cmp.combined_uncertainty =
        std::hypot(a.eta1.std_uncertainty, b.eta1.std_uncertainty);
    cmp.normalized_error = cmp.combined_uncertainty > 0.0
                               ? cmp.difference / cmp.combined_uncertainty
                               : (cmp.difference == 0.0 ? 0.0
                                                        : std::numeric_limits<
                                                              double>::infinity());
    cmp.agree = cmp.normalized_error <= 2.0;
    return cmp;
}

std::string method_name(Method m) {
    return m == Method::ConditionedVisibility ? "conditioned_visibility"
                                              : "klyshko";
}

}  // namespace calib::est
