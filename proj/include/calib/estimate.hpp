#pragma once

// Estimation chain: background handling, weighted least-squares modulation
// fit, corrections with first-order uncertainty propagation, and the
// coincidence-ratio estimator used for cross-validation.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calib/model.hpp"

namespace calib::est {

struct FitResult {
    double W_A = 0.0;  // modulation amplitude (signed)
    double W_B = 0.0;  // mean level
    std::array<std::array<double, 2>, 2> covariance{};  // over (W_A, W_B)
    double chi2 = 0.0;
    int dof = 0;  // #points - 2
};

struct Correction {
    std::string name;
    Quantity value;
};

enum class Method { ConditionedVisibility, Klyshko };

struct EfficiencyEstimate {
    Method method = Method::ConditionedVisibility;
    Quantity eta1{};
    std::optional<Quantity> visibility;
    std::vector<Correction> corrections;
};

// Pooled background rate from pump-off records: sum(n2)/sum(T), Poisson
// uncertainty sqrt(sum n2)/sum(T). Throws ValidationError on zero duration.
Quantity estimate_background(std::span<const CountRecord> bg_records);

struct BackgroundCorrected {
    Quantity n2;          // n2 - B*T, sigma = sqrt(n2 + (u_B*T)^2)
    bool negative = false;  // diagnostic; negative values are kept (unbiased)
};

BackgroundCorrected subtract_background(const CountRecord& rec,
                                        const Quantity& background_rate);

struct AnglePoint {
    double theta_deg = 0.0;
    double y = 0.0;
    double sigma = 0.0;  // > 0
};

// Weighted linear least squares of y on {cos 2theta, 1}. Angles are treated
// as exact. Throws ValidationError for <3 points or non-positive sigma,
// NumericError for a singular design (e.g. all angles equal mod 180, or all
// at 45 mod 90).
FitResult fit_modulation(std::span<const AnglePoint> points);

// |W_A|/W_B with first-order propagation using the full fit covariance.
// The sign of W_A stays available on the FitResult as the phase check.
Quantity visibility_from_fit(const FitResult& fit);

// Non-paralyzable dead-time factor 1/(1 + W1*tau) under Poisson triggers,
// zero model uncertainty. The correction name records the path taken.
Correction dead_time_correction_factor(double W1, double tau);
// Externally measured factor, passed through unchanged.
Correction dead_time_correction_external(const Quantity& factor);

// eta1 = V / (delta * eps) with independent-input quadrature propagation.
// delta is the dead-time factor, eps the polarizer-cube transmittance.
EfficiencyEstimate eta_from_visibility(const Quantity& visibility,
                                       const Correction& delta,
                                       const Correction& eps);

// Divides eta1 by a further correction factor and widens the uncertainty by
// the factor's relative uncertainty in quadrature, appending it to the
// trail. A {1, u} entry is a pure model-uncertainty line (e.g. the
// simulation bound on the uncorrected D2 dead-time effect).
EfficiencyEstimate apply_correction(EfficiencyEstimate est,
                                    const Correction& correction);

struct NormalizedRecord {
    double theta_deg = 0.0;
    double duration = 0.0;
    uint64_t n1 = 0;
    double n2 = 0.0;  // scaled, fractional
    double nc = 0.0;  // scaled, fractional
    double scale = 1.0;
};

// Removes slow pump drift: each record's n2 and nc are scaled by
// reference_W1 * duration / n1 (D1 singles track pump power). Throws
// ValidationError if any record has n1 = 0.
std::vector<NormalizedRecord> pump_drift_normalize(
    std::span<const CountRecord> records, double reference_W1);

// Coincidence-ratio (heralded) estimator: raw efficiency = sum(nc)/sum(n2)
// on background-corrected idler counts, then divided by eps and the given
// dead-time factors. Records must be taken with the cell off at the
// coincidence-maximizing angle.
EfficiencyEstimate eta_klyshko(std::span<const CountRecord> records,
                               const Quantity& background_rate,
                               const Quantity& eps,
                               std::span<const Correction> dead_time_corrections);

// Core of the above on pooled totals, for injected or pre-corrected counts.
EfficiencyEstimate eta_klyshko_from_totals(double sum_nc, const Quantity& sum_n2,
                                           const Quantity& eps,
                                           std::span<const Correction>
                                               dead_time_corrections);

struct MethodComparison {
    double difference = 0.0;          // |a - b|
    double combined_uncertainty = 0.0;  // sqrt(u_a^2 + u_b^2)
    double normalized_error = 0.0;      // E_n
    bool agree = false;                 // E_n <= 2
};

MethodComparison compare_methods(const EfficiencyEstimate& a,
                                 const EfficiencyEstimate& b);

std::string method_name(Method m);

}  // namespace calib::est
