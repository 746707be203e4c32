#pragma once

// Closed-form expected rates for the conditioned-rotation protocol. These
// are the reference curves the Monte Carlo engine and the estimators are
// checked against. Pure functions, no dead-time or background effects.

#include "calib/model.hpp"

namespace calib::analytic {

struct RateParams {
    double W0 = 0.0;       // pair rate, pairs/s
    double eta1 = 0.0;     // efficiency under calibration (D1)
    double eta2 = 0.0;     // D2 efficiency
    double alpha = 1.0;    // idler path transmittance
    double epsilon = 1.0;  // signal polarizing-cube transmittance

    static RateParams from_config(const ExperimentConfig& cfg) {
        return {cfg.source.pair_rate_W0, cfg.d1.eta, cfg.d2.eta,
                cfg.channel.alpha_idler_transmittance,
                cfg.channel.epsilon_signal_transmittance};
    }
};

// D2 singles rate. Conditioned: (alpha*eta2*W0/2) * (1 - eps*eta1*cos 2theta);
// unconditioned: the flat value alpha*eta2*W0/2. The modulation depth is
// eps*eta1 because D1 fires only on photons transmitted by the cube.
double expected_rate_d2(double theta_deg, const RateParams& p, bool pc_enabled);

// D1-D2 coincidence rate: (W0/2)*eps*eta1*alpha*eta2 * cos^2(theta) without
// cell control (heralded idler is H), sin^2(theta) with control (flipped to V).
double expected_coincidence_rate(double theta_deg, const RateParams& p,
                                 bool pc_enabled);

// (w_max - w_min) / (w_max + w_min). Throws NumericError when both extrema
// are zero, ValidationError when w_min > w_max or either is negative.
double visibility_from_extrema(double w_max, double w_min);

}  // namespace calib::analytic
