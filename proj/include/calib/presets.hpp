#pragma once

// Ready-made configurations used by tests, docs and the sample configs.

#include "calib/model.hpp"

namespace calib::presets {

// Dead-time-free, background-free setup with instantaneous conditioning:
// zero fiber delay and a zero-width flat-top window that still catches each
// trigger's own idler exactly (closed interval). This is the limit in which
// the simulator must reproduce the closed-form rates.
inline ExperimentConfig ideal(double eta1, double eta2 = 1.0, double alpha = 1.0,
                              double epsilon = 1.0, double pair_rate = 1e5) {
    ExperimentConfig cfg;
    cfg.source.pair_rate_W0 = pair_rate;
    cfg.source.background_rate_D2 = 0.0;
    cfg.source.dark_rate_D1 = 0.0;
    cfg.source.dark_rate_D2 = 0.0;
    cfg.channel.alpha_idler_transmittance = alpha;
    cfg.channel.fiber_delay = 0.0;
    cfg.channel.epsilon_signal_transmittance = epsilon;
    cfg.channel.fiber_misalignment_angle = 0.0;
    cfg.d1 = {eta1, 0.0, false};
    cfg.d2 = {eta2, 0.0, false};
    cfg.pockels.enabled = true;
    cfg.pockels.electronic_delay = 0.0;
    cfg.pockels.rise_time = 0.0;
    cfg.pockels.flat_top = 0.0;
    cfg.pockels.fall_tail = 0.0;
    cfg.pockels.driver_dead_time = 0.0;
    cfg.pockels.rate_limit = 1e15;
    cfg.pockels.inhibit_duration = 1.0;
    cfg.coincidence_window = 5e-9;
    return cfg;
}

// Apparatus-like setup: D1 singles near 4e3/s, 640/s background on D2,
// 10 us driver dead time, realistic window timing. The unpublished scales
// (pair rate, idler transmittance, dark rates) are plausible assumptions.
inline ExperimentConfig paper_like() {
    ExperimentConfig cfg;
    cfg.source.pair_rate_W0 = 16500.0;
    cfg.source.background_rate_D2 = 640.0;
    cfg.source.dark_rate_D1 = 100.0;
    cfg.source.dark_rate_D2 = 0.0;
    cfg.channel.alpha_idler_transmittance = 0.35;
    cfg.channel.fiber_delay = 245e-9;
    cfg.channel.epsilon_signal_transmittance = 0.984;
    cfg.channel.fiber_misalignment_angle = 0.0;
    cfg.d1 = {0.48, 50e-9, false};
    cfg.d2 = {0.5, 50e-9, false};
    cfg.pockels = PockelsModel{};  // defaults match the apparatus timing
    cfg.coincidence_window = 5e-9;
    return cfg;
}

}  // namespace calib::presets
