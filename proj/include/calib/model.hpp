#pragma once

// Domain types shared by the whole toolkit: experiment configuration,
// polarization algebra, count records, and value-with-uncertainty.
// All types are immutable values after validation and safe to share
// across threads.

#include <cstdint>
#include <optional>
#include <string>

#include "calib/errors.hpp"

namespace calib {

enum class Polarization { H, V };

constexpr Polarization flip(Polarization p) {
    return p == Polarization::H ? Polarization::V : Polarization::H;
}

// Polarization angle from horizontal, degrees. H = 0, V = 90.
constexpr double polarization_angle_deg(Polarization p) {
    return p == Polarization::H ? 0.0 : 90.0;
}

// Malus-law transmission through the analysis polarizer at theta_deg,
// theta = 0 transmitting horizontal fully. Angle is reduced modulo 180.
double malus_transmission(Polarization p, double theta_deg);

// Transmission for an arbitrary polarization angle (degrees from horizontal).
double malus_transmission_angle(double pol_angle_deg, double theta_deg);

// Multiplicative pump-power drift, evaluated once per record at the record's
// midpoint in acquisition time: factor(t) = max(0, 1 + linear_slope_per_s * t).
struct PumpDrift {
    double linear_slope_per_s = 0.0;

    double factor_at(double t_seconds) const {
        const double f = 1.0 + linear_slope_per_s * t_seconds;
        return f > 0.0 ? f : 0.0;
    }
};

struct SourceModel {
    double pair_rate_W0 = 10000.0;   // photon pairs per second
    double background_rate_D2 = 0.0; // stray-light counts/s on D2
    double dark_rate_D1 = 0.0;       // counts/s
    double dark_rate_D2 = 0.0;       // counts/s
    PumpDrift pump_drift{};
};

struct ChannelModel {
    double alpha_idler_transmittance = 1.0;   // fiber + cell transmittance
    double fiber_delay = 245e-9;              // s (50 m, group index 1.468)
    double epsilon_signal_transmittance = 1.0;  // polarizing-cube transmittance
    double fiber_misalignment_angle = 0.0;    // degrees, idler pre-rotation
};

struct DetectorModel {
    double eta = 0.5;        // quantum efficiency
    double dead_time = 50e-9;  // s; 50 ns is an assumed typical avalanche
                               // figure, not a measured one
    bool paralyzable = false;
};

struct PockelsModel {
    bool enabled = true;
    double electronic_delay = 150e-9;  // s; centers the flat-top on the
                                       // fiber-delayed idler arrival
    double rise_time = 5e-9;           // s
    double flat_top = 180e-9;          // s; full-rotation window
    double fall_tail = 10e-6;          // s; applies no rotation in this model
    double driver_dead_time = 10e-6;   // s; must be >= flat_top
    double rate_limit = 1e4;           // accepted triggers/s before inhibit
    double inhibit_duration = 1.0;     // s
};

struct ExperimentConfig {
    SourceModel source{};
    ChannelModel channel{};
    DetectorModel d1{};
    DetectorModel d2{};
    PockelsModel pockels{};
    double coincidence_window = 5e-9;  // s, full width
};

// Returns cfg unchanged if every invariant holds; throws ValidationError
// naming the offending field otherwise.
ExperimentConfig validate_config(const ExperimentConfig& cfg);

// One polarizer setting's counts.
struct CountRecord {
    double theta_deg = 0.0;
    double duration = 0.0;   // s, > 0
    uint64_t n1 = 0;         // D1 singles
    uint64_t n2 = 0;         // D2 singles
    uint64_t nc = 0;         // coincidences
    bool pc_enabled = false;
    uint64_t seed = 0;
};

// A value with standard uncertainty (coverage factor k = 1).
struct Quantity {
    double value = 0.0;
    double std_uncertainty = 0.0;
};

// JSON (de)serialization of ExperimentConfig. Field names are exactly the
// snake_case member names; unknown keys are rejected to catch typos in
// physics parameters. Missing keys take the defaults above.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);

// FNV-1a hash of the canonical JSON form, as a hex string. Lets reports
// carry a fingerprint of the configuration they came from.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace calib
