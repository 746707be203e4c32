#pragma once

// Seedable Monte Carlo engine for the conditioned-rotation protocol.
// Produces timestamped detection events and CountRecords; bit-identical
// results for identical (config, theta, duration, seed), on any kernel
// backend and with any thread count.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "calib/model.hpp"

namespace calib::sim {

struct PairEvent {
    double t = 0.0;  // emission time, s from run start
    Polarization signal_pol = Polarization::H;
    Polarization idler_pol = Polarization::V;  // always flip(signal_pol)
};

struct EventTimeline {
    std::vector<double> d1_hits;           // accepted D1 detections
    std::vector<double> pockels_triggers;  // accepted triggers, as the D1 hit
                                           // times that fired the driver
    std::vector<double> d2_hits;           // accepted D2 detections
    std::vector<std::pair<double, double>> inhibit_intervals;
};

// Homogeneous Poisson process of rate `rate` on [0, duration), drawn from
// stream (seed, stream). Exposed for tests; pair generation, dark counts and
// background all go through this.
std::vector<double> poisson_event_times(double rate, double duration,
                                        uint64_t seed, uint64_t stream);

// Poisson pair emissions at rate W0 * drift_factor; each pair is
// (signal V, idler H) or (signal H, idler V) with probability 1/2.
std::vector<PairEvent> generate_pair_events(double W0, double duration,
                                            double drift_factor, uint64_t seed);

// Dead-time filter. Non-paralyzable: accept iff the gap since the last
// accepted event is >= tau. Paralyzable: iff the gap since the last event of
// any kind is >= tau. Input must be strictly increasing (ValidationError).
std::vector<double> apply_dead_time(std::span<const double> times, double tau,
                                    bool paralyzable);

// True iff `arrival` lies inside the full-rotation window
// [t + electronic_delay + rise_time, ... + flat_top] of some accepted
// trigger. Triggers are raw D1 hit times; windows are disjoint because the
// driver dead time is at least the flat-top.
bool pockels_flip_decision(std::span<const double> trigger_times, double arrival,
                           const PockelsModel& pc);

// Full protocol cascade for one polarizer setting. See module docs for the
// event pipeline; validates cfg, requires duration > 0.
CountRecord simulate_run(const ExperimentConfig& cfg, double theta_deg,
                         double duration, uint64_t seed);

struct RunResult {
    CountRecord record;
    EventTimeline timeline;
};

RunResult simulate_run_detailed(const ExperimentConfig& cfg, double theta_deg,
                                double duration, uint64_t seed,
                                double drift_factor = 1.0);

struct SweepRecord {
    CountRecord record;
    int run_idx = 0;  // repeat index at this angle
};

struct SweepOptions {
    int repeats = 1;
    // Override cfg.pockels.enabled when set: 0 = off, 1 = on, -1 = keep.
    int pc_override = -1;
};

// One simulate_run per (theta, repeat) with per-record seeds derived from
// base_seed. Acquisition order is all repeats of theta[0], then theta[1], ...;
// pump drift is sampled at each record's midpoint in that schedule. Records
// are returned sorted by (theta index, run_idx). Runs execute concurrently
// (CALIB_THREADS to cap); results do not depend on thread count.
std::vector<SweepRecord> sweep(const ExperimentConfig& cfg,
                               std::span<const double> theta_list,
                               double duration, uint64_t base_seed,
                               const SweepOptions& opt);

// Spec shorthand: one record per theta, repeats = 1.
std::vector<CountRecord> sweep(const ExperimentConfig& cfg,
                               std::span<const double> theta_list,
                               double duration, uint64_t base_seed);

}  // namespace calib::sim
