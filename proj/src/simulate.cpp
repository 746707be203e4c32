#include "calib/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <deque>
#include <future>
#include <limits>
#include <thread>

#include "calib/kernels/kernels.hpp"
#include "calib/kernels/philox.hpp"

namespace calib::sim {

namespace {

// Stream ids within one run's seed. Streams 0-2 and 4 feed the D1 side and
// are consumed identically whether or not the cell is controlled, so
// conditioning is one-directional by construction.
constexpr uint64_t kStreamPairGap = 0;
constexpr uint64_t kStreamPairPol = 1;
constexpr uint64_t kStreamPairD1 = 2;
constexpr uint64_t kStreamPairIdler = 3;
constexpr uint64_t kStreamDarkD1 = 4;
constexpr uint64_t kStreamBgD2 = 5;

constexpr size_t kChunk = 8192;

std::vector<double> merge_strictly_increasing(const std::vector<double>& a,
                                              const std::vector<double>& b) {
    std::vector<double> out;
    out.reserve(a.size() + b.size());
    std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    // Coincident pulses are one pulse.
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

struct DriverResult {
    std::vector<double> triggers;
    std::vector<std::pair<double, double>> inhibits;
};

// Driver electronics: accepted D1 hits become triggers unless inside the
// driver dead time or an inhibit interval. More than rate_limit accepted
// triggers within a trailing second trips an inhibit of inhibit_duration;
// the trigger that trips the limit has already fired and stays accepted.
DriverResult driver_scan(const std::vector<double>& d1_hits,
                         const PockelsModel& pc) {
    DriverResult res;
    if (!pc.enabled) return res;
    double last_trigger = -std::numeric_limits<double>::infinity();
    double inhibit_until = -std::numeric_limits<double>::infinity();
    std::deque<double> trailing;
    for (const double t : d1_hits) {
        if (t < inhibit_until) continue;
        if (t - last_trigger < pc.driver_dead_time) continue;
        res.triggers.push_back(t);
        last_trigger = t;
        while (!trailing.empty() && trailing.front() < t - 1.0) trailing.pop_front();
        trailing.push_back(t);
        if (static_cast<double>(trailing.size()) > pc.rate_limit) {
            inhibit_until = t + pc.inhibit_duration;
            res.inhibits.emplace_back(t, inhibit_until);
            trailing.clear();
        }
    }
    return res;
}

int thread_budget(size_t jobs) {
    unsigned hw = std::thread::hardware_concurrency();
    if (hw == 0) hw = 1;
    if (const char* env = std::getenv("CALIB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) hw = static_cast<unsigned>(v);
    }
    return static_cast<int>(std::min<size_t>(hw, jobs));
}

}  // namespace

std::vector<double> poisson_event_times(double rate, double duration,
                                        uint64_t seed, uint64_t stream) {
    std::vector<double> times;
    if (rate <= 0.0 || duration <= 0.0) return times;
    times.reserve(static_cast<size_t>(std::min(rate * duration * 1.1 + 64.0, 1e8)));
    std::vector<double> buf(kChunk);
    double t = 0.0;
    for (uint64_t start = 0;; start += kChunk) {
        kernels::fill_u01(seed, stream, start, buf);
        kernels::neg_log(buf);
        for (const double g : buf) {
            t += g / rate;
            if (t >= duration) return times;
            times.push_back(t);
        }
    }
}

std::vector<PairEvent> generate_pair_events(double W0, double duration,
                                            double drift_factor, uint64_t seed) {
    const std::vector<double> times =
        poisson_event_times(W0 * drift_factor, duration, seed, kStreamPairGap);
    std::vector<PairEvent> events(times.size());
    std::vector<double> u(kChunk);
    std::vector<uint8_t> v_mask(kChunk);
    for (size_t start = 0; start < times.size(); start += kChunk) {
        const size_t len = std::min(kChunk, times.size() - start);
        kernels::fill_u01(seed, kStreamPairPol, start, std::span(u).first(len));
        kernels::less_than_mask(std::span(u).first(len), 0.5,
                                std::span(v_mask).first(len));
        for (size_t i = 0; i < len; ++i) {
            const Polarization sig =
                v_mask[i] ? Polarization::V : Polarization::H;
            events[start + i] = {times[start + i], sig, flip(sig)};
        }
    }
    return events;
}

std::vector<double> apply_dead_time(std::span<const double> times, double tau,
                                    bool paralyzable) {
    std::vector<double> accepted;
    accepted.reserve(times.size());
    double prev = -std::numeric_limits<double>::infinity();
    double ref = -std::numeric_limits<double>::infinity();
    for (const double t : times) {
        if (t <= prev)
            throw ValidationError("apply_dead_time: input not strictly increasing");
        prev = t;
        if (t - ref >= tau || ref == -std::numeric_limits<double>::infinity()) {
            accepted.push_back(t);
            ref = t;
        } else if (paralyzable) {
            ref = t;
        }
    }
    return accepted;
}

bool pockels_flip_decision(std::span<const double> trigger_times, double arrival,
                           const PockelsModel& pc) {
    const double offset = pc.electronic_delay + pc.rise_time;
    // Last trigger whose window start is at or before the arrival; windows
    // are disjoint, so it is the only candidate.
    auto it = std::upper_bound(trigger_times.begin(), trigger_times.end(),
                               arrival - offset);
    if (it == trigger_times.begin()) return false;
    const double start = *(it - 1) + offset;
    return arrival >= start && arrival <= start + pc.flat_top;
}

RunResult simulate_run_detailed(const ExperimentConfig& cfg_in, double theta_deg,
                                double duration, uint64_t seed,
                                double drift_factor) {
    const ExperimentConfig cfg = validate_config(cfg_in);
    if (!(duration > 0.0))
        throw ValidationError("simulate_run: duration must be positive");

    const double w0_eff = cfg.source.pair_rate_W0 * drift_factor;
    const std::vector<double> pair_times =
        poisson_event_times(w0_eff, duration, seed, kStreamPairGap);
    const size_t n_pairs = pair_times.size();

    const double p_d1 =
        cfg.channel.epsilon_signal_transmittance * cfg.d1.eta;

    // Signal arm: V-polarized signal photons reach D1 through the cube.
    std::vector<double> d1_candidates;
    d1_candidates.reserve(static_cast<size_t>(0.6 * p_d1 * n_pairs) + 64);
    {
        std::vector<double> u(kChunk);
        std::vector<uint8_t> v_mask(kChunk), fire_mask(kChunk);
        for (size_t start = 0; start < n_pairs; start += kChunk) {
            const size_t len = std::min(kChunk, n_pairs - start);
            kernels::fill_u01(seed, kStreamPairPol, start, std::span(u).first(len));
            kernels::less_than_mask(std::span(u).first(len), 0.5,
                                    std::span(v_mask).first(len));
            kernels::fill_u01(seed, kStreamPairD1, start, std::span(u).first(len));
            kernels::less_than_mask(std::span(u).first(len), p_d1,
                                    std::span(fire_mask).first(len));
            for (size_t i = 0; i < len; ++i) {
                if (v_mask[i] && fire_mask[i])
                    d1_candidates.push_back(pair_times[start + i]);
            }
        }
    }
    const std::vector<double> d1_darks = poisson_event_times(
        cfg.source.dark_rate_D1, duration, seed, kStreamDarkD1);
    const std::vector<double> d1_all =
        merge_strictly_increasing(d1_candidates, d1_darks);
    std::vector<double> d1_hits =
        apply_dead_time(d1_all, cfg.d1.dead_time, cfg.d1.paralyzable);

    DriverResult driver = driver_scan(d1_hits, cfg.pockels);

    // Idler arm. Survival probability through polarizer, channel and D2 for
    // the four (idler polarization, flipped) cases; the cell acts as a
    // half-wave plate at 45 degrees, psi -> 90 - psi, and the fiber
    // pre-rotates by the misalignment angle.
    const double phi = cfg.channel.fiber_misalignment_angle;
    const double ae = cfg.channel.alpha_idler_transmittance * cfg.d2.eta;
    const double p_h_unflipped = malus_transmission_angle(phi, theta_deg) * ae;
    const double p_v_unflipped =
        malus_transmission_angle(90.0 + phi, theta_deg) * ae;
    const double p_h_flipped =
        malus_transmission_angle(90.0 - phi, theta_deg) * ae;
    const double p_v_flipped = malus_transmission_angle(-phi, theta_deg) * ae;

    const double window_offset =
        cfg.pockels.electronic_delay + cfg.pockels.rise_time;
    const double flat_top = cfg.pockels.flat_top;
    const std::vector<double>& triggers = driver.triggers;

    std::vector<double> d2_pair_hits;
    d2_pair_hits.reserve(static_cast<size_t>(0.6 * ae * n_pairs) + 64);
    {
        std::vector<double> pol_u(kChunk), idler_u(kChunk);
        std::vector<uint8_t> v_mask(kChunk);
        size_t w = 0;  // two-pointer over flip windows
        for (size_t start = 0; start < n_pairs; start += kChunk) {
            const size_t len = std::min(kChunk, n_pairs - start);
            kernels::fill_u01(seed, kStreamPairPol, start,
                              std::span(pol_u).first(len));
            kernels::less_than_mask(std::span(pol_u).first(len), 0.5,
                                    std::span(v_mask).first(len));
            kernels::fill_u01(seed, kStreamPairIdler, start,
                              std::span(idler_u).first(len));
            for (size_t i = 0; i < len; ++i) {
                const double arrival =
                    pair_times[start + i] + cfg.channel.fiber_delay;
                while (w < triggers.size() &&
                       triggers[w] + window_offset + flat_top < arrival)
                    ++w;
                const bool flipped =
                    w < triggers.size() && triggers[w] + window_offset <= arrival &&
                    arrival <= triggers[w] + window_offset + flat_top;
                // idler is H when the signal is V
                const double p =
                    v_mask[i] ? (flipped ? p_h_flipped : p_h_unflipped)
                              : (flipped ? p_v_flipped : p_v_unflipped);
                if (idler_u[i] < p) d2_pair_hits.push_back(arrival);
            }
        }
    }
    const std::vector<double> d2_bg = poisson_event_times(
        cfg.source.background_rate_D2 + cfg.source.dark_rate_D2, duration, seed,
        kStreamBgD2);
    const std::vector<double> d2_all =
        merge_strictly_increasing(d2_pair_hits, d2_bg);
    std::vector<double> d2_hits =
        apply_dead_time(d2_all, cfg.d2.dead_time, cfg.d2.paralyzable);

    // Delay-compensated coincidences: a D2 hit matches a D1 hit when
    // |t2 - t1 - fiber_delay| <= window/2; greedy matching on the sorted
    // streams, each hit used at most once.
    uint64_t nc = 0;
    {
        const double lag = cfg.channel.fiber_delay;
        const double half = 0.5 * cfg.coincidence_window;
        size_t i = 0, j = 0;
        while (i < d1_hits.size() && j < d2_hits.size()) {
            const double d = d2_hits[j] - (d1_hits[i] + lag);
            if (std::abs(d) <= half) {
                ++nc;
                ++i;
                ++j;
            } else if (d > 0.0) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    RunResult out;
    out.record = {theta_deg,
                  duration,
                  d1_hits.size(),
                  d2_hits.size(),
                  nc,
                  cfg.pockels.enabled,
                  seed};
    out.timeline.d1_hits = std::move(d1_hits);
    out.timeline.pockels_triggers = std::move(driver.triggers);
    out.timeline.d2_hits = std::move(d2_hits);
    out.timeline.inhibit_intervals = std::move(driver.inhibits);
    return out;
}

CountRecord simulate_run(const ExperimentConfig& cfg, double theta_deg,
                         double duration, uint64_t seed) {
    return simulate_run_detailed(cfg, theta_deg, duration, seed, 1.0).record;
}

std::vector<SweepRecord> sweep(const ExperimentConfig& cfg_in,
                               std::span<const double> theta_list,
                               double duration, uint64_t base_seed,
                               const SweepOptions& opt) {
    if (theta_list.empty())
        throw ValidationError("sweep: theta_list must not be empty");
    if (opt.repeats < 1) throw ValidationError("sweep: repeats must be >= 1");
    ExperimentConfig cfg = cfg_in;
    if (opt.pc_override >= 0) cfg.pockels.enabled = opt.pc_override != 0;
    validate_config(cfg);

    const size_t n = theta_list.size() * static_cast<size_t>(opt.repeats);
    std::vector<SweepRecord> records(n);
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (size_t g = next.fetch_add(1); g < n; g = next.fetch_add(1)) {
            const size_t angle_idx = g / static_cast<size_t>(opt.repeats);
            const int rep = static_cast<int>(g % static_cast<size_t>(opt.repeats));
            const uint64_t seed = kernels::derive_seed(base_seed, g);
            const double t_mid = (static_cast<double>(g) + 0.5) * duration;
            const double drift = cfg.source.pump_drift.factor_at(t_mid);
            records[g].record = simulate_run_detailed(cfg, theta_list[angle_idx],
                                                      duration, seed, drift)
                                    .record;
            records[g].run_idx = rep;
        }
    };
    const int workers = thread_budget(n);
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::future<void>> futs;
        futs.reserve(static_cast<size_t>(workers));
        for (int k = 0; k < workers; ++k)
            futs.push_back(std::async(std::launch::async, worker));
        for (auto& f : futs) f.get();
    }
    return records;
}

std::vector<CountRecord> sweep(const ExperimentConfig& cfg,
                               std::span<const double> theta_list,
                               double duration, uint64_t base_seed) {
    const auto recs = sweep(cfg, theta_list, duration, base_seed, SweepOptions{});
    std::vector<CountRecord> out;
    out.reserve(recs.size());
    for (const auto& r : recs) out.push_back(r.record);
    return out;
}

}  // namespace calib::sim
