#include "calib/model.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <vector>

#include "json.hpp"

namespace calib {

namespace {

using nlohmann::json;

constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ValidationError(field + ": " + what);
}

void check_probability(double v, const std::string& field) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, field,
            "must be a probability in [0,1], got " + std::to_string(v));
}

void check_nonneg(double v, const std::string& field) {
    require(std::isfinite(v) && v >= 0.0, field,
            "must be finite and non-negative, got " + std::to_string(v));
}

}  // namespace

double malus_transmission_angle(double pol_angle_deg, double theta_deg) {
    const double rel = std::fmod(pol_angle_deg - theta_deg, 180.0);
    const double c = std::cos(deg2rad(rel));
    return c * c;
}

double malus_transmission(Polarization p, double theta_deg) {
    return malus_transmission_angle(polarization_angle_deg(p), theta_deg);
}

ExperimentConfig validate_config(const ExperimentConfig& cfg) {
    check_nonneg(cfg.source.pair_rate_W0, "source.pair_rate_W0");
    check_nonneg(cfg.source.background_rate_D2, "source.background_rate_D2");
    check_nonneg(cfg.source.dark_rate_D1, "source.dark_rate_D1");
    check_nonneg(cfg.source.dark_rate_D2, "source.dark_rate_D2");
    require(std::isfinite(cfg.source.pump_drift.linear_slope_per_s),
            "source.pump_drift.linear_slope_per_s", "must be finite");

    check_probability(cfg.channel.alpha_idler_transmittance,
                      "channel.alpha_idler_transmittance");
    check_nonneg(cfg.channel.fiber_delay, "channel.fiber_delay");
    require(std::isfinite(cfg.channel.epsilon_signal_transmittance) &&
                cfg.channel.epsilon_signal_transmittance > 0.0 &&
                cfg.channel.epsilon_signal_transmittance <= 1.0,
            "channel.epsilon_signal_transmittance", "must be in (0,1]");
    require(std::isfinite(cfg.channel.fiber_misalignment_angle),
            "channel.fiber_misalignment_angle", "must be finite");

    check_probability(cfg.d1.eta, "d1.eta");
    check_nonneg(cfg.d1.dead_time, "d1.dead_time");
    check_probability(cfg.d2.eta, "d2.eta");
    check_nonneg(cfg.d2.dead_time, "d2.dead_time");

    check_nonneg(cfg.pockels.electronic_delay, "pockels.electronic_delay");
    check_nonneg(cfg.pockels.rise_time, "pockels.rise_time");
    check_nonneg(cfg.pockels.flat_top, "pockels.flat_top");
    check_nonneg(cfg.pockels.fall_tail, "pockels.fall_tail");
    check_nonneg(cfg.pockels.driver_dead_time, "pockels.driver_dead_time");
    require(cfg.pockels.driver_dead_time >= cfg.pockels.flat_top,
            "pockels.driver_dead_time",
            "must be >= flat_top (a new trigger cannot be accepted mid-pulse)");
    require(std::isfinite(cfg.pockels.rate_limit) && cfg.pockels.rate_limit > 0.0,
            "pockels.rate_limit", "must be finite and positive");
    check_nonneg(cfg.pockels.inhibit_duration, "pockels.inhibit_duration");

    require(std::isfinite(cfg.coincidence_window) && cfg.coincidence_window > 0.0,
            "coincidence_window", "must be positive");
    return cfg;
}

namespace {

// Strict object reader: every key must be consumed exactly once.
class ObjectReader {
  public:
    ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object())
            throw SchemaError("config: " + path_ + " must be a JSON object");
        for (const auto& item : j_.items()) remaining_.push_back(item.key());
    }

    bool has(const std::string& key) {
        consume(key);
        return j_.contains(key);
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw SchemaError("config: bad value type for " + qualify(key));
        }
    }

    const json& child(const std::string& key) {
        consume(key);
        return j_.at(key);
    }

    std::string qualify(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish() const {
        if (!remaining_.empty())
            throw SchemaError("config: unknown key " + qualify(remaining_.front()));
    }

  private:
    void consume(const std::string& key) {
        std::erase(remaining_, key);
    }

    const json& j_;
    std::string path_;
    std::vector<std::string> remaining_;
};

json source_to_json(const SourceModel& s) {
    json j;
    j["pair_rate_W0"] = s.pair_rate_W0;
    j["background_rate_D2"] = s.background_rate_D2;
    j["dark_rate_D1"] = s.dark_rate_D1;
    j["dark_rate_D2"] = s.dark_rate_D2;
    j["pump_drift"] = json{{"linear_slope_per_s", s.pump_drift.linear_slope_per_s}};
    return j;
}

json channel_to_json(const ChannelModel& c) {
    json j;
    j["alpha_idler_transmittance"] = c.alpha_idler_transmittance;
    j["fiber_delay"] = c.fiber_delay;
    j["epsilon_signal_transmittance"] = c.epsilon_signal_transmittance;
    j["fiber_misalignment_angle"] = c.fiber_misalignment_angle;
    return j;
}

json detector_to_json(const DetectorModel& d) {
    json j;
    j["eta"] = d.eta;
    j["dead_time"] = d.dead_time;
    j["paralyzable"] = d.paralyzable;
    return j;
}

json pockels_to_json(const PockelsModel& p) {
    json j;
    j["enabled"] = p.enabled;
    j["electronic_delay"] = p.electronic_delay;
    j["rise_time"] = p.rise_time;
    j["flat_top"] = p.flat_top;
    j["fall_tail"] = p.fall_tail;
    j["driver_dead_time"] = p.driver_dead_time;
    j["rate_limit"] = p.rate_limit;
    j["inhibit_duration"] = p.inhibit_duration;
    return j;
}

SourceModel source_from_json(const json& j, const std::string& path) {
    SourceModel s;
    ObjectReader r(j, path);
    r.get("pair_rate_W0", s.pair_rate_W0);
    r.get("background_rate_D2", s.background_rate_D2);
    r.get("dark_rate_D1", s.dark_rate_D1);
    r.get("dark_rate_D2", s.dark_rate_D2);
    if (r.has("pump_drift")) {
        ObjectReader rd(r.child("pump_drift"), path + ".pump_drift");
        rd.get("linear_slope_per_s", s.pump_drift.linear_slope_per_s);
        rd.finish();
    }
    r.finish();
    return s;
}

ChannelModel channel_from_json(const json& j, const std::string& path) {
    ChannelModel c;
    ObjectReader r(j, path);
    r.get("alpha_idler_transmittance", c.alpha_idler_transmittance);
    r.get("fiber_delay", c.fiber_delay);
    r.get("epsilon_signal_transmittance", c.epsilon_signal_transmittance);
    r.get("fiber_misalignment_angle", c.fiber_misalignment_angle);
    r.finish();
    return c;
}

DetectorModel detector_from_json(const json& j, const std::string& path) {
    DetectorModel d;
    ObjectReader r(j, path);
    r.get("eta", d.eta);
    r.get("dead_time", d.dead_time);
    r.get("paralyzable", d.paralyzable);
    r.finish();
    return d;
}

PockelsModel pockels_from_json(const json& j, const std::string& path) {
    PockelsModel p;
    ObjectReader r(j, path);
    r.get("enabled", p.enabled);
    r.get("electronic_delay", p.electronic_delay);
    r.get("rise_time", p.rise_time);
    r.get("flat_top", p.flat_top);
    r.get("fall_tail", p.fall_tail);
    r.get("driver_dead_time", p.driver_dead_time);
    r.get("rate_limit", p.rate_limit);
    r.get("inhibit_duration", p.inhibit_duration);
    r.finish();
    return p;
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["source"] = source_to_json(cfg.source);
    j["channel"] = channel_to_json(cfg.channel);
    j["d1"] = detector_to_json(cfg.d1);
    j["d2"] = detector_to_json(cfg.d2);
    j["pockels"] = pockels_to_json(cfg.pockels);
    j["coincidence_window"] = cfg.coincidence_window;
    return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(std::string("config: invalid JSON: ") + e.what());
    }
    ExperimentConfig cfg;
    ObjectReader r(j, "");
    if (r.has("source")) cfg.source = source_from_json(r.child("source"), "source");
    if (r.has("channel"))
        cfg.channel = channel_from_json(r.child("channel"), "channel");
    if (r.has("d1")) cfg.d1 = detector_from_json(r.child("d1"), "d1");
    if (r.has("d2")) cfg.d2 = detector_from_json(r.child("d2"), "d2");
    if (r.has("pockels"))
        cfg.pockels = pockels_from_json(r.child("pockels"), "pockels");
    r.get("coincidence_window", cfg.coincidence_window);
    r.finish();
    return validate_config(cfg);
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
    const std::string dump = config_to_json(cfg);
    uint64_t h = 0xcbf29ce484222325ull;
    for (const unsigned char c : dump) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

}  // namespace calib
