#pragma once

// File formats: counts CSV, analytic-oracle CSV, JSON reports. All output
// is deterministic: fixed column order, shortest-round-trip doubles, sorted
// JSON keys, no timestamps.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "calib/estimate.hpp"
#include "calib/model.hpp"
#include "calib/simulate.hpp"

namespace calib::io {

struct CountRow {
    CountRecord record;
    int run_idx = 0;
};

// counts.csv: theta_deg,duration_s,n1,n2,nc,pc_enabled,seed,run_idx
// Angles with 6 decimals, counts as integers, pc_enabled as 0/1.
std::string counts_csv(std::span<const CountRow> rows);
std::vector<CountRow> parse_counts_csv(const std::string& text);

// oracle.csv: analytic expected rates per theta for both cell modes.
std::string oracle_csv(const ExperimentConfig& cfg,
                       std::span<const double> theta_grid);

// background.json: pooled rate as {"background_rate": {value, std_uncertainty}}
std::string background_json(const Quantity& rate, uint64_t n_records,
                            double total_duration);
Quantity parse_background_json(const std::string& text);

struct EstimateReport {
    est::EfficiencyEstimate estimate;
    std::optional<est::FitResult> fit;
    std::optional<Quantity> background;
    std::string config_fingerprint;
    uint64_t n_records = 0;
};

std::string estimate_report_json(const EstimateReport& report);
EstimateReport parse_estimate_report_json(const std::string& text);

std::string compare_report_json(const EstimateReport& a, const EstimateReport& b,
                                const est::MethodComparison& cmp);

// Whole-file helpers; throw SchemaError on unreadable/unwritable paths.
std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const std::string& content);

ExperimentConfig load_config(const std::filesystem::path& p);

// Deterministic shortest-round-trip formatting for doubles.
std::string format_double(double v);

}  // namespace calib::io
