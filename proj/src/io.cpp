#include "calib/io.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "calib/analytic.hpp"
#include "json.hpp"

namespace calib::io {

namespace {

using nlohmann::json;

constexpr const char* kCountsHeader =
    "theta_deg,duration_s,n1,n2,nc,pc_enabled,seed,run_idx";

std::string format_theta(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

double parse_double_field(std::string_view s, const std::string& what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw SchemaError("counts csv: bad " + what + " value '" +
                          std::string(s) + "'");
    return v;
}

uint64_t parse_u64_field(std::string_view s, const std::string& what) {
    uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw SchemaError("counts csv: bad " + what + " value '" +
                          std::string(s) + "'");
    return v;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    size_t pos = 0;
    while (true) {
        const size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
}

json quantity_json(const Quantity& q) {
    return json{{"value", q.value}, {"std_uncertainty", q.std_uncertainty}};
}

Quantity quantity_from_json(const json& j) {
    return {j.at("value").get<double>(), j.at("std_uncertainty").get<double>()};
}

json estimate_json_obj(const EstimateReport& report) {
    json j;
    j["method"] = est::method_name(report.estimate.method);
    j["eta1"] = quantity_json(report.estimate.eta1);
    if (report.estimate.visibility)
        j["visibility"] = quantity_json(*report.estimate.visibility);
    json corr = json::array();
    for (const auto& c : report.estimate.corrections) {
        json e = quantity_json(c.value);
        e["name"] = c.name;
        corr.push_back(e);
    }
    j["corrections"] = corr;
    if (report.fit) {
        j["fit"] = json{{"W_A", report.fit->W_A},
                        {"W_B", report.fit->W_B},
                        {"covariance",
                         {{report.fit->covariance[0][0], report.fit->covariance[0][1]},
                          {report.fit->covariance[1][0], report.fit->covariance[1][1]}}},
                        {"chi2", report.fit->chi2},
                        {"dof", report.fit->dof}};
    }
    if (report.background) j["background"] = quantity_json(*report.background);
    j["config_fingerprint"] = report.config_fingerprint;
    j["n_records"] = report.n_records;
    return j;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string counts_csv(std::span<const CountRow> rows) {
    std::vector<CountRow> sorted(rows.begin(), rows.end());
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const CountRow& a, const CountRow& b) {
                         if (a.record.theta_deg != b.record.theta_deg)
                             return a.record.theta_deg < b.record.theta_deg;
                         return a.run_idx < b.run_idx;
                     });
    std::string out = kCountsHeader;
    out += '\n';
    for (const auto& row : sorted) {
        const auto& r = row.record;
        out += format_theta(r.theta_deg);
        out += ',';
        out += format_double(r.duration);
        out += ',';
        out += std::to_string(r.n1);
        out += ',';
        out += std::to_string(r.n2);
        out += ',';
        out += std::to_string(r.nc);
        out += ',';
        out += r.pc_enabled ? '1' : '0';
        out += ',';
        out += std::to_string(r.seed);
        out += ',';
        out += std::to_string(row.run_idx);
        out += '\n';
    }
    return out;
}

std::vector<CountRow> parse_counts_csv(const std::string& text) {
    std::vector<CountRow> rows;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCountsHeader)
        throw SchemaError(std::string("counts csv: expected header '") +
                          kCountsHeader + "'");
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 8)
            throw SchemaError("counts csv: line " + std::to_string(lineno) +
                              ": expected 8 fields, got " +
                              std::to_string(f.size()));
        CountRow row;
        row.record.theta_deg = parse_double_field(f[0], "theta_deg");
        row.record.duration = parse_double_field(f[1], "duration_s");
        row.record.n1 = parse_u64_field(f[2], "n1");
        row.record.n2 = parse_u64_field(f[3], "n2");
        row.record.nc = parse_u64_field(f[4], "nc");
        if (f[5] == "1")
            row.record.pc_enabled = true;
        else if (f[5] == "0")
            row.record.pc_enabled = false;
        else
            throw SchemaError("counts csv: bad pc_enabled value '" +
                              std::string(f[5]) + "'");
        row.record.seed = parse_u64_field(f[6], "seed");
        row.run_idx = static_cast<int>(parse_u64_field(f[7], "run_idx"));
        if (!(row.record.duration > 0.0))
            throw SchemaError("counts csv: line " + std::to_string(lineno) +
                              ": duration must be positive");
        if (row.record.nc > std::min(row.record.n1, row.record.n2))
            throw SchemaError("counts csv: line " + std::to_string(lineno) +
                              ": nc exceeds min(n1, n2)");
        rows.push_back(row);
    }
    if (rows.empty()) throw SchemaError("counts csv: no data rows");
    return rows;
}

std::string oracle_csv(const ExperimentConfig& cfg,
                       std::span<const double> theta_grid) {
    const auto p = analytic::RateParams::from_config(cfg);
    std::string out =
        "theta_deg,d2_rate_pc_on,d2_rate_pc_off,coinc_rate_pc_on,coinc_rate_pc_off\n";
    for (const double theta : theta_grid) {
        out += format_theta(theta);
        out += ',';
        out += format_double(analytic::expected_rate_d2(theta, p, true));
        out += ',';
        out += format_double(analytic::expected_rate_d2(theta, p, false));
        out += ',';
        out += format_double(analytic::expected_coincidence_rate(theta, p, true));
        out += ',';
        out += format_double(analytic::expected_coincidence_rate(theta, p, false));
        out += '\n';
    }
    return out;
}

std::string background_json(const Quantity& rate, uint64_t n_records,
                            double total_duration) {
    json j;
    j["background_rate"] = quantity_json(rate);
    j["n_records"] = n_records;
    j["total_duration_s"] = total_duration;
    return j.dump(2) + "\n";
}

Quantity parse_background_json(const std::string& text) {
    try {
        return quantity_from_json(json::parse(text).at("background_rate"));
    } catch (const json::exception& e) {
        throw SchemaError(std::string("background json: ") + e.what());
    }
}

std::string estimate_report_json(const EstimateReport& report) {
    return estimate_json_obj(report).dump(2) + "\n";
}

EstimateReport parse_estimate_report_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        EstimateReport rep;
        const std::string method = j.at("method").get<std::string>();
        rep.estimate.method = method == "klyshko"
                                  ? est::Method::Klyshko
                                  : est::Method::ConditionedVisibility;
        rep.estimate.eta1 = quantity_from_json(j.at("eta1"));
        if (j.contains("visibility"))
            rep.estimate.visibility = quantity_from_json(j.at("visibility"));
        if (j.contains("corrections")) {
            for (const auto& e : j.at("corrections")) {
                rep.estimate.corrections.push_back(
                    {e.at("name").get<std::string>(), quantity_from_json(e)});
            }
        }
        if (j.contains("fit")) {
            est::FitResult fit;
            const auto& jf = j.at("fit");
            fit.W_A = jf.at("W_A").get<double>();
            fit.W_B = jf.at("W_B").get<double>();
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c)
                    fit.covariance[r][c] =
                        jf.at("covariance").at(r).at(c).get<double>();
            fit.chi2 = jf.at("chi2").get<double>();
            fit.dof = jf.at("dof").get<int>();
            rep.fit = fit;
        }
        if (j.contains("background"))
            rep.background = quantity_from_json(j.at("background"));
        rep.config_fingerprint = j.at("config_fingerprint").get<std::string>();
        rep.n_records = j.at("n_records").get<uint64_t>();
        return rep;
    } catch (const json::exception& e) {
        throw SchemaError(std::string("estimate json: ") + e.what());
    }
}

std::string compare_report_json(const EstimateReport& a, const EstimateReport& b,
                                const est::MethodComparison& cmp) {
    json j;
    j["a"] = estimate_json_obj(a);
    j["b"] = estimate_json_obj(b);
    j["difference"] = cmp.difference;
    j["combined_std_uncertainty"] = cmp.combined_uncertainty;
    j["normalized_error"] = cmp.normalized_error;
    j["agree"] = cmp.agree;
    return j.dump(2) + "\n";
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw SchemaError("cannot read file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw SchemaError("cannot write file: " + p.string());
    out << content;
    if (!out) throw SchemaError("write failed: " + p.string());
}

ExperimentConfig load_config(const std::filesystem::path& p) {
    return config_from_json(read_file(p));
}

}  // namespace calib::io
