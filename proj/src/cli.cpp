#include "calib/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "calib/estimate.hpp"
#include "calib/io.hpp"
#include "calib/kernels/philox.hpp"
#include "calib/model.hpp"
#include "calib/simulate.hpp"

namespace calib::cli {

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

// Seed domains so the arms of a comparison never share record seeds.
constexpr uint64_t kArmConditioned = 0;
constexpr uint64_t kArmKlyshko = 1;
constexpr uint64_t kArmBackground = 2;

double parse_double_str(const std::string& s, const std::string& what) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ValidationError(what + ": cannot parse number '" + s + "'");
    return v;
}

// "value,uncertainty" or "value"
Quantity parse_quantity(const std::string& s, const std::string& what) {
    const size_t comma = s.find(',');
    if (comma == std::string::npos) return {parse_double_str(s, what), 0.0};
    return {parse_double_str(s.substr(0, comma), what),
            parse_double_str(s.substr(comma + 1), what)};
}

fs::path prepare_out_dir(const std::string& dir) {
    const fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec) throw SchemaError("cannot create output directory: " + dir);
    return p;
}

std::vector<io::CountRow> to_rows(const std::vector<sim::SweepRecord>& recs) {
    std::vector<io::CountRow> rows;
    rows.reserve(recs.size());
    for (const auto& r : recs) rows.push_back({r.record, r.run_idx});
    return rows;
}

std::vector<CountRecord> to_records(const std::vector<io::CountRow>& rows) {
    std::vector<CountRecord> recs;
    recs.reserve(rows.size());
    for (const auto& r : rows) recs.push_back(r.record);
    return recs;
}

struct EstimateOptions {
    std::string counts_path;
    std::string bg_path;
    std::string config_path;
    std::string epsilon_arg;
    std::string dead_time_arg;      // external "v,u"
    double dead_time_tau = -1.0;    // model tau, seconds
    bool normalize = false;
    std::string inject_visibility;  // "v,u"
    std::string out_dir;
};

double pooled_w1(std::span<const CountRecord> records) {
    double n1 = 0.0, t = 0.0;
    for (const auto& r : records) {
        n1 += static_cast<double>(r.n1);
        t += r.duration;
    }
    return t > 0.0 ? n1 / t : 0.0;
}

// Shared visibility pipeline: subtract background, optionally normalize for
// pump drift, fit, correct. Sigma per point is the subtraction uncertainty
// floored at 1 count, which reduces to sqrt(max(y,1)) without background.
io::EstimateReport visibility_pipeline(const std::vector<CountRecord>& records,
                                       const Quantity& background,
                                       bool normalize, const est::Correction& delta,
                                       const Quantity& epsilon,
                                       const std::string& fingerprint) {
    std::vector<est::AnglePoint> points;
    points.reserve(records.size());
    std::vector<double> scales(records.size(), 1.0);
    if (normalize) {
        const auto normd = est::pump_drift_normalize(records, pooled_w1(records));
        for (size_t i = 0; i < normd.size(); ++i) scales[i] = normd[i].scale;
    }
    for (size_t i = 0; i < records.size(); ++i) {
        const auto corr = est::subtract_background(records[i], background);
        points.push_back({records[i].theta_deg, corr.n2.value * scales[i],
                          std::max(corr.n2.std_uncertainty, 1.0) * scales[i]});
    }
    const est::FitResult fit = est::fit_modulation(points);
    const Quantity vis = est::visibility_from_fit(fit);
    const est::Correction eps_corr{"polarizer_loss", epsilon};
    auto estp = est::eta_from_visibility(vis, delta, eps_corr);
    io::EstimateReport rep;
    rep.estimate = std::move(estp);
    rep.fit = fit;
    rep.background = background;
    rep.config_fingerprint = fingerprint;
    rep.n_records = records.size();
    return rep;
}

int cmd_simulate(const RunManifest& m, int pc_override) {
    const ExperimentConfig cfg = io::load_config(m.config_path);
    validate_manifest(m);
    const fs::path out = prepare_out_dir(m.output_dir);
    sim::SweepOptions opt;
    opt.repeats = m.repeats;
    opt.pc_override = pc_override;
    const auto recs = sim::sweep(cfg, m.theta_grid, m.duration, m.base_seed, opt);
    io::write_file(out / "counts.csv", io::counts_csv(to_rows(recs)));
    io::write_file(out / "oracle.csv", io::oracle_csv(cfg, m.theta_grid));
    return kExitOk;
}

int cmd_background(const RunManifest& m) {
    ExperimentConfig cfg = io::load_config(m.config_path);
    validate_manifest(m);
    const fs::path out = prepare_out_dir(m.output_dir);
    cfg.source.pair_rate_W0 = 0.0;  // pump rotated away: no pairs
    const std::vector<double> theta{0.0};
    sim::SweepOptions opt;
    opt.repeats = m.repeats;
    const auto recs = sim::sweep(cfg, theta, m.duration,
                                 kernels::derive_seed(m.base_seed, kArmBackground),
                                 opt);
    io::write_file(out / "bg_counts.csv", io::counts_csv(to_rows(recs)));
    const auto records = to_records(to_rows(recs));
    const Quantity rate = est::estimate_background(records);
    double total_t = 0.0;
    for (const auto& r : records) total_t += r.duration;
    io::write_file(out / "background.json",
                   io::background_json(rate, records.size(), total_t));
    std::cout << "background_rate " << io::format_double(rate.value) << " +/- "
              << io::format_double(rate.std_uncertainty) << " counts/s\n";
    return kExitOk;
}

int cmd_estimate(const EstimateOptions& o) {
    const fs::path out = prepare_out_dir(o.out_dir);
    std::string fingerprint = "unspecified";
    std::optional<ExperimentConfig> cfg;
    if (!o.config_path.empty()) {
        cfg = io::load_config(o.config_path);
        fingerprint = config_fingerprint(*cfg);
    }
    Quantity epsilon{1.0, 0.0};
    if (!o.epsilon_arg.empty())
        epsilon = parse_quantity(o.epsilon_arg, "--epsilon");
    else if (cfg)
        epsilon = {cfg->channel.epsilon_signal_transmittance, 0.0};

    io::EstimateReport rep;
    if (!o.inject_visibility.empty()) {
        // Regression mode: run only the correction chain on an injected
        // visibility, no counts involved.
        const Quantity vis = parse_quantity(o.inject_visibility, "--inject-visibility");
        est::Correction delta =
            o.dead_time_arg.empty()
                ? est::dead_time_correction_factor(0.0, 0.0)
                : est::dead_time_correction_external(
                      parse_quantity(o.dead_time_arg, "--dead-time"));
        rep.estimate = est::eta_from_visibility(
            vis, delta, {"polarizer_loss", epsilon});
        rep.config_fingerprint = fingerprint;
    } else {
        if (o.counts_path.empty())
            throw ValidationError("estimate: --counts is required (or use "
                                  "--inject-visibility)");
        const auto rows = io::parse_counts_csv(io::read_file(o.counts_path));
        const auto records = to_records(rows);
        Quantity background{0.0, 0.0};
        if (!o.bg_path.empty()) {
            const auto bg_rows = io::parse_counts_csv(io::read_file(o.bg_path));
            background = est::estimate_background(to_records(bg_rows));
        }
        est::Correction delta = est::dead_time_correction_factor(0.0, 0.0);
        if (!o.dead_time_arg.empty()) {
            delta = est::dead_time_correction_external(
                parse_quantity(o.dead_time_arg, "--dead-time"));
        } else {
            double tau = o.dead_time_tau;
            if (tau < 0.0 && cfg) tau = cfg->pockels.driver_dead_time;
            if (tau > 0.0)
                delta = est::dead_time_correction_factor(pooled_w1(records), tau);
        }
        rep = visibility_pipeline(records, background, o.normalize, delta,
                                  epsilon, fingerprint);
    }
    io::write_file(out / "estimate.json", io::estimate_report_json(rep));
    std::cout << "eta1 " << io::format_double(rep.estimate.eta1.value) << " +/- "
              << io::format_double(rep.estimate.eta1.std_uncertainty) << "\n";
    return kExitOk;
}

struct CompareOptions {
    RunManifest manifest;
    std::string inject_a, inject_b;
    std::string estimate_a_path, estimate_b_path;
    bool d2_bound = false;
};

int cmd_compare(const CompareOptions& o) {
    const fs::path out = prepare_out_dir(o.manifest.output_dir);
    io::EstimateReport rep_a, rep_b;

    if (!o.inject_a.empty() || !o.inject_b.empty()) {
        if (o.inject_a.empty() || o.inject_b.empty())
            throw ValidationError("compare: --inject-a and --inject-b go together");
        rep_a.estimate.method = est::Method::ConditionedVisibility;
        rep_a.estimate.eta1 = parse_quantity(o.inject_a, "--inject-a");
        rep_a.estimate.corrections.push_back({"injected", {1.0, 0.0}});
        rep_a.config_fingerprint = "injected";
        rep_b.estimate.method = est::Method::Klyshko;
        rep_b.estimate.eta1 = parse_quantity(o.inject_b, "--inject-b");
        rep_b.estimate.corrections.push_back({"injected", {1.0, 0.0}});
        rep_b.config_fingerprint = "injected";
    } else if (!o.estimate_a_path.empty() || !o.estimate_b_path.empty()) {
        if (o.estimate_a_path.empty() || o.estimate_b_path.empty())
            throw ValidationError("compare: --estimate-a and --estimate-b go "
                                  "together");
        rep_a = io::parse_estimate_report_json(io::read_file(o.estimate_a_path));
        rep_b = io::parse_estimate_report_json(io::read_file(o.estimate_b_path));
        if (rep_a.config_fingerprint != rep_b.config_fingerprint)
            throw ValidationError(
                "compare: estimates come from different configurations "
                "(fingerprints " +
                rep_a.config_fingerprint + " vs " + rep_b.config_fingerprint + ")");
    } else {
        const RunManifest& m = o.manifest;
        const ExperimentConfig cfg = io::load_config(m.config_path);
        validate_manifest(m);
        const std::string fingerprint = config_fingerprint(cfg);

        // Shared background arm (pump off).
        ExperimentConfig bg_cfg = cfg;
        bg_cfg.source.pair_rate_W0 = 0.0;
        const std::vector<double> theta0{0.0};
        sim::SweepOptions bg_opt;
        bg_opt.repeats = m.repeats;
        const auto bg_recs =
            sim::sweep(bg_cfg, theta0, m.duration,
                       kernels::derive_seed(m.base_seed, kArmBackground), bg_opt);
        io::write_file(out / "bg_counts.csv", io::counts_csv(to_rows(bg_recs)));
        const Quantity background =
            est::estimate_background(to_records(to_rows(bg_recs)));

        // Conditioned-visibility arm.
        sim::SweepOptions cond_opt;
        cond_opt.repeats = m.repeats;
        cond_opt.pc_override = 1;
        const auto cond_recs =
            sim::sweep(cfg, m.theta_grid, m.duration,
                       kernels::derive_seed(m.base_seed, kArmConditioned),
                       cond_opt);
        io::write_file(out / "counts_conditioned.csv",
                       io::counts_csv(to_rows(cond_recs)));
        const auto cond_records = to_records(to_rows(cond_recs));
        const est::Correction delta = est::dead_time_correction_factor(
            pooled_w1(cond_records), cfg.pockels.driver_dead_time);
        rep_a = visibility_pipeline(
            cond_records, background, false, delta,
            {cfg.channel.epsilon_signal_transmittance, 0.0}, fingerprint);

        // The D2 dead-time effect has no analytic correction here; when
        // asked, bound it by re-running the same seeds without it and
        // report the visibility shift as a model-uncertainty line.
        if (o.d2_bound && cfg.d2.dead_time > 0.0) {
            ExperimentConfig no_dt = cfg;
            no_dt.d2.dead_time = 0.0;
            const auto ref_recs =
                sim::sweep(no_dt, m.theta_grid, m.duration,
                           kernels::derive_seed(m.base_seed, kArmConditioned),
                           cond_opt);
            const auto ref_rep = visibility_pipeline(
                to_records(to_rows(ref_recs)), background, false, delta,
                {cfg.channel.epsilon_signal_transmittance, 0.0}, fingerprint);
            const double v_with = rep_a.estimate.visibility->value;
            const double v_without = ref_rep.estimate.visibility->value;
            const double bound = std::abs(v_with - v_without) / v_without;
            rep_a.estimate = est::apply_correction(
                rep_a.estimate, {"d2_dead_time(bound)", {1.0, bound}});
        }

        // Coincidence-ratio arm: cell off, polarizer at the coincidence
        // maximum (theta = 0 transmits the heralded H idler fully).
        sim::SweepOptions kly_opt;
        kly_opt.repeats = m.repeats;
        kly_opt.pc_override = 0;
        const auto kly_recs =
            sim::sweep(cfg, theta0, m.duration,
                       kernels::derive_seed(m.base_seed, kArmKlyshko), kly_opt);
        io::write_file(out / "counts_klyshko.csv", io::counts_csv(to_rows(kly_recs)));
        const auto kly_records = to_records(to_rows(kly_recs));
        std::vector<est::Correction> kly_dt;
        if (cfg.d1.dead_time > 0.0)
            kly_dt.push_back(est::dead_time_correction_factor(
                pooled_w1(kly_records), cfg.d1.dead_time));
        rep_b.estimate = est::eta_klyshko(
            kly_records, background,
            {cfg.channel.epsilon_signal_transmittance, 0.0}, kly_dt);
        rep_b.background = background;
        rep_b.config_fingerprint = fingerprint;
        rep_b.n_records = kly_records.size();

        io::write_file(out / "estimate_conditioned.json",
                       io::estimate_report_json(rep_a));
        io::write_file(out / "estimate_klyshko.json",
                       io::estimate_report_json(rep_b));
    }

    const est::MethodComparison cmp =
        est::compare_methods(rep_a.estimate, rep_b.estimate);
    io::write_file(out / "compare.json", io::compare_report_json(rep_a, rep_b, cmp));
    std::cout << "E_n " << io::format_double(cmp.normalized_error) << " ("
              << (cmp.agree ? "agree" : "disagree") << ")\n";
    return kExitOk;
}

}  // namespace

void validate_manifest(const RunManifest& m) {
    if (m.repeats < 1) throw ValidationError("manifest: repeats must be >= 1");
    if (m.theta_grid.empty())
        throw ValidationError("manifest: theta grid must not be empty");
    for (const double t : m.theta_grid) {
        if (!(t >= 0.0 && t <= 180.0))
            throw ValidationError("manifest: theta " + std::to_string(t) +
                                  " outside [0, 180] degrees");
    }
    if (!(m.duration > 0.0))
        throw ValidationError("manifest: duration must be positive");
}

std::vector<double> parse_theta_grid(const std::string& spec) {
    std::vector<double> grid;
    const size_t c1 = spec.find(':');
    if (c1 == std::string::npos) {
        grid.push_back(parse_double_str(spec, "--theta-grid"));
        return grid;
    }
    const size_t c2 = spec.find(':', c1 + 1);
    if (c2 == std::string::npos)
        throw ValidationError("--theta-grid: expected a:b:step or a single angle");
    const double a = parse_double_str(spec.substr(0, c1), "--theta-grid");
    const double b = parse_double_str(spec.substr(c1 + 1, c2 - c1 - 1),
                                      "--theta-grid");
    const double step = parse_double_str(spec.substr(c2 + 1), "--theta-grid");
    if (!(step > 0.0) || b < a)
        throw ValidationError("--theta-grid: need a <= b and step > 0");
    for (int k = 0;; ++k) {
        const double t = a + k * step;
        if (t > b + 1e-9) break;
        grid.push_back(t);
    }
    return grid;
}

int run(const std::vector<std::string>& args) {
    CLI::App app{"Photon-pair detector-efficiency calibration simulator"};
    app.require_subcommand(1);

    RunManifest manifest;
    std::string theta_spec = "0:180:10";
    std::string pc_flag;

    auto add_manifest = [&](CLI::App* sub, bool with_grid) {
        sub->add_option("--config", manifest.config_path, "experiment config JSON")
            ->required();
        sub->add_option("--out", manifest.output_dir, "output directory")
            ->required();
        sub->add_option("--seed", manifest.base_seed, "base seed");
        sub->add_option("--duration", manifest.duration,
                        "integration time per record, s");
        sub->add_option("--repeats", manifest.repeats, "repeats per angle");
        if (with_grid)
            sub->add_option("--theta-grid", theta_spec,
                            "polarizer angles, a:b:step degrees");
    };

    CLI::App* sim_cmd = app.add_subcommand("simulate", "run a polarizer sweep");
    add_manifest(sim_cmd, true);
    sim_cmd->add_option("--pc", pc_flag, "override cell control: on|off");

    CLI::App* bg_cmd =
        app.add_subcommand("background", "pump-off background run");
    add_manifest(bg_cmd, false);

    EstimateOptions eopt;
    CLI::App* est_cmd =
        app.add_subcommand("estimate", "estimate eta1 from a counts CSV");
    est_cmd->add_option("--counts", eopt.counts_path, "counts.csv from simulate");
    est_cmd->add_option("--bg", eopt.bg_path, "pump-off counts CSV");
    est_cmd->add_option("--config", eopt.config_path,
                        "config JSON for defaults and fingerprint");
    est_cmd->add_option("--epsilon", eopt.epsilon_arg,
                        "polarizer-cube transmittance, value[,uncertainty]");
    est_cmd->add_option("--dead-time", eopt.dead_time_arg,
                        "external dead-time factor, value[,uncertainty]");
    est_cmd->add_option("--dead-time-tau", eopt.dead_time_tau,
                        "driver dead time for the model factor, s");
    est_cmd->add_flag("--normalize", eopt.normalize,
                      "normalize records by D1 singles (pump drift)");
    est_cmd->add_option("--inject-visibility", eopt.inject_visibility,
                        "skip counts, run the correction chain on this "
                        "visibility, value[,uncertainty]");
    est_cmd->add_option("--out", eopt.out_dir, "output directory")->required();

    CompareOptions copt;
    CLI::App* cmp_cmd = app.add_subcommand(
        "compare", "conditioned-visibility vs coincidence-ratio methods");
    cmp_cmd->add_option("--config", manifest.config_path, "experiment config JSON");
    cmp_cmd->add_option("--out", manifest.output_dir, "output directory")
        ->required();
    cmp_cmd->add_option("--seed", manifest.base_seed, "base seed");
    cmp_cmd->add_option("--duration", manifest.duration,
                        "integration time per record, s");
    cmp_cmd->add_option("--repeats", manifest.repeats, "repeats per angle");
    cmp_cmd->add_option("--theta-grid", theta_spec,
                        "polarizer angles for the conditioned sweep");
    cmp_cmd->add_option("--inject-a", copt.inject_a,
                        "compare injected estimates: method A value,uncertainty");
    cmp_cmd->add_option("--inject-b", copt.inject_b,
                        "compare injected estimates: method B value,uncertainty");
    cmp_cmd->add_option("--estimate-a", copt.estimate_a_path,
                        "existing estimate JSON, method A");
    cmp_cmd->add_option("--estimate-b", copt.estimate_b_path,
                        "existing estimate JSON, method B");
    cmp_cmd->add_flag("--d2-bound", copt.d2_bound,
                      "bound the uncorrected D2 dead-time effect by a paired "
                      "run without it");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        manifest.theta_grid = parse_theta_grid(theta_spec);
        if (sim_cmd->parsed()) {
            int pc_override = -1;
            if (!pc_flag.empty()) {
                if (pc_flag == "on")
                    pc_override = 1;
                else if (pc_flag == "off")
                    pc_override = 0;
                else
                    throw ValidationError("--pc: expected on or off");
            }
            return cmd_simulate(manifest, pc_override);
        }
        if (bg_cmd->parsed()) {
            manifest.theta_grid = {0.0};
            return cmd_background(manifest);
        }
        if (est_cmd->parsed()) return cmd_estimate(eopt);
        if (cmp_cmd->parsed()) {
            copt.manifest = manifest;
            const bool needs_config =
                copt.inject_a.empty() && copt.estimate_a_path.empty();
            if (needs_config && manifest.config_path.empty())
                throw ValidationError("compare: --config is required unless "
                                      "--inject-* or --estimate-* are given");
            return cmd_compare(copt);
        }
        return kExitInput;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}

}  // namespace calib::cli
