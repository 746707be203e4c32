#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "calib/cli.hpp"
#include "calib/io.hpp"
#include "calib/presets.hpp"
#include "calib/simulate.hpp"
#include "doctest.h"

using namespace calib;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::path("cli_test_tmp") / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string write_config(const fs::path& dir, const ExperimentConfig& cfg) {
    const fs::path p = dir / "config.json";
    io::write_file(p, config_to_json(cfg));
    return p.string();
}

}  // namespace

TEST_CASE("shipped sample configs match the presets") {
    const ExperimentConfig ideal =
        io::load_config(fs::path(CALIB_CONFIG_DIR) / "ideal.json");
    CHECK(config_fingerprint(ideal) ==
          config_fingerprint(presets::ideal(0.5)));
    const ExperimentConfig paper =
        io::load_config(fs::path(CALIB_CONFIG_DIR) / "paper.json");
    CHECK(config_fingerprint(paper) == config_fingerprint(presets::paper_like()));
}

TEST_CASE("counts csv round-trip is byte-identical") {
    const auto recs = sim::sweep(presets::ideal(0.5, 1.0, 1.0, 1.0, 2e4),
                                 std::vector<double>{0.0, 45.0, 90.0}, 1.0, 5,
                                 sim::SweepOptions{2, -1});
    std::vector<io::CountRow> rows;
    for (const auto& r : recs) rows.push_back({r.record, r.run_idx});
    const std::string text = io::counts_csv(rows);
    const auto parsed = io::parse_counts_csv(text);
    CHECK(parsed.size() == rows.size());
    CHECK(io::counts_csv(parsed) == text);
}

TEST_CASE("counts csv schema errors") {
    CHECK_THROWS_AS(io::parse_counts_csv(""), SchemaError);
    CHECK_THROWS_AS(io::parse_counts_csv("theta,duration\n0,1\n"), SchemaError);
    const std::string header =
        "theta_deg,duration_s,n1,n2,nc,pc_enabled,seed,run_idx\n";
    CHECK_THROWS_AS(io::parse_counts_csv(header), SchemaError);  // no rows
    CHECK_THROWS_AS(io::parse_counts_csv(header + "0,1,2,3\n"), SchemaError);
    CHECK_THROWS_AS(io::parse_counts_csv(header + "0,1,x,3,0,1,9,0\n"),
                    SchemaError);
    CHECK_THROWS_AS(io::parse_counts_csv(header + "0,1,10,10,99,1,9,0\n"),
                    SchemaError);  // nc > min(n1,n2)
    CHECK_THROWS_AS(io::parse_counts_csv(header + "0,0,10,10,1,1,9,0\n"),
                    SchemaError);  // zero duration
    CHECK_THROWS_AS(io::parse_counts_csv(header + "0,1,10,10,1,yes,9,0\n"),
                    SchemaError);
    CHECK_NOTHROW(io::parse_counts_csv(header + "0.000000,1,10,10,1,1,9,0\n"));
}

TEST_CASE("oracle csv carries both cell modes") {
    const auto cfg = presets::ideal(0.5, 1.0, 1.0, 1.0, 1e4);
    const std::vector<double> grid{0.0, 90.0};
    const std::string text = io::oracle_csv(cfg, grid);
    CHECK(text.find("theta_deg,d2_rate_pc_on,d2_rate_pc_off,"
                    "coinc_rate_pc_on,coinc_rate_pc_off") == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}

TEST_CASE("estimate report json round-trips") {
    io::EstimateReport rep;
    rep.estimate.method = est::Method::ConditionedVisibility;
    rep.estimate.eta1 = {0.48, 0.011};
    rep.estimate.visibility = Quantity{0.43, 0.004};
    rep.estimate.corrections.push_back({"dead_time(external)", {0.91, 0.014}});
    est::FitResult fit;
    fit.W_A = -2150.0;
    fit.W_B = 5000.0;
    fit.covariance = {{{900.0, 10.0}, {10.0, 625.0}}};
    fit.chi2 = 17.3;
    fit.dof = 17;
    rep.fit = fit;
    rep.background = Quantity{640.0, 5.0};
    rep.config_fingerprint = "00ff00ff00ff00ff";
    rep.n_records = 19;

    const std::string text = io::estimate_report_json(rep);
    const auto back = io::parse_estimate_report_json(text);
    CHECK(back.estimate.eta1.value == 0.48);
    CHECK(back.estimate.visibility->value == 0.43);
    CHECK(back.estimate.corrections.size() == 1);
    CHECK(back.fit->W_A == -2150.0);
    CHECK(back.fit->covariance[1][1] == 625.0);
    CHECK(back.background->value == 640.0);
    CHECK(back.config_fingerprint == rep.config_fingerprint);
    CHECK(io::estimate_report_json(back) == text);
}

TEST_CASE("background json round-trips") {
    const std::string text = io::background_json({640.25, 2.53}, 10, 100.0);
    const Quantity q = io::parse_background_json(text);
    CHECK(q.value == 640.25);
    CHECK(q.std_uncertainty == 2.53);
    CHECK_THROWS_AS(io::parse_background_json("{}"), SchemaError);
}

TEST_CASE("theta grid parsing") {
    CHECK(cli::parse_theta_grid("0:180:10").size() == 19);
    CHECK(cli::parse_theta_grid("45").size() == 1);
    CHECK(cli::parse_theta_grid("0:90:5").size() == 19);
    CHECK(cli::parse_theta_grid("0:180:10").front() == 0.0);
    CHECK(cli::parse_theta_grid("0:180:10").back() == 180.0);
    CHECK_THROWS_AS(cli::parse_theta_grid("10:0:5"), ValidationError);
    CHECK_THROWS_AS(cli::parse_theta_grid("0:10:0"), ValidationError);
    CHECK_THROWS_AS(cli::parse_theta_grid("abc"), ValidationError);
}

TEST_CASE("manifest validation") {
    cli::RunManifest m;
    m.theta_grid = {0.0, 200.0};
    CHECK_THROWS_AS(cli::validate_manifest(m), ValidationError);
    m.theta_grid = {};
    CHECK_THROWS_AS(cli::validate_manifest(m), ValidationError);
    m.theta_grid = {0.0};
    m.repeats = 0;
    CHECK_THROWS_AS(cli::validate_manifest(m), ValidationError);
    m.repeats = 1;
    m.duration = -1.0;
    CHECK_THROWS_AS(cli::validate_manifest(m), ValidationError);
}

TEST_CASE("cli simulate writes deterministic sweep files") {
    const fs::path dir = fresh_dir("simulate");
    const std::string cfg_path =
        write_config(dir, presets::ideal(0.5, 1.0, 1.0, 1.0, 2e4));
    const auto args = std::vector<std::string>{
        "simulate",      "--config", cfg_path, "--out", (dir / "a").string(),
        "--seed",        "7",        "--duration", "1",
        "--repeats",     "10",       "--theta-grid", "0:180:10"};
    REQUIRE(cli::run(args) == 0);

    const auto rows = io::parse_counts_csv(io::read_file(dir / "a" / "counts.csv"));
    CHECK(rows.size() == 19 * 10);
    CHECK(fs::exists(dir / "a" / "oracle.csv"));

    auto args2 = args;
    args2[4] = (dir / "b").string();
    REQUIRE(cli::run(args2) == 0);
    CHECK(io::read_file(dir / "a" / "counts.csv") ==
          io::read_file(dir / "b" / "counts.csv"));
    CHECK(io::read_file(dir / "a" / "oracle.csv") ==
          io::read_file(dir / "b" / "oracle.csv"));
}

TEST_CASE("cli simulate per-angle scatter is Poisson-like") {
    const fs::path dir = fresh_dir("scatter");
    const std::string cfg_path = write_config(dir, presets::paper_like());
    REQUIRE(cli::run({"simulate", "--config", cfg_path, "--out",
                      (dir / "out").string(), "--seed", "99", "--duration", "1",
                      "--repeats", "30", "--theta-grid", "0:180:10"}) == 0);
    const auto rows =
        io::parse_counts_csv(io::read_file(dir / "out" / "counts.csv"));
    REQUIRE(rows.size() == 19 * 30);
    double pooled = 0.0;
    for (int a = 0; a < 19; ++a) {
        double mean = 0.0, m2 = 0.0;
        for (int r = 0; r < 30; ++r) {
            const double y =
                static_cast<double>(rows[a * 30 + r].record.n2);
            mean += y;
        }
        mean /= 30.0;
        for (int r = 0; r < 30; ++r) {
            const double d =
                static_cast<double>(rows[a * 30 + r].record.n2) - mean;
            m2 += d * d;
        }
        pooled += (m2 / 29.0) / mean;
    }
    pooled /= 19.0;
    CHECK(pooled > 0.8);
    CHECK(pooled < 1.2);
}

TEST_CASE("cli estimate recovers eta1 from a simulated sweep") {
    const fs::path dir = fresh_dir("estimate");
    const std::string cfg_path =
        write_config(dir, presets::ideal(0.5, 1.0, 1.0, 1.0, 1e5));
    REQUIRE(cli::run({"simulate", "--config", cfg_path, "--out",
                      (dir / "sim").string(), "--seed", "21", "--duration", "2",
                      "--repeats", "3", "--theta-grid", "0:180:10"}) == 0);
    REQUIRE(cli::run({"estimate", "--counts",
                      (dir / "sim" / "counts.csv").string(), "--config",
                      cfg_path, "--out", (dir / "est").string()}) == 0);
    const auto rep = io::parse_estimate_report_json(
        io::read_file(dir / "est" / "estimate.json"));
    CHECK(std::abs(rep.estimate.eta1.value - 0.5) <
          4.0 * rep.estimate.eta1.std_uncertainty);
    CHECK(rep.fit.has_value());
    CHECK(rep.fit->W_A < 0.0);
    CHECK(rep.config_fingerprint ==
          config_fingerprint(presets::ideal(0.5, 1.0, 1.0, 1.0, 1e5)));
}

TEST_CASE("cli estimate paper-regression mode") {
    const fs::path dir = fresh_dir("regression");
    REQUIRE(cli::run({"estimate", "--inject-visibility", "0.430,0.004",
                      "--dead-time", "0.910,0.014", "--epsilon", "0.984,0.015",
                      "--out", dir.string()}) == 0);
    const auto rep =
        io::parse_estimate_report_json(io::read_file(dir / "estimate.json"));
    CHECK(std::abs(rep.estimate.eta1.value - 0.480) < 1e-3);
    CHECK(std::abs(rep.estimate.eta1.std_uncertainty - 0.011) < 1e-3);
}

TEST_CASE("cli estimate exit codes") {
    const fs::path dir = fresh_dir("exitcodes");
    io::write_file(dir / "empty.csv", "");
    CHECK(cli::run({"estimate", "--counts", (dir / "empty.csv").string(),
                    "--out", dir.string()}) == 2);

    // all rows at one angle: singular design
    io::write_file(dir / "singular.csv",
                   "theta_deg,duration_s,n1,n2,nc,pc_enabled,seed,run_idx\n"
                   "30.000000,1,100,100,10,1,1,0\n"
                   "30.000000,1,100,110,10,1,2,1\n"
                   "30.000000,1,100,90,10,1,3,2\n");
    CHECK(cli::run({"estimate", "--counts", (dir / "singular.csv").string(),
                    "--out", dir.string()}) == 3);

    CHECK(cli::run({"estimate", "--counts", (dir / "missing.csv").string(),
                    "--out", dir.string()}) == 2);
    CHECK(cli::run({"estimate", "--out", dir.string()}) == 2);  // no counts
    CHECK(cli::run({"bogus-subcommand"}) == 2);
    CHECK(cli::run({}) == 2);
}

TEST_CASE("cli background feeds estimate") {
    const fs::path dir = fresh_dir("background");
    ExperimentConfig cfg = presets::ideal(0.5, 1.0, 1.0, 1.0, 1e5);
    cfg.source.background_rate_D2 = 640.0;
    const std::string cfg_path = write_config(dir, cfg);

    REQUIRE(cli::run({"background", "--config", cfg_path, "--out",
                      (dir / "bg").string(), "--seed", "3", "--duration", "10",
                      "--repeats", "10"}) == 0);
    const Quantity rate = io::parse_background_json(
        io::read_file(dir / "bg" / "background.json"));
    CHECK(std::abs(rate.value - 640.0) < 4.0 * rate.std_uncertainty);
    CHECK(rate.std_uncertainty == doctest::Approx(2.53).epsilon(0.05));

    REQUIRE(cli::run({"simulate", "--config", cfg_path, "--out",
                      (dir / "sim").string(), "--seed", "4", "--duration", "2",
                      "--repeats", "2", "--theta-grid", "0:180:10"}) == 0);
    REQUIRE(cli::run({"estimate", "--counts",
                      (dir / "sim" / "counts.csv").string(), "--bg",
                      (dir / "bg" / "bg_counts.csv").string(), "--config",
                      cfg_path, "--out", (dir / "est").string()}) == 0);
    const auto rep = io::parse_estimate_report_json(
        io::read_file(dir / "est" / "estimate.json"));
    CHECK(std::abs(rep.estimate.eta1.value - 0.5) <
          4.0 * rep.estimate.eta1.std_uncertainty);
    CHECK(rep.background->value == rate.value);
}

TEST_CASE("cli compare with injected estimates") {
    const fs::path dir = fresh_dir("compare_inject");
    REQUIRE(cli::run({"compare", "--inject-a", "0.480,0.011", "--inject-b",
                      "0.486,0.002", "--out", dir.string()}) == 0);
    const std::string text = io::read_file(dir / "compare.json");
    CHECK(text.find("\"normalized_error\": 0.536") != std::string::npos);
    CHECK(text.find("\"agree\": true") != std::string::npos);
}

TEST_CASE("cli estimate --normalize removes correlated pump drift") {
    const fs::path dir = fresh_dir("normalize");
    ExperimentConfig cfg = presets::ideal(0.43, 1.0, 1.0, 1.0, 4e4);
    // monotone half-period schedule so the ramp correlates with cos(2 theta)
    cfg.source.pump_drift.linear_slope_per_s = 0.05 / (19.0 * 2.0);
    const std::string cfg_path = write_config(dir, cfg);
    REQUIRE(cli::run({"simulate", "--config", cfg_path, "--out",
                      (dir / "sim").string(), "--seed", "61", "--duration", "2",
                      "--theta-grid", "0:90:5"}) == 0);
    const std::string counts = (dir / "sim" / "counts.csv").string();

    REQUIRE(cli::run({"estimate", "--counts", counts, "--config", cfg_path,
                      "--out", (dir / "plain").string()}) == 0);
    REQUIRE(cli::run({"estimate", "--counts", counts, "--config", cfg_path,
                      "--normalize", "--out", (dir / "norm").string()}) == 0);
    const auto plain = io::parse_estimate_report_json(
        io::read_file(dir / "plain" / "estimate.json"));
    const auto norm = io::parse_estimate_report_json(
        io::read_file(dir / "norm" / "estimate.json"));
    CHECK(std::abs(norm.estimate.eta1.value - 0.43) <
          std::abs(plain.estimate.eta1.value - 0.43));
    CHECK(std::abs(norm.estimate.eta1.value - 0.43) <
          4.0 * norm.estimate.eta1.std_uncertainty);
}

TEST_CASE("cli compare --d2-bound reports a model-uncertainty line") {
    const fs::path dir = fresh_dir("d2bound");
    ExperimentConfig cfg = presets::ideal(0.5, 1.0, 1.0, 1.0, 1e5);
    cfg.d2.dead_time = 2e-6;  // exaggerated so the bound is visible
    const std::string cfg_path = write_config(dir, cfg);
    REQUIRE(cli::run({"compare", "--config", cfg_path, "--out",
                      (dir / "out").string(), "--seed", "19", "--duration", "1",
                      "--repeats", "1", "--theta-grid", "0:180:10",
                      "--d2-bound"}) == 0);
    const auto rep = io::parse_estimate_report_json(
        io::read_file(dir / "out" / "estimate_conditioned.json"));
    bool found = false;
    for (const auto& c : rep.estimate.corrections) {
        if (c.name == "d2_dead_time(bound)") {
            found = true;
            CHECK(c.value.value == 1.0);
            CHECK(c.value.std_uncertainty > 0.0);
            CHECK(c.value.std_uncertainty < 0.2);
        }
    }
    CHECK(found);
}

TEST_CASE("cli compare simulates both arms and guards fingerprints") {
    const fs::path dir = fresh_dir("compare_full");
    const std::string cfg_path =
        write_config(dir, presets::ideal(0.5, 0.8, 0.7, 1.0, 2e5));
    REQUIRE(cli::run({"compare", "--config", cfg_path, "--out",
                      (dir / "out").string(), "--seed", "12", "--duration", "2",
                      "--repeats", "2", "--theta-grid", "0:180:10"}) == 0);
    CHECK(fs::exists(dir / "out" / "compare.json"));
    const auto rep_a = io::parse_estimate_report_json(
        io::read_file(dir / "out" / "estimate_conditioned.json"));
    const auto rep_b = io::parse_estimate_report_json(
        io::read_file(dir / "out" / "estimate_klyshko.json"));
    CHECK(rep_a.config_fingerprint == rep_b.config_fingerprint);
    CHECK(std::abs(rep_a.estimate.eta1.value - 0.5) <
          4.0 * rep_a.estimate.eta1.std_uncertainty);
    CHECK(std::abs(rep_b.estimate.eta1.value - 0.5) <
          4.0 * rep_b.estimate.eta1.std_uncertainty);

    // comparing two existing reports works when fingerprints match
    CHECK(cli::run({"compare", "--estimate-a",
                    (dir / "out" / "estimate_conditioned.json").string(),
                    "--estimate-b",
                    (dir / "out" / "estimate_klyshko.json").string(), "--out",
                    (dir / "re").string()}) == 0);

    // and is refused when they do not
    auto tampered = io::parse_estimate_report_json(
        io::read_file(dir / "out" / "estimate_klyshko.json"));
    tampered.config_fingerprint = "deadbeefdeadbeef";
    io::write_file(dir / "tampered.json", io::estimate_report_json(tampered));
    CHECK(cli::run({"compare", "--estimate-a",
                    (dir / "out" / "estimate_conditioned.json").string(),
                    "--estimate-b", (dir / "tampered.json").string(), "--out",
                    (dir / "re2").string()}) == 2);
}
