#pragma once

// Command-line front end. run() is the whole CLI minus the process
// boundary, so tests can drive it in-process; exit codes are the stable
// contract: 0 success, 2 input/schema error, 3 numerical failure.

#include <string>
#include <vector>

namespace calib::cli {

struct RunManifest {
    std::string config_path;
    std::vector<double> theta_grid;
    double duration = 10.0;
    int repeats = 1;
    uint64_t base_seed = 1;
    std::string output_dir;
};

// Validates repeats >= 1 and a non-empty grid within [0, 180] degrees.
void validate_manifest(const RunManifest& m);

// "a:b:step" (inclusive endpoints) or a single angle.
std::vector<double> parse_theta_grid(const std::string& spec);

int run(const std::vector<std::string>& args);

}  // namespace calib::cli
