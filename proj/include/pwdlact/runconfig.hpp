#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "pwdlact/diffusion.hpp"
#include "pwdlact/sampler.hpp"

namespace pwdlact {

// Declarative run description: INI-style sections with every field defaulted.
// Unknown keys fail fast; errors name the key and the file:line.
struct RunConfig {
    // [run]
    std::string out_dir = "runs/default";
    uint64_t seed = 1234;
    int threads = 1;

    // [geometry]
    int image_size = 128;
    int n_angles = 360;

    // [dataset]
    int n_train = 512;
    int n_test = 64;
    std::string angle_ranges = "0:90,0:120";
    double noise_sigma = 0.0;
    std::string kinds = "mixed";

    // [train] (seed derived from the run seed)
    TrainConfig train;

    // [sample] (seed derived from the run seed)
    SampleConfig sample;

    // [eval]
    int eval_max_images = 0;
    int tv_iters = 80;
    double tv_lambda = 0.05;
    bool save_residuals = false;

    // [ablate]
    std::string ablate_kinds = "guidance-weight,step-count";
    std::string guidance_grid = "0,0.01,0.05,0.1,0.5,1";
    std::string step_grid = "10,25,50,100";
    int ablate_max_images = 0;

    bool operator==(const RunConfig&) const = default;

    std::vector<std::pair<double, double>> parsed_angle_ranges() const;
    std::vector<double> parsed_guidance_grid() const;
    std::vector<double> parsed_step_grid() const;
    std::vector<std::string> parsed_ablate_kinds() const;
};

RunConfig parse_config(const std::string& path);
RunConfig parse_config_stream(std::istream& in, const std::string& name);

/// Canonical INI rendering; parse(echo(cfg)) == cfg (doubles kept exact).
void echo_config(const RunConfig& cfg, std::ostream& out);
std::string config_to_string(const RunConfig& cfg);

/// Comma-separated doubles ("0,0.01,0.5"); used for the ablation grids.
std::vector<double> parse_double_list(const std::string& text, const std::string& what);
/// Comma-separated lo:hi degree pairs ("0:90,0:120").
std::vector<std::pair<double, double>> parse_range_list(const std::string& text,
                                                        const std::string& what);

}  // namespace pwdlact
