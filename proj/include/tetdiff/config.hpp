#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tetdiff {

// Validated pipeline settings. File format is line-based `section.key = value`
// with `#` comments; unknown keys are rejected. CLI overrides win over file
// values.
struct Config {
    struct Grid {
        int resolution = 16;
        double extent = 1.0;
        double delta_max_multiplier = 0.75;
    } grid;

    struct Fit {
        double learning_rate = 5e-4;
        int iterations = 500;
        int chamfer_samples = 4096;
        double sdf_reg_start = 0.2, sdf_reg_end = 0.01;
    } fit;

    struct Diffusion {
        int T = 1000;
        double beta_start = 1e-4, beta_end = 0.02;
        std::string sampler = "ddpm"; // ddpm | ddim
        int steps = 100;              // DDIM inference steps
        std::string spacing = "quadratic"; // quadratic | uniform
        int unfreeze_T = 50;          // conditional completion unfreeze time
        bool boundary_vacuum = true;  // pin domain-boundary SDF to +1 while sampling
    } diffusion;

    struct Train {
        int steps = 2000;
        int batch = 4;
        double learning_rate = 1e-3;
        double beta1 = 0.9, beta2 = 0.999;
        double jitter = 0.005;
        int layers = 3;
        int width1 = 16, width2 = 16, time_dim = 16;
    } train;

    struct Postprocess {
        double smooth_lambda = 0.25;
        int smooth_steps = 5;
        double component_fraction = 0.05;
    } postprocess;

    struct Metrics {
        int samples = 2048;
        int jsd_resolution = 28;
        bool emd = true;
        int emd_subsample = 512;
    } metrics;

    struct Paths {
        std::string out_dir = "out";
    } paths;

    std::uint64_t seed = 0;
};

// Parses `path` (empty string = defaults only), then applies `key=value`
// overrides in order. Throws std::invalid_argument naming the offending key
// on unknown keys or type mismatches, ParseError on malformed lines.
Config parse_config(const std::string& path, const std::vector<std::string>& overrides = {});

void apply_override(Config& cfg, const std::string& key, const std::string& value);
void validate(const Config& cfg);

} // namespace tetdiff
