#pragma once

#include <vector>

namespace tetdiff {

// Discrete-time diffusion coefficients. beta interpolates linearly from
// beta_1 to beta_T; alpha_bar is the running product of (1 - beta).
// Timesteps are 1-based; alpha_bar(0) == 1 by convention.
struct NoiseSchedule {
    int steps = 0; // T
    std::vector<double> beta;      // beta[t-1]
    std::vector<double> alpha;     // 1 - beta
    std::vector<double> alpha_bar; // prod alpha

    double beta_at(int t) const { return beta[t - 1]; }
    double alpha_at(int t) const { return alpha[t - 1]; }
    double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar[t - 1]; }
    double sqrt_alpha_bar(int t) const;
    double sqrt_one_minus_alpha_bar(int t) const;
};

NoiseSchedule make_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

// Quadratic (or uniform) subsequence of {1..T} with `count` entries,
// ascending, deduplicated. Quadratic spacing: 1 + round((i/(S-1))^2 (T-1)).
enum class TimeSpacing { Quadratic, Uniform };
std::vector<int> spaced_timesteps(int total, int count, TimeSpacing spacing);

} // namespace tetdiff
