#include "tetdiff/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace tetdiff {

double NoiseSchedule::sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar_at(t)); }
double NoiseSchedule::sqrt_one_minus_alpha_bar(int t) const { return std::sqrt(1.0 - alpha_bar_at(t)); }

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 2) throw std::invalid_argument("make_schedule: need at least 2 steps");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("make_schedule: need 0 < beta_1 <= beta_T < 1");

    NoiseSchedule s;
    s.steps = steps;
    s.beta.resize(steps);
    s.alpha.resize(steps);
    s.alpha_bar.resize(steps);
    double prod = 1.0;
    for (int t = 0; t < steps; ++t) {
        s.beta[t] = beta_start + (beta_end - beta_start) * t / (steps - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

std::vector<int> spaced_timesteps(int total, int count, TimeSpacing spacing) {
    if (count < 1 || count > total)
        throw std::invalid_argument("spaced_timesteps: need 1 <= count <= total");
    std::vector<int> ts;
    if (count == 1) {
        ts.push_back(total);
        return ts;
    }
    for (int i = 0; i < count; ++i) {
        double frac = static_cast<double>(i) / (count - 1);
        double g = spacing == TimeSpacing::Quadratic ? frac * frac : frac;
        int t = 1 + static_cast<int>(std::lround(g * (total - 1)));
        if (ts.empty() || t != ts.back()) ts.push_back(t);
    }
    return ts;
}

} // namespace tetdiff
