#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "tetdiff/rng.hpp"
#include "tetdiff/schedule.hpp"
#include "tetdiff/scoremodel.hpp"
#include "tetdiff/tensor.hpp"
#include "tetdiff/tetgrid.hpp"

namespace tetdiff {

// Standard-normal noise at mask-1 sites (all channels), zero elsewhere.
// Draw order is channel-major and skips infilled sites.
void fill_masked_normal(Tensor& t, const std::vector<std::uint8_t>& site_mask, Rng& rng);

// Closed-form marginal x_t = sqrt(abar_t) x0 + sqrt(1-abar_t) eps.
// t = 0 is allowed and returns x0 (abar_0 == 1).
Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched,
                      const std::vector<std::uint8_t>& site_mask);

// Mean squared eps-error over mask-1 sites, t drawn uniformly per item.
double denoising_loss(const ScoreModel& model, const std::vector<Tensor>& batch,
                      const std::vector<std::uint8_t>& site_mask, const NoiseSchedule& sched,
                      Rng& rng);

// x0_hat = (x_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t), optionally clipped
// to the [-1, 1] data range.
Tensor predict_x0(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched,
                  bool clip = false);

// Called once per sampler step with (t, x0_hat at that step).
using TrajectoryHook = std::function<void(int, const Tensor&)>;

// clip_x0 = true pins the per-step x0 prediction to the [-1,1] data range
// (the update then follows the posterior mean of the clipped prediction).
// Use it when sampling trained models on range-normalized data; leave it
// off for analytic-oracle validation, whose targets are not range-limited.
Tensor ddpm_sample(const ScoreModel& model, const NoiseSchedule& sched, int channels, int dim,
                   const std::vector<std::uint8_t>& site_mask, Rng& rng,
                   const TrajectoryHook& hook = nullptr, bool clip_x0 = false);

// `replace`, when given, is applied after every update with the new time
// index (deterministic conditioning along the DDIM path).
Tensor ddim_sample(const ScoreModel& model, const NoiseSchedule& sched, const Tensor& latent,
                   const std::vector<std::uint8_t>& site_mask, int steps,
                   TimeSpacing spacing = TimeSpacing::Quadratic,
                   const TrajectoryHook& hook = nullptr, bool clip_x0 = false,
                   const std::function<void(Tensor&, int)>& replace = nullptr);

// Spherical interpolation of flattened latents; falls back to linear when
// the angle between them is below 1e-6.
Tensor slerp(const Tensor& a, const Tensor& b, double u);

// Replacement conditioning: while t > unfreeze_t, sites selected by
// known_channel_mask (per channel x site) are overwritten with forward
// diffusion draws of `known`; below unfreeze_t the region evolves freely.
Tensor conditional_sample(const ScoreModel& model, const NoiseSchedule& sched, const Tensor& known,
                          const std::vector<std::uint8_t>& known_channel_mask,
                          const std::vector<std::uint8_t>& site_mask, int unfreeze_t, Rng& rng,
                          const TrajectoryHook& hook = nullptr, bool clip_x0 = false);

// Regenerates the deformation channels conditioned on a +-1 SDF channel
// (replacement over channel 3 at every lattice site, unfreeze_t = 0).
Tensor refine_deformations(const ScoreModel& model, const NoiseSchedule& sched, const Tensor& x0,
                           const std::vector<std::uint8_t>& site_mask, Rng& rng,
                           bool clip_x0 = false);

// Sign-normalizes the SDF channel (0 maps to +1), de-scales deformations by
// delta_max and clips; returns a normalized GridState.
GridState finalize(const Tensor& x0, const TetGrid& grid);

} // namespace tetdiff
