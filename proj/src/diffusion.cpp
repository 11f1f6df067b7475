#include "tetdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "tetdiff/errors.hpp"

namespace tetdiff {

namespace {

void require_mask(const Tensor& t, const std::vector<std::uint8_t>& mask, const char* what) {
    if (mask.size() != t.sites()) throw DimensionError(std::string(what) + ": mask size mismatch");
}

void pin_unmasked(Tensor& t, const std::vector<std::uint8_t>& mask) {
    for (int c = 0; c < t.channels; ++c) {
        double* ch = t.channel(c);
        for (std::size_t i = 0; i < t.sites(); ++i)
            if (!mask[i]) ch[i] = 0.0;
    }
}

void check_finite(const Tensor& t, int step, const char* what) {
    if (!t.finite()) throw NumericError(std::string(what) + ": non-finite value at step t=" +
                                        std::to_string(step), step);
}

} // namespace

void fill_masked_normal(Tensor& t, const std::vector<std::uint8_t>& site_mask, Rng& rng) {
    require_mask(t, site_mask, "fill_masked_normal");
    for (int c = 0; c < t.channels; ++c) {
        double* ch = t.channel(c);
        for (std::size_t i = 0; i < t.sites(); ++i) ch[i] = site_mask[i] ? rng.normal() : 0.0;
    }
}

Tensor forward_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched,
                      const std::vector<std::uint8_t>& site_mask) {
    require_same_shape(x0, eps, "forward_sample");
    require_mask(x0, site_mask, "forward_sample");
    if (t < 0 || t > sched.steps)
        throw std::invalid_argument("forward_sample: t out of range [0, T]");
    double a = sched.sqrt_alpha_bar(t);
    double b = sched.sqrt_one_minus_alpha_bar(t);
    Tensor out(x0.channels, x0.dim);
    for (int c = 0; c < x0.channels; ++c) {
        const double* x = x0.channel(c);
        const double* e = eps.channel(c);
        double* o = out.channel(c);
        for (std::size_t i = 0; i < x0.sites(); ++i) o[i] = site_mask[i] ? a * x[i] + b * e[i] : 0.0;
    }
    return out;
}

double denoising_loss(const ScoreModel& model, const std::vector<Tensor>& batch,
                      const std::vector<std::uint8_t>& site_mask, const NoiseSchedule& sched,
                      Rng& rng) {
    if (batch.empty()) throw std::invalid_argument("denoising_loss: empty batch");
    std::size_t masked = 0;
    for (auto m : site_mask) masked += m;
    if (masked == 0) throw std::invalid_argument("denoising_loss: mask selects no sites (undefined loss)");

    double total = 0.0;
    for (const Tensor& x0 : batch) {
        require_mask(x0, site_mask, "denoising_loss");
        int t = 1 + static_cast<int>(rng.index(sched.steps));
        Tensor eps(x0.channels, x0.dim);
        fill_masked_normal(eps, site_mask, rng);
        Tensor x_t = forward_sample(x0, t, eps, sched, site_mask);
        Tensor pred = model.eval(x_t, t, site_mask);
        require_same_shape(pred, x0, "denoising_loss: model output");
        check_finite(pred, t, "denoising_loss");

        double item = 0.0;
        for (int c = 0; c < x0.channels; ++c) {
            const double* p = pred.channel(c);
            const double* e = eps.channel(c);
            for (std::size_t i = 0; i < x0.sites(); ++i) {
                if (!site_mask[i]) continue;
                double r = p[i] - e[i];
                item += r * r;
            }
        }
        total += item / (static_cast<double>(masked) * x0.channels);
    }
    return total / batch.size();
}

Tensor predict_x0(const Tensor& x_t, int t, const Tensor& eps_hat, const NoiseSchedule& sched,
                  bool clip) {
    require_same_shape(x_t, eps_hat, "predict_x0");
    if (t < 1 || t > sched.steps) throw std::invalid_argument("predict_x0: t out of range");
    double a = sched.sqrt_alpha_bar(t);
    double b = sched.sqrt_one_minus_alpha_bar(t);
    Tensor out(x_t.channels, x_t.dim);
    for (std::size_t i = 0; i < x_t.v.size(); ++i) {
        double v = (x_t.v[i] - b * eps_hat.v[i]) / a;
        out.v[i] = clip ? std::clamp(v, -1.0, 1.0) : v;
    }
    return out;
}

namespace {

// Shared DDPM ancestral loop; `replace` (optional) is applied right after
// each update with the new time index t-1. With clip_x0 the update follows
// the posterior mean of the clamped x0 prediction (identical algebra when
// the prediction is in range).
Tensor ancestral_loop(const ScoreModel& model, const NoiseSchedule& sched, int channels, int dim,
                      const std::vector<std::uint8_t>& site_mask, Rng& rng,
                      const std::function<void(Tensor&, int)>& replace, const TrajectoryHook& hook,
                      bool clip_x0) {
    Tensor x(channels, dim);
    fill_masked_normal(x, site_mask, rng);
    Tensor z(channels, dim);
    for (int t = sched.steps; t >= 1; --t) {
        Tensor eps_hat = model.eval(x, t, site_mask);
        require_same_shape(eps_hat, x, "ddpm_sample: model output");
        check_finite(eps_hat, t, "ddpm_sample");
        if (hook) hook(t, predict_x0(x, t, eps_hat, sched, clip_x0));

        double sigma = std::sqrt(sched.beta_at(t));
        if (t > 1)
            fill_masked_normal(z, site_mask, rng);
        else
            std::fill(z.v.begin(), z.v.end(), 0.0);

        if (clip_x0) {
            Tensor x0_hat = predict_x0(x, t, eps_hat, sched, true);
            double abar = sched.alpha_bar_at(t), abar_prev = sched.alpha_bar_at(t - 1);
            double c0 = std::sqrt(abar_prev) * sched.beta_at(t) / (1.0 - abar);
            double ct = std::sqrt(sched.alpha_at(t)) * (1.0 - abar_prev) / (1.0 - abar);
            for (std::size_t i = 0; i < x.v.size(); ++i)
                x.v[i] = c0 * x0_hat.v[i] + ct * x.v[i] + sigma * z.v[i];
        } else {
            double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
            double coeff = sched.beta_at(t) / sched.sqrt_one_minus_alpha_bar(t);
            for (std::size_t i = 0; i < x.v.size(); ++i)
                x.v[i] = inv_sqrt_alpha * (x.v[i] - coeff * eps_hat.v[i]) + sigma * z.v[i];
        }
        pin_unmasked(x, site_mask);
        check_finite(x, t - 1, "ddpm_sample");
        if (replace) replace(x, t - 1);
    }
    return x;
}

} // namespace

Tensor ddpm_sample(const ScoreModel& model, const NoiseSchedule& sched, int channels, int dim,
                   const std::vector<std::uint8_t>& site_mask, Rng& rng, const TrajectoryHook& hook,
                   bool clip_x0) {
    return ancestral_loop(model, sched, channels, dim, site_mask, rng, nullptr, hook, clip_x0);
}

Tensor ddim_sample(const ScoreModel& model, const NoiseSchedule& sched, const Tensor& latent,
                   const std::vector<std::uint8_t>& site_mask, int steps, TimeSpacing spacing,
                   const TrajectoryHook& hook, bool clip_x0,
                   const std::function<void(Tensor&, int)>& replace) {
    require_mask(latent, site_mask, "ddim_sample");
    std::vector<int> ts = spaced_timesteps(sched.steps, steps, spacing);

    Tensor x = latent;
    pin_unmasked(x, site_mask);
    for (int i = static_cast<int>(ts.size()) - 1; i >= 0; --i) {
        int t = ts[i];
        int prev = i > 0 ? ts[i - 1] : 0;
        Tensor eps_hat = model.eval(x, t, site_mask);
        require_same_shape(eps_hat, x, "ddim_sample: model output");
        check_finite(eps_hat, t, "ddim_sample");
        Tensor x0_hat = predict_x0(x, t, eps_hat, sched, clip_x0);
        if (hook) hook(t, x0_hat);

        if (clip_x0) {
            // keep the trajectory consistent with the clamped prediction
            double sa = sched.sqrt_alpha_bar(t), sb = sched.sqrt_one_minus_alpha_bar(t);
            for (std::size_t k = 0; k < x.v.size(); ++k)
                eps_hat.v[k] = (x.v[k] - sa * x0_hat.v[k]) / sb;
        }
        double a = sched.sqrt_alpha_bar(prev);
        double b = sched.sqrt_one_minus_alpha_bar(prev);
        for (std::size_t k = 0; k < x.v.size(); ++k) x.v[k] = a * x0_hat.v[k] + b * eps_hat.v[k];
        pin_unmasked(x, site_mask);
        check_finite(x, prev, "ddim_sample");
        if (replace) replace(x, prev);
    }
    return x;
}

Tensor slerp(const Tensor& a, const Tensor& b, double u) {
    require_same_shape(a, b, "slerp");
    double na = 0.0, nb = 0.0, d = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) {
        na += a.v[i] * a.v[i];
        nb += b.v[i] * b.v[i];
        d += a.v[i] * b.v[i];
    }
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("slerp: zero latent");
    double cos_omega = std::clamp(d / std::sqrt(na * nb), -1.0, 1.0);
    double omega = std::acos(cos_omega);

    Tensor out(a.channels, a.dim);
    if (omega < 1e-6) {
        for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = (1.0 - u) * a.v[i] + u * b.v[i];
        return out;
    }
    double s = std::sin(omega);
    double wa = std::sin((1.0 - u) * omega) / s;
    double wb = std::sin(u * omega) / s;
    for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = wa * a.v[i] + wb * b.v[i];
    return out;
}

Tensor conditional_sample(const ScoreModel& model, const NoiseSchedule& sched, const Tensor& known,
                          const std::vector<std::uint8_t>& known_channel_mask,
                          const std::vector<std::uint8_t>& site_mask, int unfreeze_t, Rng& rng,
                          const TrajectoryHook& hook, bool clip_x0) {
    require_mask(known, site_mask, "conditional_sample");
    if (known_channel_mask.size() != known.v.size())
        throw DimensionError("conditional_sample: known mask must cover channels x sites");
    if (unfreeze_t < 0 || unfreeze_t > sched.steps)
        throw std::invalid_argument("conditional_sample: unfreeze_t out of [0, T]");

    bool any_known = false;
    for (auto m : known_channel_mask) any_known |= m != 0;

    Tensor eps(known.channels, known.dim);
    auto replace = [&](Tensor& x, int t_new) {
        // loop runs at step t = t_new + 1; replacement applies while t > unfreeze_t
        if (!any_known || t_new + 1 <= unfreeze_t) return;
        fill_masked_normal(eps, site_mask, rng);
        Tensor known_t = forward_sample(known, t_new, eps, sched, site_mask);
        for (std::size_t i = 0; i < x.v.size(); ++i)
            if (known_channel_mask[i]) x.v[i] = known_t.v[i];
        // replacement must stand verbatim
        for (std::size_t i = 0; i < x.v.size(); ++i)
            if (known_channel_mask[i] && x.v[i] != known_t.v[i])
                throw std::logic_error("conditional_sample: replaced site was altered");
    };
    return ancestral_loop(model, sched, known.channels, known.dim, site_mask, rng, replace, hook,
                          clip_x0);
}

Tensor refine_deformations(const ScoreModel& model, const NoiseSchedule& sched, const Tensor& x0,
                           const std::vector<std::uint8_t>& site_mask, Rng& rng, bool clip_x0) {
    require_mask(x0, site_mask, "refine_deformations");
    if (x0.channels != 4) throw DimensionError("refine_deformations: expected 4 channels");
    const double* sdf = x0.channel(3);
    for (std::size_t i = 0; i < x0.sites(); ++i)
        if (site_mask[i] && sdf[i] != 1.0 && sdf[i] != -1.0)
            throw StateError("refine_deformations: SDF channel must be normalized to +-1");

    std::vector<std::uint8_t> known_mask(x0.v.size(), 0);
    for (std::size_t i = 0; i < x0.sites(); ++i)
        known_mask[3 * x0.sites() + i] = site_mask[i];
    return conditional_sample(model, sched, x0, known_mask, site_mask, 0, rng, nullptr, clip_x0);
}

GridState finalize(const Tensor& x0, const TetGrid& grid) {
    if (x0.channels != 4 || x0.dim != 2 * grid.resolution + 1)
        throw DimensionError("finalize: tensor does not match grid embedding");
    CubicEmbedding layout = embed_to_cubic(grid, GridState::zeros(grid.vertex_count()));

    GridState s = GridState::zeros(grid.vertex_count());
    for (int v = 0; v < grid.vertex_count(); ++v) {
        std::size_t site = layout.vertex_to_site[v];
        s.sdf[v] = x0.channel(3)[site] >= 0.0 ? 1.0 : -1.0;
        for (int c = 0; c < 3; ++c)
            s.deformation[v][c] =
                std::clamp(x0.channel(c)[site] * grid.delta_max, -grid.delta_max, grid.delta_max);
    }
    s.normalized = true;
    return s;
}

} // namespace tetdiff
