#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tetdiff/schedule.hpp"
#include "tetdiff/tensor.hpp"
#include "tetdiff/tetgrid.hpp"

namespace tetdiff {

// Epsilon-predictor interface consumed by the samplers. Output must match
// the input shape; values at mask-0 sites are ignored by all consumers.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual Tensor eval(const Tensor& x_t, int t, const std::vector<std::uint8_t>& mask) const = 0;
    virtual bool trainable() const { return false; }
};

// Exact minimizer of the denoising loss for data ~ N(mu, sigma2 I):
//   eps_hat = (x_t - sqrt(abar_t) mu) * sqrt(1-abar_t) / (abar_t sigma2 + 1 - abar_t)
class GaussianOracle : public ScoreModel {
public:
    GaussianOracle(Tensor mu, double sigma2, NoiseSchedule sched);
    Tensor eval(const Tensor& x_t, int t, const std::vector<std::uint8_t>& mask) const override;

private:
    Tensor mu_;
    double sigma2_;
    NoiseSchedule sched_;
};

struct NetConfig {
    int data_channels = 4;
    int layers = 3;             // total conv layers (>= 2); hidden = layers - 1
    int width1 = 16, width2 = 16; // first/second half hidden widths
    int time_dim = 16; // sinusoidal embedding size, even
    int trained_resolution = 0; // grid R the checkpoint belongs to; 0 = unspecified

    std::vector<int> hidden_widths() const;
};

// A stack of 3x3x3 zero-padded convolution layers (5 -> hidden... -> 4, SiLU
// between them; receptive radius = layer count). The binary lattice mask
// rides along as a fifth input channel and a learned projection of the
// sinusoidal time embedding is added as a per-channel bias in every layer.
// A learned per-channel gain (initialized to 1, time-modulated) feeds the
// data channels straight to the output, so the near-identity map that
// eps-prediction approaches at large t costs no capacity. No down/up-
// sampling: desk-scale lattices are small enough to keep full resolution.
class DenoiserNet : public ScoreModel {
public:
    struct Block {
        std::string name;
        std::size_t offset = 0, size = 0;
    };

    struct Cache {
        bool valid = false;
        int t = 0;
        Tensor input;                // 5 channels
        std::vector<Tensor> pre;     // pre-activation per layer
        std::vector<Tensor> act;     // post-activation per layer (act.back() = output)
        std::vector<double> emb;     // time embedding
    };

    DenoiserNet(NetConfig cfg, std::uint64_t seed);

    Tensor eval(const Tensor& x_t, int t, const std::vector<std::uint8_t>& mask) const override;
    bool trainable() const override { return true; }

    Tensor forward(const Tensor& x_t, int t, const std::vector<std::uint8_t>& mask, Cache& cache) const;
    // Gradient of a scalar loss w.r.t. all parameters given dLoss/dOutput.
    std::vector<double> backward(const Cache& cache, const Tensor& upstream) const;

    const NetConfig& config() const { return cfg_; }
    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    const std::vector<Block>& blocks() const { return blocks_; }

    // rounds parameters to 32-bit storage precision (what checkpoints hold)
    void quantize_params();

private:
    friend struct NetKernels;
    NetConfig cfg_;
    std::vector<int> widths_; // per-layer output channels
    std::vector<double> params_;
    std::vector<Block> blocks_;
};

struct TrainConfig {
    int steps = 2000;
    int batch = 4;
    double learning_rate = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;
    double jitter = 0.0; // global-translation augmentation amplitude, <= 0.1 * delta_max
    std::uint64_t seed = 0;
    bool plain_sgd = false; // skip Adam moments (used by step-size property tests)
};

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t step = 0;
};

struct TrainResult {
    std::vector<double> loss_trace; // one entry per step (batch mean)
    AdamState optimizer;
};

// Denoising training loop: sample item, apply global-translation jitter to
// the deformations, embed, draw (t, eps), masked eps loss, backprop, update.
TrainResult train(DenoiserNet& net, const std::vector<GridState>& dataset, const TetGrid& grid,
                  const NoiseSchedule& sched, const TrainConfig& cfg);

struct GradCheckEntry {
    std::string block;
    std::size_t param_index = 0;
    double analytic = 0.0, numeric = 0.0, rel_error = 0.0;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_error = 0.0;
    std::string worst_block;
    std::vector<GradCheckEntry> entries;
};

// Central finite differences (step 1e-4) on a fixed (x_t, t, eps, mask)
// masked loss against backward(), over `per_block` random parameters of
// every block.
GradCheckReport grad_check(DenoiserNet& net, const TetGrid& grid, const NoiseSchedule& sched,
                           double tolerance, int per_block = 10, std::uint64_t seed = 17);

// Checkpoint "MDCK": version, architecture descriptor, little-endian f32
// parameter blob, optional optimizer moment blobs. Saving first rounds live
// parameters to storage precision so a loaded checkpoint reproduces the
// saver's outputs exactly.
void save_checkpoint(DenoiserNet& net, const std::string& path, const AdamState* opt = nullptr);
DenoiserNet load_checkpoint(const std::string& path, AdamState* opt = nullptr);

} // namespace tetdiff
