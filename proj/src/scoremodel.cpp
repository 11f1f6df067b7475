#include "tetdiff/scoremodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "tetdiff/diffusion.hpp"
#include "tetdiff/errors.hpp"
#include "tetdiff/parallel.hpp"
#include "tetdiff/rng.hpp"

namespace tetdiff {

GaussianOracle::GaussianOracle(Tensor mu, double sigma2, NoiseSchedule sched)
    : mu_(std::move(mu)), sigma2_(sigma2), sched_(std::move(sched)) {
    if (sigma2_ < 0.0) throw std::invalid_argument("GaussianOracle: sigma2 must be >= 0");
}

Tensor GaussianOracle::eval(const Tensor& x_t, int t, const std::vector<std::uint8_t>& mask) const {
    require_same_shape(x_t, mu_, "GaussianOracle::eval");
    double abar = sched_.alpha_bar_at(t);
    double scale = std::sqrt(1.0 - abar) / (abar * sigma2_ + 1.0 - abar);
    double root = std::sqrt(abar);
    Tensor out(x_t.channels, x_t.dim);
    const std::size_t sites = x_t.sites();
    for (int c = 0; c < x_t.channels; ++c) {
        const double* x = x_t.channel(c);
        const double* m = mu_.channel(c);
        double* o = out.channel(c);
        for (std::size_t i = 0; i < sites; ++i) o[i] = mask[i] ? (x[i] - root * m[i]) * scale : 0.0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// DenoiserNet

namespace {

constexpr int kKernel = 3;
constexpr int kKernelVolume = kKernel * kKernel * kKernel;

double silu(double x) { return x / (1.0 + std::exp(-x)); }
double silu_grad(double x) {
    double s = 1.0 / (1.0 + std::exp(-x));
    return s * (1.0 + x * (1.0 - s));
}

std::vector<double> time_embedding(int t, int dim) {
    std::vector<double> emb(dim);
    int half = dim / 2;
    for (int j = 0; j < half; ++j) {
        double omega = std::exp(-std::log(10000.0) * j / half);
        emb[2 * j] = std::sin(t * omega);
        emb[2 * j + 1] = std::cos(t * omega);
    }
    return emb;
}

} // namespace

// Convolution kernels; separated so forward and backward share the slab
// iteration logic.
struct NetKernels {
    // out[o] += sum_i conv(in[i], w[o][i]); w laid out [o][i][dx][dy][dz]
    static void conv_forward(const Tensor& in, Tensor& out, const double* w, const double* bias,
                             const double* time_bias) {
        const int D = in.dim, ic = in.channels, oc = out.channels;
        const std::size_t sites = in.sites();
        parallel_chunks(oc, [&](std::size_t ob, std::size_t oe) {
            for (std::size_t o = ob; o < oe; ++o) {
                double* dst = out.channel(static_cast<int>(o));
                double base = bias[o] + time_bias[o];
                for (std::size_t p = 0; p < sites; ++p) dst[p] = base;
                for (int i = 0; i < ic; ++i) {
                    const double* src = in.channel(i);
                    const double* wk = w + (o * ic + i) * kKernelVolume;
                    accumulate_conv(src, dst, wk, D, false);
                }
            }
        });
    }

    // dW[o][i][k] = sum_pos dOut[o][pos] * in[i][pos + k - 1]
    static void conv_grad_weights(const Tensor& in, const Tensor& d_out, double* dw) {
        const int D = in.dim, ic = in.channels, oc = d_out.channels;
        parallel_chunks(oc, [&](std::size_t ob, std::size_t oe) {
            for (std::size_t o = ob; o < oe; ++o) {
                const double* g = d_out.channel(static_cast<int>(o));
                for (int i = 0; i < ic; ++i) {
                    const double* src = in.channel(i);
                    double* wk = dw + (o * ic + i) * kKernelVolume;
                    for (int dx = 0; dx < 3; ++dx)
                        for (int dy = 0; dy < 3; ++dy)
                            for (int dz = 0; dz < 3; ++dz)
                                wk[(dx * 3 + dy) * 3 + dz] +=
                                    slab_dot(g, src, D, dx - 1, dy - 1, dz - 1);
                }
            }
        });
    }

    // dIn[i][q] = sum_{o,k} w[o][i][k] * dOut[o][q - (k - 1)]
    static void conv_grad_input(const Tensor& d_out, Tensor& d_in, const double* w) {
        const int D = d_in.dim, ic = d_in.channels, oc = d_out.channels;
        parallel_chunks(ic, [&](std::size_t ib, std::size_t ie) {
            for (std::size_t i = ib; i < ie; ++i) {
                double* dst = d_in.channel(static_cast<int>(i));
                std::fill(dst, dst + d_in.sites(), 0.0);
                for (int o = 0; o < oc; ++o) {
                    const double* src = d_out.channel(o);
                    const double* wk = w + (o * ic + i) * kKernelVolume;
                    accumulate_conv(src, dst, wk, D, true);
                }
            }
        });
    }

private:
    // dst[x,y,z] += w[k] * src[x+ox, y+oy, z+oz] over every valid offset;
    // `flip` mirrors the kernel (transposed convolution).
    static void accumulate_conv(const double* src, double* dst, const double* w, int D, bool flip) {
        for (int dx = 0; dx < 3; ++dx)
            for (int dy = 0; dy < 3; ++dy)
                for (int dz = 0; dz < 3; ++dz) {
                    double wv = flip ? w[((2 - dx) * 3 + (2 - dy)) * 3 + (2 - dz)]
                                     : w[(dx * 3 + dy) * 3 + dz];
                    if (wv == 0.0) continue;
                    shift_axpy(src, dst, wv, D, dx - 1, dy - 1, dz - 1);
                }
    }

    static void shift_axpy(const double* src, double* dst, double w, int D, int ox, int oy, int oz) {
        int x0 = std::max(0, -ox), x1 = std::min(D, D - ox);
        int y0 = std::max(0, -oy), y1 = std::min(D, D - oy);
        int z0 = std::max(0, -oz), z1 = std::min(D, D - oz);
        for (int x = x0; x < x1; ++x)
            for (int y = y0; y < y1; ++y) {
                double* d = dst + (static_cast<std::size_t>(x) * D + y) * D + z0;
                const double* s =
                    src + (static_cast<std::size_t>(x + ox) * D + (y + oy)) * D + (z0 + oz);
                for (int z = z0; z < z1; ++z) *d++ += w * *s++;
            }
    }

    static double slab_dot(const double* g, const double* src, int D, int ox, int oy, int oz) {
        int x0 = std::max(0, -ox), x1 = std::min(D, D - ox);
        int y0 = std::max(0, -oy), y1 = std::min(D, D - oy);
        int z0 = std::max(0, -oz), z1 = std::min(D, D - oz);
        double acc = 0.0;
        for (int x = x0; x < x1; ++x)
            for (int y = y0; y < y1; ++y) {
                const double* a = g + (static_cast<std::size_t>(x) * D + y) * D + z0;
                const double* b =
                    src + (static_cast<std::size_t>(x + ox) * D + (y + oy)) * D + (z0 + oz);
                for (int z = z0; z < z1; ++z) acc += *a++ * *b++;
            }
        return acc;
    }
};

std::vector<int> NetConfig::hidden_widths() const {
    std::vector<int> w;
    int hidden = layers - 1;
    for (int i = 0; i < hidden; ++i) w.push_back(i < (hidden + 1) / 2 ? width1 : width2);
    return w;
}

DenoiserNet::DenoiserNet(NetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg_.time_dim % 2 != 0 || cfg_.time_dim <= 0)
        throw std::invalid_argument("DenoiserNet: time_dim must be even and positive");
    if (cfg_.width1 <= 0 || cfg_.width2 <= 0 || cfg_.data_channels <= 0 || cfg_.layers < 2)
        throw std::invalid_argument("DenoiserNet: need positive widths and >= 2 layers");

    widths_ = cfg_.hidden_widths();
    widths_.push_back(cfg_.data_channels);
    std::vector<int> in_channels = {cfg_.data_channels + 1};
    for (std::size_t i = 0; i + 1 < widths_.size(); ++i) in_channels.push_back(widths_[i]);
    const int L = cfg_.layers;

    std::size_t offset = 0;
    for (int l = 0; l < L; ++l) {
        std::string tag = "conv" + std::to_string(l + 1);
        std::size_t wsize = static_cast<std::size_t>(widths_[l]) * in_channels[l] * kKernelVolume;
        blocks_.push_back({tag + ".weight", offset, wsize});
        offset += wsize;
        blocks_.push_back({tag + ".bias", offset, static_cast<std::size_t>(widths_[l])});
        offset += widths_[l];
        blocks_.push_back({tag + ".time", offset, static_cast<std::size_t>(widths_[l]) * cfg_.time_dim});
        offset += static_cast<std::size_t>(widths_[l]) * cfg_.time_dim;
    }
    blocks_.push_back({"skip.gain", offset, static_cast<std::size_t>(cfg_.data_channels)});
    offset += cfg_.data_channels;
    blocks_.push_back({"skip.time", offset,
                       static_cast<std::size_t>(cfg_.data_channels) * cfg_.time_dim});
    offset += static_cast<std::size_t>(cfg_.data_channels) * cfg_.time_dim;
    params_.assign(offset, 0.0);

    Rng rng(seed);
    for (int l = 0; l < L; ++l) {
        const Block& wb = blocks_[3 * l];
        double scale = std::sqrt(2.0 / (in_channels[l] * kKernelVolume));
        for (std::size_t i = 0; i < wb.size; ++i) params_[wb.offset + i] = scale * rng.normal();
        const Block& tb = blocks_[3 * l + 2];
        for (std::size_t i = 0; i < tb.size; ++i) params_[tb.offset + i] = 0.02 * rng.normal();
    }
    const Block& skip_gain = blocks_[blocks_.size() - 2];
    for (int c = 0; c < cfg_.data_channels; ++c) params_[skip_gain.offset + c] = 1.0;
}

Tensor DenoiserNet::forward(const Tensor& x_t, int t, const std::vector<std::uint8_t>& mask,
                            Cache& cache) const {
    if (x_t.channels != cfg_.data_channels)
        throw DimensionError("DenoiserNet: expected " + std::to_string(cfg_.data_channels) +
                             " data channels");
    if (mask.size() != x_t.sites()) throw DimensionError("DenoiserNet: mask size mismatch");

    cache = Cache{};
    cache.t = t;
    cache.emb = time_embedding(t, cfg_.time_dim);

    // data channels re-zeroed at infilled sites; mask appended as channel 4
    cache.input = Tensor(cfg_.data_channels + 1, x_t.dim);
    for (int c = 0; c < cfg_.data_channels; ++c) {
        const double* src = x_t.channel(c);
        double* dst = cache.input.channel(c);
        for (std::size_t i = 0; i < x_t.sites(); ++i) dst[i] = mask[i] ? src[i] : 0.0;
    }
    {
        double* dst = cache.input.channel(cfg_.data_channels);
        for (std::size_t i = 0; i < mask.size(); ++i) dst[i] = mask[i];
    }

    const Tensor* current = &cache.input;
    const int L = cfg_.layers;
    for (int l = 0; l < L; ++l) {
        const Block& wb = blocks_[3 * l];
        const Block& bb = blocks_[3 * l + 1];
        const Block& tb = blocks_[3 * l + 2];

        std::vector<double> time_bias(widths_[l], 0.0);
        for (int o = 0; o < widths_[l]; ++o)
            for (int e = 0; e < cfg_.time_dim; ++e)
                time_bias[o] += params_[tb.offset + o * cfg_.time_dim + e] * cache.emb[e];

        Tensor pre(widths_[l], x_t.dim);
        NetKernels::conv_forward(*current, pre, params_.data() + wb.offset,
                                 params_.data() + bb.offset, time_bias.data());
        cache.pre.push_back(std::move(pre));

        Tensor act = cache.pre.back();
        if (l < L - 1)
            for (double& v : act.v) v = silu(v);
        cache.act.push_back(std::move(act));
        current = &cache.act.back();
    }

    // gated identity path from the data channels, gain modulated by time
    const Block& skip_gain = blocks_[blocks_.size() - 2];
    const Block& skip_time = blocks_.back();
    Tensor& out = cache.act.back();
    for (int c = 0; c < cfg_.data_channels; ++c) {
        double gain = params_[skip_gain.offset + c];
        for (int e = 0; e < cfg_.time_dim; ++e)
            gain += params_[skip_time.offset + c * cfg_.time_dim + e] * cache.emb[e];
        const double* src = cache.input.channel(c);
        double* dst = out.channel(c);
        for (std::size_t i = 0; i < out.sites(); ++i) dst[i] += gain * src[i];
    }
    cache.valid = true;
    return cache.act.back();
}

Tensor DenoiserNet::eval(const Tensor& x_t, int t, const std::vector<std::uint8_t>& mask) const {
    Cache cache;
    return forward(x_t, t, mask, cache);
}

std::vector<double> DenoiserNet::backward(const Cache& cache, const Tensor& upstream) const {
    if (!cache.valid) throw StateError("DenoiserNet::backward: no cached forward pass");
    require_same_shape(upstream, cache.act.back(), "DenoiserNet::backward");

    std::vector<double> grad(params_.size(), 0.0);
    const Block& skip_gain = blocks_[blocks_.size() - 2];
    const Block& skip_time = blocks_.back();
    for (int c = 0; c < cfg_.data_channels; ++c) {
        const double* up = upstream.channel(c);
        const double* src = cache.input.channel(c);
        double acc = 0.0;
        for (std::size_t i = 0; i < upstream.sites(); ++i) acc += up[i] * src[i];
        grad[skip_gain.offset + c] = acc;
        for (int e = 0; e < cfg_.time_dim; ++e)
            grad[skip_time.offset + c * cfg_.time_dim + e] = acc * cache.emb[e];
    }

    Tensor delta = upstream; // dLoss/dPre of the current layer once activation is unwound
    for (int l = cfg_.layers - 1; l >= 0; --l) {
        if (l < cfg_.layers - 1) {
            // delta currently holds dLoss/dAct; fold in the SiLU derivative
            const Tensor& pre = cache.pre[l];
            for (std::size_t i = 0; i < delta.v.size(); ++i) delta.v[i] *= silu_grad(pre.v[i]);
        }
        const Block& wb = blocks_[3 * l];
        const Block& bb = blocks_[3 * l + 1];
        const Block& tb = blocks_[3 * l + 2];
        const Tensor& input = l == 0 ? cache.input : cache.act[l - 1];

        NetKernels::conv_grad_weights(input, delta, grad.data() + wb.offset);
        for (int o = 0; o < widths_[l]; ++o) {
            const double* g = delta.channel(o);
            double sum = 0.0;
            for (std::size_t i = 0; i < delta.sites(); ++i) sum += g[i];
            grad[bb.offset + o] = sum;
            for (int e = 0; e < cfg_.time_dim; ++e)
                grad[tb.offset + o * cfg_.time_dim + e] = sum * cache.emb[e];
        }
        if (l > 0) {
            Tensor d_in(cache.act[l - 1].channels, delta.dim);
            NetKernels::conv_grad_input(delta, d_in, params_.data() + wb.offset);
            delta = std::move(d_in);
        }
    }
    return grad;
}

void DenoiserNet::quantize_params() {
    for (double& p : params_) p = static_cast<float>(p);
}

// ---------------------------------------------------------------------------
// training

TrainResult train(DenoiserNet& net, const std::vector<GridState>& dataset, const TetGrid& grid,
                  const NoiseSchedule& sched, const TrainConfig& cfg) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& s : dataset)
        if (!s.normalized) throw StateError("train: dataset states must be normalized");
    if (cfg.jitter < 0.0 || cfg.jitter > 0.1 * grid.delta_max)
        throw std::invalid_argument("train: jitter must be in [0, 0.1 * delta_max]");
    if (cfg.steps < 0 || cfg.batch < 1 || cfg.learning_rate <= 0.0)
        throw std::invalid_argument("train: bad step/batch/learning-rate settings");

    Rng rng(cfg.seed);
    TrainResult result;
    result.optimizer.m.assign(net.params().size(), 0.0);
    result.optimizer.v.assign(net.params().size(), 0.0);

    const CubicEmbedding layout = embed_to_cubic(grid, GridState::zeros(grid.vertex_count()));
    std::vector<double> grad_acc(net.params().size());

    for (int step = 0; step < cfg.steps; ++step) {
        std::fill(grad_acc.begin(), grad_acc.end(), 0.0);
        double batch_loss = 0.0;

        for (int b = 0; b < cfg.batch; ++b) {
            const GridState& base = dataset[rng.index(dataset.size())];
            GridState item = base;
            if (cfg.jitter > 0.0) {
                Vec3 offset{rng.uniform(-cfg.jitter, cfg.jitter), rng.uniform(-cfg.jitter, cfg.jitter),
                            rng.uniform(-cfg.jitter, cfg.jitter)};
                for (Vec3& d : item.deformation) d += offset;
                item = clip_deformations(std::move(item), grid.delta_max);
            }
            CubicEmbedding emb = embed_to_cubic(grid, item);

            int t = 1 + static_cast<int>(rng.index(sched.steps));
            Tensor eps(emb.data.channels, emb.data.dim);
            fill_masked_normal(eps, emb.mask, rng);
            Tensor x_t = forward_sample(emb.data, t, eps, sched, emb.mask);

            DenoiserNet::Cache cache;
            Tensor pred = net.forward(x_t, t, emb.mask, cache);

            Tensor upstream(pred.channels, pred.dim);
            std::size_t masked = 0;
            for (auto m : emb.mask) masked += m;
            double denom = static_cast<double>(masked) * pred.channels;
            double loss = 0.0;
            for (int c = 0; c < pred.channels; ++c) {
                const double* p = pred.channel(c);
                const double* e = eps.channel(c);
                double* u = upstream.channel(c);
                for (std::size_t i = 0; i < pred.sites(); ++i) {
                    if (!emb.mask[i]) continue;
                    double r = p[i] - e[i];
                    loss += r * r;
                    u[i] = 2.0 * r / denom;
                }
            }
            loss /= denom;
            if (!std::isfinite(loss)) throw NumericError("train: non-finite loss", step);
            batch_loss += loss;

            std::vector<double> g = net.backward(cache, upstream);
            for (std::size_t i = 0; i < g.size(); ++i) grad_acc[i] += g[i] / cfg.batch;
        }
        batch_loss /= cfg.batch;
        result.loss_trace.push_back(batch_loss);

        auto& opt = result.optimizer;
        opt.step++;
        auto& p = net.params();
        if (cfg.plain_sgd) {
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= cfg.learning_rate * grad_acc[i];
        } else {
            double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
            double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
            for (std::size_t i = 0; i < p.size(); ++i) {
                opt.m[i] = cfg.beta1 * opt.m[i] + (1.0 - cfg.beta1) * grad_acc[i];
                opt.v[i] = cfg.beta2 * opt.v[i] + (1.0 - cfg.beta2) * grad_acc[i] * grad_acc[i];
                p[i] -= cfg.learning_rate * (opt.m[i] / bc1) / (std::sqrt(opt.v[i] / bc2) + 1e-8);
            }
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// gradient check

GradCheckReport grad_check(DenoiserNet& net, const TetGrid& grid, const NoiseSchedule& sched,
                           double tolerance, int per_block, std::uint64_t seed) {
    Rng rng(seed);
    CubicEmbedding emb = embed_to_cubic(grid, GridState::zeros(grid.vertex_count()));
    Tensor x0(emb.data.channels, emb.data.dim);
    fill_masked_normal(x0, emb.mask, rng);
    Tensor eps(emb.data.channels, emb.data.dim);
    fill_masked_normal(eps, emb.mask, rng);
    int t = 1 + static_cast<int>(rng.index(sched.steps));
    Tensor x_t = forward_sample(x0, t, eps, sched, emb.mask);

    std::size_t masked = 0;
    for (auto m : emb.mask) masked += m;
    double denom = static_cast<double>(masked) * x0.channels;

    auto loss_at = [&]() {
        Tensor pred = net.eval(x_t, t, emb.mask);
        double loss = 0.0;
        for (int c = 0; c < pred.channels; ++c) {
            const double* p = pred.channel(c);
            const double* e = eps.channel(c);
            for (std::size_t i = 0; i < pred.sites(); ++i) {
                if (!emb.mask[i]) continue;
                double r = p[i] - e[i];
                loss += r * r;
            }
        }
        return loss / denom;
    };

    DenoiserNet::Cache cache;
    Tensor pred = net.forward(x_t, t, emb.mask, cache);
    Tensor upstream(pred.channels, pred.dim);
    for (int c = 0; c < pred.channels; ++c) {
        const double* p = pred.channel(c);
        const double* e = eps.channel(c);
        double* u = upstream.channel(c);
        for (std::size_t i = 0; i < pred.sites(); ++i)
            u[i] = emb.mask[i] ? 2.0 * (p[i] - e[i]) / denom : 0.0;
    }
    std::vector<double> analytic = net.backward(cache, upstream);

    GradCheckReport report;
    report.pass = true;
    const double h = 1e-4;
    for (const auto& block : net.blocks()) {
        for (int k = 0; k < per_block; ++k) {
            std::size_t idx = block.offset + rng.index(block.size);
            double saved = net.params()[idx];
            net.params()[idx] = saved + h;
            double up = loss_at();
            net.params()[idx] = saved - h;
            double down = loss_at();
            net.params()[idx] = saved;

            GradCheckEntry entry;
            entry.block = block.name;
            entry.param_index = idx;
            entry.analytic = analytic[idx];
            entry.numeric = (up - down) / (2.0 * h);
            double scale = std::max({std::fabs(entry.analytic), std::fabs(entry.numeric), 1e-6});
            entry.rel_error = std::fabs(entry.analytic - entry.numeric) / scale;
            if (entry.rel_error > report.max_rel_error) {
                report.max_rel_error = entry.rel_error;
                report.worst_block = block.name;
            }
            if (entry.rel_error > tolerance) report.pass = false;
            report.entries.push_back(entry);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// checkpoint io

namespace {

constexpr char kCheckpointMagic[4] = {'M', 'D', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;

void write_u32(std::FILE* f, std::uint32_t v) { std::fwrite(&v, 4, 1, f); }
void write_u64(std::FILE* f, std::uint64_t v) { std::fwrite(&v, 8, 1, f); }

std::uint32_t read_u32(std::FILE* f, const char* what) {
    std::uint32_t v;
    if (std::fread(&v, 4, 1, f) != 1) throw FormatError(std::string("checkpoint: truncated ") + what);
    return v;
}
std::uint64_t read_u64(std::FILE* f, const char* what) {
    std::uint64_t v;
    if (std::fread(&v, 8, 1, f) != 1) throw FormatError(std::string("checkpoint: truncated ") + what);
    return v;
}

void write_f32_blob(std::FILE* f, const std::vector<double>& v) {
    for (double x : v) {
        float r = static_cast<float>(x);
        std::fwrite(&r, 4, 1, f);
    }
}

void read_f32_blob(std::FILE* f, std::vector<double>& v, const char* what) {
    for (double& x : v) {
        float r;
        if (std::fread(&r, 4, 1, f) != 1)
            throw FormatError(std::string("checkpoint: truncated ") + what);
        x = r;
    }
}

struct FileCloser {
    std::FILE* f;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

} // namespace

void save_checkpoint(DenoiserNet& net, const std::string& path, const AdamState* opt) {
    net.quantize_params();
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    FileCloser guard{f};
    std::fwrite(kCheckpointMagic, 1, 4, f);
    write_u32(f, kCheckpointVersion);
    const NetConfig& cfg = net.config();
    write_u32(f, static_cast<std::uint32_t>(cfg.data_channels));
    write_u32(f, static_cast<std::uint32_t>(cfg.layers));
    write_u32(f, static_cast<std::uint32_t>(cfg.width1));
    write_u32(f, static_cast<std::uint32_t>(cfg.width2));
    write_u32(f, static_cast<std::uint32_t>(cfg.time_dim));
    write_u32(f, static_cast<std::uint32_t>(cfg.trained_resolution));
    write_u64(f, net.params().size());
    write_f32_blob(f, net.params());
    std::uint8_t has_opt = opt != nullptr;
    std::fwrite(&has_opt, 1, 1, f);
    if (opt) {
        if (opt->m.size() != net.params().size() || opt->v.size() != net.params().size())
            throw DimensionError("checkpoint: optimizer state does not match parameters");
        write_f32_blob(f, opt->m);
        write_f32_blob(f, opt->v);
        write_u64(f, opt->step);
    }
}

DenoiserNet load_checkpoint(const std::string& path, AdamState* opt) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    FileCloser guard{f};
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw FormatError("checkpoint: bad magic in " + path);
    std::uint32_t version = read_u32(f, "version");
    if (version != kCheckpointVersion)
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));

    NetConfig cfg;
    cfg.data_channels = static_cast<int>(read_u32(f, "descriptor"));
    cfg.layers = static_cast<int>(read_u32(f, "descriptor"));
    cfg.width1 = static_cast<int>(read_u32(f, "descriptor"));
    cfg.width2 = static_cast<int>(read_u32(f, "descriptor"));
    cfg.time_dim = static_cast<int>(read_u32(f, "descriptor"));
    cfg.trained_resolution = static_cast<int>(read_u32(f, "descriptor"));

    DenoiserNet net(cfg, 0);
    std::uint64_t count = read_u64(f, "parameter count");
    if (count != net.params().size())
        throw FormatError("checkpoint: parameter count does not match architecture");
    read_f32_blob(f, net.params(), "parameters");

    std::uint8_t has_opt;
    if (std::fread(&has_opt, 1, 1, f) != 1) throw FormatError("checkpoint: truncated moment flag");
    if (has_opt && opt) {
        opt->m.resize(count);
        opt->v.resize(count);
        read_f32_blob(f, opt->m, "first moments");
        read_f32_blob(f, opt->v, "second moments");
        opt->step = read_u64(f, "optimizer step");
    }

    // the layout is fully determined by the descriptor; any size mismatch
    // means truncation or trailing garbage
    long here = std::ftell(f);
    std::fseek(f, 0, SEEK_END);
    long size = std::ftell(f);
    long expected = 4 + 4 + 6 * 4 + 8 + 4 * static_cast<long>(count) + 1 +
                    (has_opt ? 8 * static_cast<long>(count) + 8 : 0);
    (void)here;
    if (size != expected) throw FormatError("checkpoint: truncated or oversized file");
    return net;
}

} // namespace tetdiff
