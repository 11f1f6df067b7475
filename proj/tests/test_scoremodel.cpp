#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tetdiff/diffusion.hpp"
#include "tetdiff/errors.hpp"
#include "tetdiff/scoremodel.hpp"
#include "testutil.hpp"

using namespace tetdiff;

namespace {

NetConfig tiny_net_config() {
    NetConfig c;
    c.width1 = 6;
    c.width2 = 6;
    c.time_dim = 8;
    return c;
}

std::vector<std::uint8_t> ones(std::size_t n) { return std::vector<std::uint8_t>(n, 1); }

} // namespace

TEST_CASE("gaussian oracle: point-mass closed forms") {
    NoiseSchedule sched = make_schedule(100, 1e-3, 0.05);
    const int t = 37, dim = 3;
    Tensor mu(2, dim);
    Rng rng(1);
    for (double& v : mu.v) v = rng.uniform(-1, 1);
    GaussianOracle oracle(mu, 0.0, sched);
    auto mask = ones(mu.sites());

    // x_t = sqrt(abar) mu  ->  eps_hat = 0
    Tensor xt = mu;
    for (double& v : xt.v) v *= sched.sqrt_alpha_bar(t);
    Tensor eps = oracle.eval(xt, t, mask);
    for (double v : eps.v) CHECK(std::fabs(v) < 1e-12);

    // x_t = sqrt(abar) mu + sqrt(1-abar) c  ->  eps_hat = c
    const double c = 0.73;
    for (double& v : xt.v) v += sched.sqrt_one_minus_alpha_bar(t) * c;
    eps = oracle.eval(xt, t, mask);
    for (double v : eps.v) CHECK(v == doctest::Approx(c).epsilon(1e-12));
}

TEST_CASE("gaussian oracle attains the analytic denoising-loss minimum") {
    NoiseSchedule sched = make_schedule(100, 1e-3, 0.05);
    const int t = 60, dim = 3, draws = 20000;
    const double sigma2 = 0.09, mu_val = 0.4;
    Tensor mu(1, dim);
    for (double& v : mu.v) v = mu_val;
    GaussianOracle oracle(mu, sigma2, sched);
    auto mask = ones(mu.sites());

    double abar = sched.alpha_bar_at(t);
    double expected = 1.0 - (1.0 - abar) / (abar * sigma2 + 1.0 - abar);

    Rng rng(2);
    double total = 0.0;
    std::size_t count = 0;
    Tensor x0(1, dim), eps(1, dim);
    for (int d = 0; d < draws; ++d) {
        for (double& v : x0.v) v = mu_val + std::sqrt(sigma2) * rng.normal();
        fill_masked_normal(eps, mask, rng);
        Tensor xt = forward_sample(x0, t, eps, sched, mask);
        Tensor pred = oracle.eval(xt, t, mask);
        for (std::size_t i = 0; i < pred.v.size(); ++i) {
            double r = pred.v[i] - eps.v[i];
            total += r * r;
            ++count;
        }
    }
    CHECK(total / count == doctest::Approx(expected).epsilon(0.02));
}

TEST_CASE("net forward: zero weights give zero output; deterministic; shape checks") {
    TetGrid g = build_bcc_grid(2, 1.0);
    CubicEmbedding emb = embed_to_cubic(g, GridState::zeros(g.vertex_count()));

    DenoiserNet net(tiny_net_config(), 3);
    Tensor x(4, emb.dim);
    Rng rng(4);
    fill_masked_normal(x, emb.mask, rng);

    DenoiserNet zeroed = net;
    std::fill(zeroed.params().begin(), zeroed.params().end(), 0.0);
    Tensor out = zeroed.eval(x, 10, emb.mask);
    for (double v : out.v) CHECK(v == 0.0);

    Tensor a = net.eval(x, 10, emb.mask);
    Tensor b = net.eval(x, 10, emb.mask);
    CHECK(a.channels == 4);
    CHECK(a.dim == emb.dim);
    for (std::size_t i = 0; i < a.v.size(); ++i) CHECK(a.v[i] == b.v[i]);

    // time conditioning is live: different t changes the output
    Tensor c = net.eval(x, 11, emb.mask);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) diff += std::fabs(a.v[i] - c.v[i]);
    CHECK(diff > 0.0);

    Tensor wrong(3, emb.dim);
    CHECK_THROWS_AS(net.eval(wrong, 10, emb.mask), DimensionError);
}

TEST_CASE("net forward: translation equivariance on the interior") {
    const int dim = 11;
    DenoiserNet net(tiny_net_config(), 5);
    auto mask = ones(static_cast<std::size_t>(dim) * dim * dim);

    Tensor x(4, dim);
    Rng rng(6);
    fill_masked_normal(x, mask, rng);

    // shift by one site along z
    Tensor shifted(4, dim);
    for (int c = 0; c < 4; ++c)
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j)
                for (int k = 1; k < dim; ++k) shifted.at(c, i, j, k) = x.at(c, i, j, k - 1);

    Tensor ya = net.eval(x, 25, mask);
    Tensor yb = net.eval(shifted, 25, mask);

    // interior: beyond the 3-layer receptive field radius (3) on every axis
    for (int c = 0; c < 4; ++c)
        for (int i = 3; i < dim - 3; ++i)
            for (int j = 3; j < dim - 3; ++j)
                for (int k = 4; k < dim - 3; ++k)
                    CHECK(yb.at(c, i, j, k) == doctest::Approx(ya.at(c, i, j, k - 1)).epsilon(1e-9));
}

TEST_CASE("net backward: zero upstream, hand-checked single parameter, cache requirement") {
    TetGrid g = build_bcc_grid(2, 1.0);
    CubicEmbedding emb = embed_to_cubic(g, GridState::zeros(g.vertex_count()));
    DenoiserNet net(tiny_net_config(), 7);

    Tensor x(4, emb.dim);
    Rng rng(8);
    fill_masked_normal(x, emb.mask, rng);

    DenoiserNet::Cache cache;
    Tensor out = net.forward(x, 5, emb.mask, cache);
    Tensor zero_up(out.channels, out.dim);
    std::vector<double> grads = net.backward(cache, zero_up);
    for (double v : grads) CHECK(v == 0.0);

    // single live parameter: conv3 output bias of channel 0; output ch0 is
    // constant b, so dL/db for L = sum over ch0 of out = #sites
    DenoiserNet simple(tiny_net_config(), 9);
    std::fill(simple.params().begin(), simple.params().end(), 0.0);
    const DenoiserNet::Block* bias_block = nullptr;
    for (const auto& blk : simple.blocks())
        if (blk.name == "conv3.bias") bias_block = &blk;
    REQUIRE(bias_block != nullptr);
    simple.params()[bias_block->offset] = 0.37;

    DenoiserNet::Cache c2;
    Tensor out2 = simple.forward(x, 5, emb.mask, c2);
    for (std::size_t i = 0; i < out2.sites(); ++i) CHECK(out2.channel(0)[i] == 0.37);
    Tensor up(out2.channels, out2.dim);
    for (std::size_t i = 0; i < up.sites(); ++i) up.channel(0)[i] = 1.0;
    std::vector<double> g2 = simple.backward(c2, up);
    CHECK(g2[bias_block->offset] == doctest::Approx(static_cast<double>(out2.sites())));

    DenoiserNet::Cache empty;
    CHECK_THROWS_AS(net.backward(empty, zero_up), StateError);
}

TEST_CASE("grad_check: fresh net passes at 1e-4; zero net passes; corruption is caught") {
    TetGrid g = build_bcc_grid(2, 1.0);
    NoiseSchedule sched = make_schedule(50, 1e-3, 0.05);

    DenoiserNet net(tiny_net_config(), 11);
    GradCheckReport report = grad_check(net, g, sched, 1e-4, 10, 13);
    INFO("max rel error ", report.max_rel_error, " at ", report.worst_block);
    CHECK(report.pass);

    DenoiserNet zero(tiny_net_config(), 12);
    std::fill(zero.params().begin(), zero.params().end(), 0.0);
    CHECK(grad_check(zero, g, sched, 1e-4, 5, 14).pass);

    // corrupted analytic gradients are detected and attributed to the block
    CubicEmbedding emb = embed_to_cubic(g, GridState::zeros(g.vertex_count()));
    Tensor x(4, emb.dim), eps(4, emb.dim);
    Rng rng(15);
    fill_masked_normal(x, emb.mask, rng);
    fill_masked_normal(eps, emb.mask, rng);
    Tensor xt = forward_sample(x, 20, eps, sched, emb.mask);

    std::size_t masked = 0;
    for (auto m : emb.mask) masked += m;
    auto loss_of = [&](DenoiserNet& n) {
        Tensor pred = n.eval(xt, 20, emb.mask);
        double loss = 0.0;
        for (int c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < pred.sites(); ++i) {
                if (!emb.mask[i]) continue;
                double r = pred.channel(c)[i] - eps.channel(c)[i];
                loss += r * r;
            }
        return loss / (static_cast<double>(masked) * 4);
    };

    DenoiserNet::Cache cache;
    Tensor pred = net.forward(xt, 20, emb.mask, cache);
    Tensor up(4, emb.dim);
    for (int c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < up.sites(); ++i)
            if (emb.mask[i])
                up.channel(c)[i] =
                    2.0 * (pred.channel(c)[i] - eps.channel(c)[i]) / (masked * 4.0);
    std::vector<double> analytic = net.backward(cache, up);

    const auto& blk = net.blocks()[0]; // conv1.weight
    std::size_t victim = blk.offset + 3;
    double corrupted = analytic[victim] * 1.5 + 0.05;
    double h = 1e-4;
    double saved = net.params()[victim];
    net.params()[victim] = saved + h;
    double up_loss = loss_of(net);
    net.params()[victim] = saved - h;
    double down_loss = loss_of(net);
    net.params()[victim] = saved;
    double fd = (up_loss - down_loss) / (2 * h);
    CHECK(std::fabs(analytic[victim] - fd) <=
          1e-4 * std::max({std::fabs(fd), std::fabs(analytic[victim]), 1e-6}));
    CHECK(std::fabs(corrupted - fd) >
          1e-4 * std::max({std::fabs(fd), std::fabs(corrupted), 1e-6}));
    CHECK(blk.name == "conv1.weight"); // failure attributes to this block
}

TEST_CASE("mask neutrality: mask-0 input values affect nothing") {
    TetGrid g = build_bcc_grid(2, 1.0);
    CubicEmbedding emb = embed_to_cubic(g, GridState::zeros(g.vertex_count()));
    DenoiserNet net(tiny_net_config(), 16);

    Tensor x(4, emb.dim);
    Rng rng(17);
    fill_masked_normal(x, emb.mask, rng);
    Tensor dirty = x;
    for (int c = 0; c < 4; ++c)
        for (std::size_t i = 0; i < x.sites(); ++i)
            if (!emb.mask[i]) dirty.channel(c)[i] = 1e6;

    DenoiserNet::Cache ca, cb;
    Tensor ya = net.forward(x, 9, emb.mask, ca);
    Tensor yb = net.forward(dirty, 9, emb.mask, cb);
    for (std::size_t i = 0; i < ya.v.size(); ++i) CHECK(ya.v[i] == yb.v[i]);

    Tensor up(4, emb.dim);
    for (std::size_t i = 0; i < up.v.size(); ++i)
        up.v[i] = emb.mask[i % up.sites()] ? 0.01 * static_cast<double>(i % 7) : 0.0;
    std::vector<double> ga = net.backward(ca, up);
    std::vector<double> gb = net.backward(cb, up);
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(std::fabs(ga[i] - gb[i]) <= 1e-12);
}

TEST_CASE("train: zero steps, determinism, loss decreases on a toy dataset") {
    TetGrid g = build_bcc_grid(3, 1.0);
    NoiseSchedule sched = make_schedule(60, 1e-3, 0.05);

    Rng rng(18);
    std::vector<GridState> dataset;
    for (int i = 0; i < 2; ++i) {
        GridState s = GridState::zeros(g.vertex_count());
        s.normalized = true;
        for (int v = 0; v < g.vertex_count(); ++v) {
            s.sdf[v] = norm(g.vertex_positions[v]) < 0.5 + 0.1 * i ? -1.0 : 1.0;
            s.deformation[v] = {rng.uniform(-0.2, 0.2) * g.delta_max, 0, 0};
        }
        dataset.push_back(std::move(s));
    }

    TrainConfig cfg;
    cfg.steps = 0;
    cfg.seed = 19;
    DenoiserNet net(tiny_net_config(), 20);
    std::vector<double> before = net.params();
    TrainResult r0 = train(net, dataset, g, sched, cfg);
    CHECK(r0.loss_trace.empty());
    CHECK(net.params() == before);

    cfg.steps = 120;
    cfg.batch = 2;
    cfg.learning_rate = 2e-3;
    cfg.jitter = 0.05 * g.delta_max;
    DenoiserNet n1(tiny_net_config(), 20), n2(tiny_net_config(), 20);
    TrainResult r1 = train(n1, dataset, g, sched, cfg);
    TrainResult r2 = train(n2, dataset, g, sched, cfg);
    CHECK(r1.loss_trace == r2.loss_trace);
    CHECK(n1.params() == n2.params());

    double head = 0.0, tail = 0.0;
    for (int i = 0; i < 20; ++i) {
        head += r1.loss_trace[i];
        tail += r1.loss_trace[cfg.steps - 20 + i];
    }
    CHECK(tail < head);

    TrainConfig bad = cfg;
    bad.jitter = 0.2 * g.delta_max;
    CHECK_THROWS_AS(train(n1, dataset, g, sched, bad), std::invalid_argument);

    GridState raw = dataset[0];
    raw.normalized = false;
    CHECK_THROWS_AS(train(n1, {raw}, g, sched, cfg), StateError);
}

TEST_CASE("fixed-batch descent: plain gradient steps decrease the loss monotonically") {
    TetGrid g = build_bcc_grid(2, 1.0);
    NoiseSchedule sched = make_schedule(50, 1e-3, 0.05);
    CubicEmbedding emb = embed_to_cubic(g, GridState::zeros(g.vertex_count()));

    DenoiserNet net(tiny_net_config(), 21);
    Tensor x0(4, emb.dim), eps(4, emb.dim);
    Rng rng(22);
    fill_masked_normal(x0, emb.mask, rng);
    fill_masked_normal(eps, emb.mask, rng);
    const int t = 25;
    Tensor xt = forward_sample(x0, t, eps, sched, emb.mask);

    std::size_t masked = 0;
    for (auto m : emb.mask) masked += m;
    double denom = static_cast<double>(masked) * 4;

    double prev = 1e300;
    for (int step = 0; step < 100; ++step) {
        DenoiserNet::Cache cache;
        Tensor pred = net.forward(xt, t, emb.mask, cache);
        double loss = 0.0;
        Tensor up(4, emb.dim);
        for (int c = 0; c < 4; ++c)
            for (std::size_t i = 0; i < pred.sites(); ++i) {
                if (!emb.mask[i]) continue;
                double r = pred.channel(c)[i] - eps.channel(c)[i];
                loss += r * r;
                up.channel(c)[i] = 2.0 * r / denom;
            }
        loss /= denom;
        CHECK(loss <= prev + 1e-12);
        prev = loss;
        std::vector<double> grad = net.backward(cache, up);
        for (std::size_t i = 0; i < grad.size(); ++i) net.params()[i] -= 1e-4 * grad[i];
    }
}

TEST_CASE("checkpoint: bit-exact round trip, format errors") {
    testutil::TempDir tmp("ckpt");
    TetGrid g = build_bcc_grid(2, 1.0);
    CubicEmbedding emb = embed_to_cubic(g, GridState::zeros(g.vertex_count()));

    NetConfig cfg = tiny_net_config();
    cfg.trained_resolution = 2;
    DenoiserNet net(cfg, 23);
    AdamState opt;
    opt.m.assign(net.params().size(), 0.25);
    opt.v.assign(net.params().size(), 0.5);
    opt.step = 77;

    std::string path = tmp.path("model.mdck");
    save_checkpoint(net, path, &opt);

    AdamState opt_back;
    DenoiserNet back = load_checkpoint(path, &opt_back);
    CHECK(back.config().width1 == cfg.width1);
    CHECK(back.config().trained_resolution == 2);
    CHECK(back.params() == net.params()); // save quantized the live net first
    CHECK(opt_back.step == 77);
    CHECK(opt_back.m[3] == 0.25);

    Tensor x(4, emb.dim);
    Rng rng(24);
    fill_masked_normal(x, emb.mask, rng);
    Tensor ya = net.eval(x, 7, emb.mask);
    Tensor yb = back.eval(x, 7, emb.mask);
    for (std::size_t i = 0; i < ya.v.size(); ++i) CHECK(ya.v[i] == yb.v[i]);

    // truncation
    std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    // wrong magic
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputs("NOPE", f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}
