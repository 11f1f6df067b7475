#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "tetdiff/config.hpp"
#include "tetdiff/errors.hpp"
#include "tetdiff/pipeline.hpp"
#include "testutil.hpp"

using namespace tetdiff;
using namespace tetdiff::testutil;

namespace {

std::string read_bytes(const std::string& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return std::string(std::istreambuf_iterator<char>(f), {});
}

// small end-to-end configuration shared by the pipeline tests
Config tiny_config(std::uint64_t seed = 1) {
    Config cfg = parse_config("", {"grid.resolution=4", "diffusion.T=60", "diffusion.steps=20",
                                   "train.steps=25", "train.batch=2", "train.width1=6",
                                   "train.width2=6", "train.time_dim=8", "fit.iterations=25",
                                   "fit.chamfer_samples=256", "metrics.samples=256",
                                   "metrics.emd_subsample=64", "seed=" + std::to_string(seed)});
    return cfg;
}

void write_shapes(const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_obj(make_sphere(0.6, 2), dir + "/sphere.obj");
    save_obj(make_box({0.5, 0.35, 0.4}), dir + "/box.obj");
    save_obj(make_capsule(0.3, 0.3), dir + "/capsule.obj");
}

} // namespace

TEST_CASE("config: defaults, file parsing, overrides, errors") {
    Config def = parse_config("");
    CHECK(def.diffusion.T == 1000);
    CHECK(def.diffusion.beta_start == doctest::Approx(1e-4));
    CHECK(def.diffusion.beta_end == doctest::Approx(0.02));
    CHECK(def.postprocess.smooth_lambda == doctest::Approx(0.25));
    CHECK(def.postprocess.smooth_steps == 5);
    CHECK(def.postprocess.component_fraction == doctest::Approx(0.05));
    CHECK(def.metrics.samples == 2048);
    CHECK(def.fit.learning_rate == doctest::Approx(5e-4));
    CHECK(def.diffusion.unfreeze_T == 50);
    CHECK(def.grid.extent == 1.0);

    TempDir tmp("cfg");
    {
        std::ofstream f(tmp.path("a.conf"));
        f << "# comment line\n"
          << "grid.resolution = 8\n"
          << "diffusion.sampler = ddim\n"
          << "train.learning_rate = 2e-3\n";
    }
    Config cfg = parse_config(tmp.path("a.conf"));
    CHECK(cfg.grid.resolution == 8);
    CHECK(cfg.diffusion.sampler == "ddim");
    CHECK(cfg.train.learning_rate == doctest::Approx(2e-3));

    // CLI override beats the file value
    Config over = parse_config(tmp.path("a.conf"), {"grid.resolution=12"});
    CHECK(over.grid.resolution == 12);

    CHECK_THROWS_AS(parse_config("", {"diffusion.T=-1"}), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("", {"no.such.key=3"}), std::invalid_argument);
    CHECK_THROWS_AS(parse_config("", {"diffusion.T=abc"}), std::invalid_argument);
    CHECK_THROWS_AS(parse_config(tmp.path("does_not_exist.conf")), std::runtime_error);
    {
        std::ofstream f(tmp.path("bad.conf"));
        f << "grid.resolution 8\n";
    }
    CHECK_THROWS_AS(parse_config(tmp.path("bad.conf")), ParseError);

    // offending key is named
    try {
        parse_config("", {"grid.resolution=x"});
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("grid.resolution") != std::string::npos);
    }
}

TEST_CASE("pipeline: fit -> train -> sample -> export round trip") {
    TempDir tmp("pipe");
    Config cfg = tiny_config(21);
    write_shapes(tmp.path("shapes"));

    // fit
    auto outcomes = cmd_fit(cfg, {tmp.path("shapes"), tmp.path("dataset")});
    int ok = 0;
    for (const auto& o : outcomes) ok += o.ok;
    CHECK(ok == 3);
    CHECK(std::filesystem::exists(tmp.path("dataset/fit_report.jsonl")));

    // one unreadable file is recorded, not fatal
    {
        std::ofstream f(tmp.path("shapes") + "/broken.obj");
        f << "v 0 0\n";
    }
    auto outcomes2 = cmd_fit(cfg, {tmp.path("shapes"), tmp.path("dataset2")});
    CHECK(outcomes2.size() == 4);
    int bad = 0;
    for (const auto& o : outcomes2) bad += !o.ok;
    CHECK(bad == 1);

    // train
    TrainResult tr = cmd_train(cfg, {tmp.path("dataset"), tmp.path("model.mdck"), tmp.path("trace.txt")});
    CHECK(tr.loss_trace.size() == 25);
    CHECK(std::filesystem::exists(tmp.path("model.mdck")));
    CHECK(std::filesystem::exists(tmp.path("trace.txt")));

    // sample, deterministic
    SampleCommand sc{tmp.path("model.mdck"), tmp.path("gen"), 2, false, false, 0};
    auto objs = cmd_sample(cfg, sc);
    REQUIRE(objs.size() == 2);
    for (const auto& p : objs) CHECK(std::filesystem::exists(p));
    std::string bytes0 = read_bytes(objs[0]);

    SampleCommand sc2{tmp.path("model.mdck"), tmp.path("gen_repeat"), 2, false, false, 0};
    auto objs2 = cmd_sample(cfg, sc2);
    CHECK(read_bytes(objs2[0]) == bytes0);
    CHECK(read_bytes(objs2[1]) == read_bytes(objs[1]));

    // export reproduces the sampled mesh from its .tetg
    ExportCommand ex{tmp.path("gen/sample_0.tetg"), tmp.path("re_export.obj"), false};
    cmd_export(cfg, ex);
    CHECK(read_bytes(tmp.path("re_export.obj")) == bytes0);

    // incompatible checkpoint resolution is rejected
    Config other = tiny_config(21);
    other.grid.resolution = 6;
    CHECK_THROWS_AS(cmd_sample(other, sc), std::runtime_error);

    // refine keeps the file contract intact
    SampleCommand rc{tmp.path("model.mdck"), tmp.path("gen_refined"), 1, true, false, 0};
    auto refined = cmd_sample(cfg, rc);
    CHECK(std::filesystem::exists(refined[0]));

    // trajectory dump writes snapshots plus an index
    SampleCommand tc{tmp.path("model.mdck"), tmp.path("gen_traj"), 1, false, false, 20};
    cmd_sample(cfg, tc);
    CHECK(std::filesystem::exists(tmp.path("gen_traj/sample_0_trajectory.json")));
    CHECK(std::filesystem::exists(tmp.path("gen_traj/sample_0_t20.tetg")));
}

TEST_CASE("pipeline: ddim interpolation endpoints equal ddim samples") {
    TempDir tmp("interp");
    Config cfg = tiny_config(33);
    write_shapes(tmp.path("shapes"));
    cmd_fit(cfg, {tmp.path("shapes"), tmp.path("dataset")});
    cmd_train(cfg, {tmp.path("dataset"), tmp.path("model.mdck"), ""});

    InterpolateCommand ic{tmp.path("model.mdck"), tmp.path("seq"), 101, 202, 4, false};
    auto seq = cmd_interpolate(cfg, ic);
    REQUIRE(seq.size() == 4);

    Config ddim_cfg = cfg;
    apply_override(ddim_cfg, "diffusion.sampler", "ddim");
    ddim_cfg.seed = 101;
    auto a = cmd_sample(ddim_cfg, {tmp.path("model.mdck"), tmp.path("end_a"), 1, false, false, 0});
    ddim_cfg.seed = 202;
    auto b = cmd_sample(ddim_cfg, {tmp.path("model.mdck"), tmp.path("end_b"), 1, false, false, 0});

    CHECK(read_bytes(seq[0]) == read_bytes(a[0]));
    CHECK(read_bytes(seq[3]) == read_bytes(b[0]));
}

TEST_CASE("pipeline: eval on identical directories hits the metric identities") {
    TempDir tmp("eval");
    Config cfg = tiny_config(44);
    write_shapes(tmp.path("shapes"));

    EvalCommand ec{tmp.path("shapes"), tmp.path("shapes"), tmp.path("report.json")};
    MetricsReport r = cmd_eval(cfg, ec);
    CHECK(r.mmd_cd == 0.0);
    CHECK(r.cov_cd == 1.0);
    CHECK(r.jsd_value == 0.0);
    CHECK(std::filesystem::exists(tmp.path("report.json")));
}

TEST_CASE("pipeline: single-view completion produces artifacts") {
    TempDir tmp("complete");
    Config cfg = tiny_config(55);
    write_shapes(tmp.path("shapes"));
    cmd_fit(cfg, {tmp.path("shapes"), tmp.path("dataset")});
    cmd_train(cfg, {tmp.path("dataset"), tmp.path("model.mdck"), ""});

    CompleteCommand cc;
    cc.checkpoint = tmp.path("model.mdck");
    cc.input_obj = tmp.path("shapes/sphere.obj");
    cc.out_dir = tmp.path("done");
    cc.camera.position = {0, 0, 2.5};
    cc.camera.look_at = {0, 0, 0};
    cc.camera.focal = 24.0;
    cc.camera.width = cc.camera.height = 33;
    std::string out = cmd_complete(cfg, cc);
    CHECK(std::filesystem::exists(out));
    CHECK(std::filesystem::exists(tmp.path("done/view.dpth")));
    CHECK(std::filesystem::exists(tmp.path("done/complete.tetg")));

    // conditioning data survives into the output where known
    int r = 0;
    GridState st = load_tetg(tmp.path("done/complete.tetg"), &r);
    CHECK(r == cfg.grid.resolution);
    CHECK(st.normalized);
}
