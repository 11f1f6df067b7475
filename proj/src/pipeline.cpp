#include "tetdiff/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "tetdiff/diffusion.hpp"
#include "tetdiff/errors.hpp"
#include "tetdiff/marching.hpp"
#include "tetdiff/rng.hpp"

namespace fs = std::filesystem;

namespace tetdiff {

namespace {

TetGrid grid_from_config(const Config& cfg, int resolution = 0) {
    return build_bcc_grid(resolution > 0 ? resolution : cfg.grid.resolution, cfg.grid.extent,
                          cfg.grid.delta_max_multiplier);
}

NoiseSchedule schedule_from_config(const Config& cfg) {
    return make_schedule(cfg.diffusion.T, cfg.diffusion.beta_start, cfg.diffusion.beta_end);
}

std::vector<std::string> list_files(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ext)
            files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    return files;
}

TriMesh state_to_mesh(const Config& cfg, const TetGrid& grid, const GridState& state, bool raw) {
    TriMesh mesh = extract_mesh(grid, state);
    if (raw || mesh.faces.empty()) return mesh;
    mesh = remove_small_components(mesh, cfg.postprocess.component_fraction);
    mesh = laplacian_smooth(mesh, cfg.postprocess.smooth_lambda, cfg.postprocess.smooth_steps);
    return mesh;
}

DenoiserNet load_model(const Config& cfg, const std::string& path) {
    DenoiserNet net = load_checkpoint(path);
    if (net.config().trained_resolution > 0 &&
        net.config().trained_resolution != cfg.grid.resolution)
        throw std::runtime_error("checkpoint was trained at resolution " +
                                 std::to_string(net.config().trained_resolution) +
                                 " but grid.resolution is " + std::to_string(cfg.grid.resolution));
    return net;
}

TimeSpacing spacing_from_config(const Config& cfg) {
    return cfg.diffusion.spacing == "uniform" ? TimeSpacing::Uniform : TimeSpacing::Quadratic;
}

// Shared tail of sample/complete/interpolate: finalize tensor, persist
// .tetg, extract + postprocess, persist OBJ. The state is rounded to the
// .tetg storage precision before meshing so a later `export` of the file
// reproduces the OBJ exactly.
std::string emit_artifacts(const Config& cfg, const TetGrid& grid, const Tensor& x0,
                           const std::string& out_dir, const std::string& stem, bool raw) {
    fs::create_directories(out_dir);
    GridState state = finalize(x0, grid);
    for (Vec3& d : state.deformation)
        for (int c = 0; c < 3; ++c) d[c] = static_cast<float>(d[c]);
    save_tetg(state, grid.resolution, (fs::path(out_dir) / (stem + ".tetg")).string());
    TriMesh mesh = state_to_mesh(cfg, grid, state, raw);
    std::string obj_path = (fs::path(out_dir) / (stem + ".obj")).string();
    save_obj(mesh, obj_path);
    return obj_path;
}

} // namespace

MeshNormalization normalize_mesh(TriMesh& mesh) {
    Aabb box;
    for (const Vec3& v : mesh.vertices) box.absorb(v);
    if (box.empty()) throw GeometryError("normalize_mesh: empty mesh");
    MeshNormalization n;
    n.center = box.center();
    Vec3 half = box.extent() * 0.5;
    double m = std::max({half.x, half.y, half.z, 1e-12});
    n.scale = 0.9 / m;
    for (Vec3& v : mesh.vertices) v = (v - n.center) * n.scale;
    return n;
}

Tensor sample_latent(std::uint64_t seed, int index, int channels, int dim,
                     const std::vector<std::uint8_t>& mask) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
    Tensor latent(channels, dim);
    fill_masked_normal(latent, mask, rng);
    return latent;
}

std::vector<FitOutcome> cmd_fit(const Config& cfg, const FitCommand& args) {
    std::vector<std::string> files = list_files(args.input_dir, ".obj");
    if (files.empty()) throw std::runtime_error("fit: no .obj files in " + args.input_dir);

    TetGrid grid = grid_from_config(cfg);
    std::vector<TriMesh> meshes;
    std::vector<std::string> ids;
    std::vector<MeshNormalization> norms;
    std::vector<FitOutcome> unreadable;
    for (const std::string& f : files) {
        std::string id = fs::path(f).stem().string();
        try {
            TriMesh m = load_obj(f);
            norms.push_back(normalize_mesh(m));
            meshes.push_back(std::move(m));
            ids.push_back(id);
        } catch (const std::exception& e) {
            FitOutcome bad;
            bad.id = id;
            bad.ok = false;
            bad.error = e.what();
            unreadable.push_back(std::move(bad));
        }
    }
    if (meshes.empty()) throw std::runtime_error("fit: every input failed to load");

    FitConfig fit_cfg;
    fit_cfg.learning_rate = cfg.fit.learning_rate;
    fit_cfg.iterations = cfg.fit.iterations;
    fit_cfg.chamfer_samples = cfg.fit.chamfer_samples;
    fit_cfg.sdf_reg_start = cfg.fit.sdf_reg_start;
    fit_cfg.sdf_reg_end = cfg.fit.sdf_reg_end;
    fit_cfg.seed = cfg.seed;

    std::vector<FitOutcome> outcomes = fit_dataset(meshes, ids, grid, fit_cfg, args.out_dir);
    for (std::size_t i = 0; i < outcomes.size(); ++i)
        if (outcomes[i].ok)
            outcomes[i].report.warnings.push_back(
                "normalized: scale=" + std::to_string(norms[i].scale));
    outcomes.insert(outcomes.end(), unreadable.begin(), unreadable.end());
    save_fit_records(outcomes, (fs::path(args.out_dir) / "fit_report.jsonl").string());
    return outcomes;
}

TrainResult cmd_train(const Config& cfg, const TrainCommand& args) {
    std::vector<std::string> files = list_files(args.dataset_dir, ".tetg");
    if (files.empty()) throw std::runtime_error("train: no .tetg files in " + args.dataset_dir);

    TetGrid grid = grid_from_config(cfg);
    std::vector<GridState> dataset;
    for (const std::string& f : files) {
        int r = 0;
        GridState s = load_tetg(f, &r);
        if (r != grid.resolution)
            throw std::runtime_error("train: " + f + " has resolution " + std::to_string(r) +
                                     ", expected " + std::to_string(grid.resolution));
        dataset.push_back(std::move(s));
    }

    NetConfig net_cfg;
    net_cfg.layers = cfg.train.layers;
    net_cfg.width1 = cfg.train.width1;
    net_cfg.width2 = cfg.train.width2;
    net_cfg.time_dim = cfg.train.time_dim;
    net_cfg.trained_resolution = grid.resolution;
    DenoiserNet net(net_cfg, mix_seed(cfg.seed, 0x11e7));

    TrainConfig train_cfg;
    train_cfg.steps = cfg.train.steps;
    train_cfg.batch = cfg.train.batch;
    train_cfg.learning_rate = cfg.train.learning_rate;
    train_cfg.beta1 = cfg.train.beta1;
    train_cfg.beta2 = cfg.train.beta2;
    train_cfg.jitter = std::min(cfg.train.jitter, 0.1 * grid.delta_max);
    train_cfg.seed = cfg.seed;

    NoiseSchedule sched = schedule_from_config(cfg);
    TrainResult result = train(net, dataset, grid, sched, train_cfg);

    std::string parent = fs::path(args.checkpoint_out).parent_path().string();
    if (!parent.empty()) fs::create_directories(parent);
    save_checkpoint(net, args.checkpoint_out, &result.optimizer);

    if (!args.trace_out.empty()) {
        std::FILE* f = std::fopen(args.trace_out.c_str(), "w");
        if (!f) throw std::runtime_error("train: cannot write trace: " + args.trace_out);
        for (std::size_t i = 0; i < result.loss_trace.size(); ++i)
            std::fprintf(f, "%zu %.9g\n", i, result.loss_trace[i]);
        std::fclose(f);
    }
    return result;
}

namespace {

// Sampling-time boundary condition: SDF +1 on the tetrahedralized-domain
// boundary, which every fitted dataset satisfies. Enforced with replacement
// conditioning (ancestral) or the deterministic known-trajectory (DDIM).
struct VacuumCondition {
    Tensor known;                            // +1 SDF at boundary sites
    std::vector<std::uint8_t> channel_mask;  // SDF channel of those sites

    VacuumCondition(const TetGrid& grid, const CubicEmbedding& layout)
        : known(4, layout.dim), channel_mask(known.v.size(), 0) {
        std::vector<std::uint8_t> band = domain_boundary_vertices(grid);
        for (int v = 0; v < grid.vertex_count(); ++v) {
            if (!band[v]) continue;
            std::size_t site = layout.vertex_to_site[v];
            known.channel(3)[site] = 1.0;
            channel_mask[3 * known.sites() + site] = 1;
        }
    }

    // replacement along the deterministic DDIM path of the pinned value
    std::function<void(Tensor&, int)> ddim_replace(const NoiseSchedule& sched,
                                                   const Tensor& latent) const {
        return [this, &sched, &latent](Tensor& x, int t) {
            double a = sched.sqrt_alpha_bar(t), b = sched.sqrt_one_minus_alpha_bar(t);
            for (std::size_t i = 0; i < x.v.size(); ++i)
                if (channel_mask[i]) x.v[i] = a * known.v[i] + b * latent.v[i];
        };
    }
};

} // namespace

std::vector<std::string> cmd_sample(const Config& cfg, const SampleCommand& args) {
    TetGrid grid = grid_from_config(cfg);
    DenoiserNet net = load_model(cfg, args.checkpoint);
    NoiseSchedule sched = schedule_from_config(cfg);
    CubicEmbedding layout = embed_to_cubic(grid, GridState::zeros(grid.vertex_count()));
    const int dim = layout.dim;

    fs::create_directories(args.out_dir);
    std::vector<std::string> objs;
    for (int i = 0; i < args.count; ++i) {
        std::string stem = "sample_" + std::to_string(i);
        Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(i)));

        nlohmann::json traj_index = nlohmann::json::array();
        TrajectoryHook hook = nullptr;
        if (args.trajectory_every > 0) {
            hook = [&](int t, const Tensor& x0_hat) {
                if (t % args.trajectory_every != 0) return;
                std::string name = stem + "_t" + std::to_string(t) + ".tetg";
                save_tetg(finalize(x0_hat, grid), grid.resolution,
                          (fs::path(args.out_dir) / name).string());
                traj_index.push_back({{"t", t}, {"file", name}});
            };
        }

        // trained models run with the x0 prediction pinned to the data range
        Tensor x0(4, dim);
        std::optional<VacuumCondition> vacuum;
        if (cfg.diffusion.boundary_vacuum) vacuum.emplace(grid, layout);
        if (cfg.diffusion.sampler == "ddim") {
            Tensor latent = sample_latent(cfg.seed, i, 4, dim, layout.mask);
            x0 = ddim_sample(net, sched, latent, layout.mask, cfg.diffusion.steps,
                             spacing_from_config(cfg), hook, true,
                             vacuum ? vacuum->ddim_replace(sched, latent) : nullptr);
        } else if (vacuum) {
            x0 = conditional_sample(net, sched, vacuum->known, vacuum->channel_mask, layout.mask,
                                    0, rng, hook, true);
        } else {
            x0 = ddpm_sample(net, sched, 4, dim, layout.mask, rng, hook, true);
        }

        if (args.refine) {
            GridState normalized = finalize(x0, grid);
            CubicEmbedding emb = embed_to_cubic(grid, normalized);
            x0 = refine_deformations(net, sched, emb.data, layout.mask, rng, true);
        }
        objs.push_back(emit_artifacts(cfg, grid, x0, args.out_dir, stem, args.raw));

        if (args.trajectory_every > 0) {
            std::FILE* f =
                std::fopen((fs::path(args.out_dir) / (stem + "_trajectory.json")).string().c_str(), "w");
            if (f) {
                std::string s = traj_index.dump();
                std::fwrite(s.data(), 1, s.size(), f);
                std::fclose(f);
            }
        }
    }
    return objs;
}

std::string cmd_complete(const Config& cfg, const CompleteCommand& args) {
    TetGrid grid = grid_from_config(cfg);
    DenoiserNet net = load_model(cfg, args.checkpoint);
    NoiseSchedule sched = schedule_from_config(cfg);

    TriMesh mesh = load_obj(args.input_obj);
    normalize_mesh(mesh);
    DepthView view = raycast_depth(mesh, args.camera);
    fs::create_directories(args.out_dir);
    save_depth(view, (fs::path(args.out_dir) / "view.dpth").string());

    FitConfig fit_cfg;
    fit_cfg.learning_rate = cfg.fit.learning_rate;
    fit_cfg.iterations = cfg.fit.iterations;
    fit_cfg.chamfer_samples = cfg.fit.chamfer_samples;
    fit_cfg.seed = cfg.seed;
    SingleViewFit sv = fit_singleview(grid, view, fit_cfg);

    if (cfg.diffusion.boundary_vacuum) {
        // domain boundary defaults to vacuum where the view says nothing
        std::vector<std::uint8_t> band = domain_boundary_vertices(grid);
        for (int v = 0; v < grid.vertex_count(); ++v)
            if (band[v] && !sv.known[v]) {
                sv.state.sdf[v] = 1.0;
                sv.known[v] = 1;
            }
    }

    CubicEmbedding emb = embed_to_cubic(grid, sv.state);
    std::vector<std::uint8_t> known_mask(emb.data.v.size(), 0);
    for (int v = 0; v < grid.vertex_count(); ++v) {
        if (!sv.known[v]) continue;
        std::size_t site = emb.vertex_to_site[v];
        for (int c = 0; c < 4; ++c) known_mask[c * emb.data.sites() + site] = 1;
    }

    Rng rng(mix_seed(cfg.seed, 0xc0));
    Tensor x0 = conditional_sample(net, sched, emb.data, known_mask, emb.mask,
                                   cfg.diffusion.unfreeze_T, rng, nullptr, true);
    return emit_artifacts(cfg, grid, x0, args.out_dir, "complete", args.raw);
}

std::vector<std::string> cmd_interpolate(const Config& cfg, const InterpolateCommand& args) {
    if (args.steps < 2) throw std::invalid_argument("interpolate: need at least 2 steps");
    TetGrid grid = grid_from_config(cfg);
    DenoiserNet net = load_model(cfg, args.checkpoint);
    NoiseSchedule sched = schedule_from_config(cfg);
    CubicEmbedding layout = embed_to_cubic(grid, GridState::zeros(grid.vertex_count()));

    Tensor za = sample_latent(args.seed_a, 0, 4, layout.dim, layout.mask);
    Tensor zb = sample_latent(args.seed_b, 0, 4, layout.dim, layout.mask);

    std::optional<VacuumCondition> vacuum;
    if (cfg.diffusion.boundary_vacuum) vacuum.emplace(grid, layout);

    std::vector<std::string> objs;
    for (int i = 0; i < args.steps; ++i) {
        double u = static_cast<double>(i) / (args.steps - 1);
        Tensor latent = slerp(za, zb, u);
        Tensor x0 = ddim_sample(net, sched, latent, layout.mask, cfg.diffusion.steps,
                                spacing_from_config(cfg), nullptr, true,
                                vacuum ? vacuum->ddim_replace(sched, latent) : nullptr);
        objs.push_back(emit_artifacts(cfg, grid, x0, args.out_dir,
                                      "interp_" + std::to_string(i), args.raw));
    }
    return objs;
}

MetricsReport cmd_eval(const Config& cfg, const EvalCommand& args) {
    // identical directories must produce identical clouds (so eval(S, S)
    // hits the metric identities), hence the same per-index seeds per set
    auto load_set = [&](const std::string& dir) {
        ShapeSet set;
        for (const std::string& f : list_files(dir, ".obj")) {
            TriMesh mesh = load_obj(f);
            if (mesh.faces.empty()) continue;
            set.clouds.push_back(
                sample_surface(mesh, cfg.metrics.samples, mix_seed(cfg.seed, set.clouds.size())));
            set.ids.push_back(fs::path(f).stem().string());
        }
        if (set.clouds.empty()) throw std::runtime_error("eval: no usable meshes in " + dir);
        return set;
    };
    ShapeSet gen = load_set(args.generated_dir);
    ShapeSet ref = load_set(args.reference_dir);

    MetricsOptions opts;
    opts.with_emd = cfg.metrics.emd;
    opts.emd_subsample = cfg.metrics.emd_subsample;
    opts.jsd_resolution = cfg.metrics.jsd_resolution;
    opts.seed = cfg.seed;
    MetricsReport report = evaluate_sets(gen, ref, opts);
    if (!args.report_out.empty()) save_metrics_records(report, args.report_out);
    return report;
}

void cmd_export(const Config& cfg, const ExportCommand& args) {
    int resolution = 0;
    GridState state = load_tetg(args.input_tetg, &resolution);
    TetGrid grid = grid_from_config(cfg, resolution);
    TriMesh mesh = state_to_mesh(cfg, grid, state, args.raw);
    save_obj(mesh, args.out_obj);
}

} // namespace tetdiff
