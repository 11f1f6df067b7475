// Command-line front end for the tetrahedral-grid mesh diffusion pipeline:
// fit / train / sample / complete / interpolate / eval / export.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tetdiff/pipeline.hpp"

using namespace tetdiff;

namespace {

struct CommonFlags {
    std::string config_path;
    std::vector<std::string> overrides;
    bool has_seed = false;
    std::uint64_t seed = 0;
    int resolution = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "config file (section.key = value lines)");
    cmd->add_option("--set", flags.overrides, "config override key=value (repeatable)");
    cmd->add_option("--seed", flags.seed, "random seed")->each([&](const std::string&) {
        flags.has_seed = true;
    });
    cmd->add_option("--resolution", flags.resolution, "grid cells per axis (R)");
}

Config build_config(const CommonFlags& flags) {
    std::vector<std::string> overrides = flags.overrides;
    if (flags.resolution > 0)
        overrides.push_back("grid.resolution=" + std::to_string(flags.resolution));
    if (flags.has_seed) overrides.push_back("seed=" + std::to_string(flags.seed));
    return parse_config(flags.config_path, overrides);
}

Vec3 parse_vec3(const std::string& s, const char* what) {
    Vec3 v;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &v.x, &v.y, &v.z) != 3)
        throw std::invalid_argument(std::string(what) + ": expected x,y,z");
    return v;
}

// empty --out falls back to paths.out_dir (+ leaf for file outputs)
std::string resolve_out(const std::string& value, const Config& cfg, const char* leaf = nullptr) {
    if (!value.empty()) return value;
    return leaf ? cfg.paths.out_dir + "/" + leaf : cfg.paths.out_dir;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"diffusion-based mesh generation on deformable tetrahedral grids"};
    app.require_subcommand(1);

    CommonFlags flags;

    auto* fit = app.add_subcommand("fit", "fit a .tetg dataset from a directory of OBJ meshes");
    FitCommand fit_args;
    add_common(fit, flags);
    fit->add_option("--input", fit_args.input_dir, "directory of .obj meshes")->required();
    fit->add_option("--out", fit_args.out_dir, "output dataset directory (default: paths.out_dir)");

    auto* train = app.add_subcommand("train", "train the denoiser on a .tetg dataset");
    TrainCommand train_args;
    add_common(train, flags);
    train->add_option("--dataset", train_args.dataset_dir, "directory of .tetg files")->required();
    train->add_option("--out", train_args.checkpoint_out, "checkpoint output path (default: paths.out_dir/model.mdck)");
    train->add_option("--trace", train_args.trace_out, "loss trace output file");

    auto* sample = app.add_subcommand("sample", "generate meshes from a checkpoint");
    SampleCommand sample_args;
    std::string sampler_flag;
    int ddim_steps = 0;
    add_common(sample, flags);
    sample->add_option("--checkpoint", sample_args.checkpoint, "model checkpoint")->required();
    sample->add_option("--out", sample_args.out_dir, "output directory (default: paths.out_dir)");
    sample->add_option("--count", sample_args.count, "number of samples");
    sample->add_option("--sampler", sampler_flag, "ddpm | ddim");
    sample->add_option("--steps", ddim_steps, "DDIM inference steps");
    sample->add_flag("--refine", sample_args.refine, "regenerate deformations conditioned on signs");
    sample->add_flag("--raw", sample_args.raw, "skip smoothing and component removal");
    sample->add_option("--trajectory-every", sample_args.trajectory_every,
                       "dump predicted-x0 .tetg snapshots every k timesteps");

    auto* complete = app.add_subcommand("complete", "complete a shape from a single depth view");
    CompleteCommand complete_args;
    std::string cam_pos = "0,0,2.5", cam_target = "0,0,0";
    double focal = 64.0;
    int image_size = 64;
    add_common(complete, flags);
    complete->add_option("--checkpoint", complete_args.checkpoint, "model checkpoint")->required();
    complete->add_option("--input", complete_args.input_obj, "ground-truth OBJ for the view")->required();
    complete->add_option("--out", complete_args.out_dir, "output directory (default: paths.out_dir)");
    complete->add_option("--cam-pos", cam_pos, "camera position x,y,z");
    complete->add_option("--cam-target", cam_target, "camera look-at x,y,z");
    complete->add_option("--focal", focal, "focal length in pixels");
    complete->add_option("--image-size", image_size, "depth image width=height");
    complete->add_flag("--raw", complete_args.raw, "skip smoothing and component removal");

    auto* interpolate = app.add_subcommand("interpolate", "DDIM latent interpolation sequence");
    InterpolateCommand interp_args;
    add_common(interpolate, flags);
    interpolate->add_option("--checkpoint", interp_args.checkpoint, "model checkpoint")->required();
    interpolate->add_option("--out", interp_args.out_dir, "output directory (default: paths.out_dir)");
    interpolate->add_option("--seed-a", interp_args.seed_a, "latent seed of the first endpoint");
    interpolate->add_option("--seed-b", interp_args.seed_b, "latent seed of the second endpoint");
    interpolate->add_option("--steps", interp_args.steps, "sequence length");
    interpolate->add_flag("--raw", interp_args.raw, "skip smoothing and component removal");

    auto* eval = app.add_subcommand("eval", "shape-set metrics between two OBJ directories");
    EvalCommand eval_args;
    add_common(eval, flags);
    eval->add_option("--generated", eval_args.generated_dir, "generated OBJ directory")->required();
    eval->add_option("--reference", eval_args.reference_dir, "reference OBJ directory")->required();
    eval->add_option("--report", eval_args.report_out, "machine-readable report output");

    auto* exp = app.add_subcommand("export", "convert a .tetg state to OBJ");
    ExportCommand export_args;
    add_common(exp, flags);
    exp->add_option("--input", export_args.input_tetg, "input .tetg")->required();
    exp->add_option("--out", export_args.out_obj, "output .obj")->required();
    exp->add_flag("--raw", export_args.raw, "skip smoothing and component removal");

    CLI11_PARSE(app, argc, argv);

    try {
        Config cfg = build_config(flags);
        if (fit->parsed()) {
            fit_args.out_dir = resolve_out(fit_args.out_dir, cfg);
            auto outcomes = cmd_fit(cfg, fit_args);
            int ok = 0;
            for (const auto& o : outcomes) ok += o.ok;
            std::printf("fit: %d/%zu meshes fitted -> %s\n", ok, outcomes.size(),
                        fit_args.out_dir.c_str());
        } else if (train->parsed()) {
            train_args.checkpoint_out = resolve_out(train_args.checkpoint_out, cfg, "model.mdck");
            TrainResult r = cmd_train(cfg, train_args);
            std::printf("train: %zu steps, first loss %.5f, last loss %.5f -> %s\n",
                        r.loss_trace.size(), r.loss_trace.empty() ? 0.0 : r.loss_trace.front(),
                        r.loss_trace.empty() ? 0.0 : r.loss_trace.back(),
                        train_args.checkpoint_out.c_str());
        } else if (sample->parsed()) {
            if (!sampler_flag.empty())
                apply_override(cfg, "diffusion.sampler", sampler_flag);
            if (ddim_steps > 0)
                apply_override(cfg, "diffusion.steps", std::to_string(ddim_steps));
            validate(cfg);
            sample_args.out_dir = resolve_out(sample_args.out_dir, cfg);
            auto objs = cmd_sample(cfg, sample_args);
            std::printf("sample: wrote %zu meshes to %s\n", objs.size(), sample_args.out_dir.c_str());
        } else if (complete->parsed()) {
            complete_args.out_dir = resolve_out(complete_args.out_dir, cfg);
            complete_args.camera.position = parse_vec3(cam_pos, "--cam-pos");
            complete_args.camera.look_at = parse_vec3(cam_target, "--cam-target");
            complete_args.camera.focal = focal;
            complete_args.camera.width = complete_args.camera.height = image_size;
            std::string out = cmd_complete(cfg, complete_args);
            std::printf("complete: wrote %s\n", out.c_str());
        } else if (interpolate->parsed()) {
            interp_args.out_dir = resolve_out(interp_args.out_dir, cfg);
            auto objs = cmd_interpolate(cfg, interp_args);
            std::printf("interpolate: wrote %zu meshes to %s\n", objs.size(),
                        interp_args.out_dir.c_str());
        } else if (eval->parsed()) {
            MetricsReport report = cmd_eval(cfg, eval_args);
            std::fputs(format_metrics_table(report).c_str(), stdout);
        } else if (exp->parsed()) {
            cmd_export(cfg, export_args);
            std::printf("export: wrote %s\n", export_args.out_obj.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
