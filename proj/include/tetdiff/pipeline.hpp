#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tetdiff/config.hpp"
#include "tetdiff/fitting.hpp"
#include "tetdiff/meshops.hpp"
#include "tetdiff/metrics.hpp"
#include "tetdiff/scoremodel.hpp"

namespace tetdiff {

// Uniform rescale of a mesh into [-0.9, 0.9]^3 (centered, aspect preserved).
struct MeshNormalization {
    Vec3 center{};
    double scale = 1.0; // applied as (v - center) * scale
};
MeshNormalization normalize_mesh(TriMesh& mesh);

// Per-sample latent construction shared by `sample` and `interpolate` so
// interpolation endpoints reproduce plain sample outputs.
Tensor sample_latent(std::uint64_t seed, int index, int channels, int dim,
                     const std::vector<std::uint8_t>& mask);

struct FitCommand {
    std::string input_dir;
    std::string out_dir;
};
// OBJ directory -> .tetg dataset + fit report records. Returns outcomes.
std::vector<FitOutcome> cmd_fit(const Config& cfg, const FitCommand& args);

struct TrainCommand {
    std::string dataset_dir;
    std::string checkpoint_out;
    std::string trace_out; // optional loss trace file
};
TrainResult cmd_train(const Config& cfg, const TrainCommand& args);

struct SampleCommand {
    std::string checkpoint;
    std::string out_dir;
    int count = 4;
    bool refine = false;     // regenerate deformations conditioned on the sampled signs
    bool raw = false;        // skip smoothing / component removal
    int trajectory_every = 0; // dump predicted-x0 snapshots every k timesteps
};
// Returns the produced OBJ paths.
std::vector<std::string> cmd_sample(const Config& cfg, const SampleCommand& args);

struct CompleteCommand {
    std::string checkpoint;
    std::string input_obj;
    std::string out_dir;
    CameraSpec camera;
    bool raw = false;
};
std::string cmd_complete(const Config& cfg, const CompleteCommand& args);

struct InterpolateCommand {
    std::string checkpoint;
    std::string out_dir;
    std::uint64_t seed_a = 0, seed_b = 1;
    int steps = 5;
    bool raw = false;
};
std::vector<std::string> cmd_interpolate(const Config& cfg, const InterpolateCommand& args);

struct EvalCommand {
    std::string generated_dir;
    std::string reference_dir;
    std::string report_out; // optional records file
};
MetricsReport cmd_eval(const Config& cfg, const EvalCommand& args);

struct ExportCommand {
    std::string input_tetg;
    std::string out_obj;
    bool raw = false;
};
void cmd_export(const Config& cfg, const ExportCommand& args);

} // namespace tetdiff
