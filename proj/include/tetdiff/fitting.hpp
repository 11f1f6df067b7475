#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tetdiff/tetgrid.hpp"
#include "tetdiff/trimesh.hpp"

namespace tetdiff {

struct FitConfig {
    double learning_rate = 5e-4;
    double beta1 = 0.9, beta2 = 0.999;
    int iterations = 500;       // desk default; 5000 at full scale
    int chamfer_samples = 4096; // desk default; 50000 at full scale
    // Recorded for completeness: with signs frozen to +-1 the SDF smoothness
    // penalty |s_u - s_v|^2 is piecewise constant in the variables being
    // optimized, so it never contributes a gradient here.
    double sdf_reg_start = 0.2, sdf_reg_end = 0.01;
    std::uint64_t seed = 0;
    int max_halvings = 30; // 0 disables the step-halving guard
};

struct FitReport {
    double initial_chamfer = 0.0;
    double final_chamfer = 0.0;
    std::vector<double> chamfer_trace; // accepted loss per iteration (stage 2)
    int sign_flips = 0;   // between the sign pass and the final state; 0 with frozen signs
    int split_votes = 0;  // vertices with non-unanimous inside/outside parity votes
    std::vector<std::string> warnings;
};

// Stage 1: SDF signs from exact inside/outside tests at rest positions
// (-1 inside, +1 outside), deformations zeroed, normalized flag set.
// Open-ish meshes (> 1% split parity votes) attach a warning to *report.
GridState fit_signs(const TetGrid& grid, const TriMesh& gt, FitReport* report = nullptr);

// Stage 2: minimize the two-sided Chamfer distance between points sampled
// from the extracted midpoint mesh and points sampled from gt, over the
// deformations only. Mesh connectivity is frozen by the +-1 signs, so mesh
// vertices stay affine in the deformations; nearest-neighbor matches are
// treated as fixed within a step and recomputed every iteration. A step is
// accepted only if it does not increase the loss (halving retries), which
// keeps the recorded trace non-increasing.
std::pair<GridState, FitReport> optimize_deformations(const TetGrid& grid, const GridState& state,
                                                      const TriMesh& gt, const FitConfig& cfg);

struct FitOutcome {
    std::string id;
    bool ok = false;
    GridState state;
    FitReport report;
    std::string error;
};

// fit_signs + optimize_deformations per mesh; failures are recorded per item
// without aborting the batch. When out_dir is given, states are persisted as
// <out_dir>/<id>.tetg.
std::vector<FitOutcome> fit_dataset(const std::vector<TriMesh>& meshes,
                                    const std::vector<std::string>& ids, const TetGrid& grid,
                                    const FitConfig& cfg, const std::string& out_dir = "");

// One JSON record per mesh: id, final chamfer, iterations, warnings.
void save_fit_records(const std::vector<FitOutcome>& outcomes, const std::string& path);

struct SingleViewFit {
    GridState state;
    std::vector<std::uint8_t> known; // per grid vertex
};

// Free-space carving from one depth view plus deformation refinement on the
// visible surface. Vertices strictly in front of the observed depth (or on
// miss rays) become +1; a band of one cell edge around the observed depth
// gets +1 in front / -1 behind; vertices seen deeper than the band are -1.
// A tet is visible when any of its vertices lands on a hit pixel no deeper
// than observed + h; vertices of only-occluded tets are unknown.
SingleViewFit fit_singleview(const TetGrid& grid, const DepthView& view, const FitConfig& cfg);

} // namespace tetdiff
