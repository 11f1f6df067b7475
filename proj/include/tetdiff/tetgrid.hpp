#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tetdiff/tensor.hpp"
#include "tetdiff/vec3.hpp"

namespace tetdiff {

enum class VertexKind : std::uint8_t { Corner, Center };

// Uniform deformable tetrahedral grid from body-centered cubic tiling of
// [-extent, extent]^3. Immutable after construction; shared freely.
//
// Vertices: (R+1)^3 cube corners followed by R^3 cell centers. Tets connect
// each pair of axis-adjacent cell centers with the four corners of their
// shared face (4 tets per interior face, 12*R^2*(R-1) total), so the tiling
// carries no symmetry-breaking boundary tetrahedra. Box corners that end up
// in no tet are kept so the lattice stays regular.
struct TetGrid {
    int resolution = 0;      // R, cells per axis
    double extent = 1.0;     // grid spans [-extent, extent]^3
    double delta_max = 0.0;  // per-component deformation bound

    std::vector<Vec3> vertex_positions; // rest positions
    std::vector<VertexKind> vertex_kind;
    std::vector<std::array<int, 4>> tets;        // positively oriented at rest
    std::vector<std::array<int, 2>> edges;       // unique, lo < hi

    int vertex_count() const { return static_cast<int>(vertex_positions.size()); }
    int tet_count() const { return static_cast<int>(tets.size()); }
    double cell_edge() const { return 2.0 * extent / resolution; } // h

    int corner_index(int i, int j, int k) const {
        int n = resolution + 1;
        return (i * n + j) * n + k;
    }
    int center_index(int i, int j, int k) const {
        int n = resolution + 1;
        return n * n * n + (i * resolution + j) * resolution + k;
    }
};

// Per-vertex grid attributes: 3 deformation components plus one SDF value.
// This is the diffusion data point x0. `normalized` means every SDF value
// is exactly +1 or -1.
struct GridState {
    std::vector<Vec3> deformation; // length units, each component in [-delta_max, delta_max]
    std::vector<double> sdf;
    bool normalized = false;

    int vertex_count() const { return static_cast<int>(sdf.size()); }

    static GridState zeros(int vertex_count) {
        GridState s;
        s.deformation.assign(vertex_count, Vec3{});
        s.sdf.assign(vertex_count, 0.0);
        return s;
    }
};

// Dense masked cubic lattice of side 2R+1. Corner (i,j,k) sits at lattice
// site (2i,2j,2k), the center of cell (i,j,k) at (2i+1,2j+1,2k+1); mask is 1
// exactly at those sites (all-even or all-odd coordinates). Data channels:
// 0..2 deformation scaled by 1/delta_max, 3 SDF; zero wherever mask is 0.
//
// The source deformations ride along unscaled: the rounded division by
// delta_max merges adjacent representable values wherever 1/delta_max does
// not outpace the binade coarsening, so the scaled channels alone cannot be
// inverted bit-exactly.
struct CubicEmbedding {
    int dim = 0;
    double delta_max = 0.0;
    Tensor data;                         // 4 channels
    std::vector<std::uint8_t> mask;      // dim^3
    std::vector<std::int32_t> site_to_vertex; // dim^3, -1 at infilled sites
    std::vector<std::int32_t> vertex_to_site;
    std::vector<Vec3> raw_deformation;   // per vertex, length units
};

// delta_max = multiplier * h. The 0.75 factor follows the 3x deformation
// range on an assumed h/4 base; 0.375 is the half-range setting for finer
// grids. Note any bound >= h/4 admits inverted tets under worst-case
// deformation (see tests for the measured envelope).
inline constexpr double kDefaultDeltaMultiplier = 0.75;

TetGrid build_bcc_grid(int resolution, double extent,
                       double delta_multiplier = kDefaultDeltaMultiplier);

// Vertices lying on the boundary of the tetrahedralized domain (faces owned
// by exactly one tet). An isosurface can only run open where these carry a
// sign change, so pinning them to +1 ("vacuum") guarantees watertight
// extractions; every dataset produced by the fitting pipeline satisfies the
// pin already as long as shapes keep one cell of clearance from the box.
std::vector<std::uint8_t> domain_boundary_vertices(const TetGrid& grid);

CubicEmbedding embed_to_cubic(const TetGrid& grid, const GridState& state);
GridState extract_from_cubic(const CubicEmbedding& emb, const TetGrid& grid);

GridState clip_deformations(GridState state, double delta_max);

enum class ScaleDirection { ToDiffusion, FromDiffusion };
GridState scale_state(GridState state, ScaleDirection direction, double delta_max);

// `.tetg` grid-state file (little-endian): magic "TETG", u32 version,
// u32 R, u32 vertex count, per-vertex 4 x f32 (dx,dy,dz,s), u8 normalized.
void save_tetg(const GridState& state, int resolution, const std::string& path);
GridState load_tetg(const std::string& path, int* resolution_out = nullptr);

} // namespace tetdiff
