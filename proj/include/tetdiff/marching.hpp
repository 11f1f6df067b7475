#pragma once

#include <array>
#include <vector>

#include "tetdiff/tetgrid.hpp"
#include "tetdiff/trimesh.hpp"
#include "tetdiff/vec3.hpp"

namespace tetdiff {

enum class SignCase { Empty, OneVsThree, TwoVsTwo };

// One entry per 4-bit sign code (bit i set when sdf of tet vertex i > 0).
// Triangles index the six tet edges {01,02,03,12,13,23}; winding is chosen
// so face normals point from the negative-SDF side to the positive side on
// any positively oriented tet.
struct SignConfig {
    SignCase kind = SignCase::Empty;
    int triangle_count = 0;
    std::array<std::array<int, 3>, 2> triangles{}; // edge indices
};

const std::array<SignConfig, 16>& sign_config_table();

inline constexpr std::array<std::array<int, 2>, 6> kTetEdges = {
    {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

// s_q = sum a_i s_i for barycentric weights a.
double interpolate_sdf(const std::array<Vec3, 4>& corners, const std::array<double, 4>& sdf,
                       const std::array<double, 4>& weights);

// Zero of the linear SDF along segment [a, b]: (a*s_b - b*s_a) / (s_b - s_a).
Vec3 edge_zero_crossing(const Vec3& a, double s_a, const Vec3& b, double s_b);

// First-order motion of the crossing point when both endpoint SDFs shift by
// eps: eps * (a - b) / (s_b - s_a). Exact for the linear interpolant.
Vec3 vertex_noise_delta(const Vec3& a, const Vec3& b, double s_a, double s_b, double eps);

struct ExtractedMesh {
    TriMesh mesh;
    std::vector<std::array<int, 2>> vertex_edges; // grid edge (lo,hi) behind each mesh vertex
    std::vector<int> face_tets;                   // source tet per face
};

// Marching tetrahedra over deformed vertex positions (rest + deformation).
// Crossing vertices are shared between tets through canonical edge keys, so
// the output is indexed and deterministic. Exact-zero SDF values are treated
// as -1e-8; zero-area triangles are dropped.
ExtractedMesh extract_mesh_detail(const TetGrid& grid, const GridState& state);
TriMesh extract_mesh(const TetGrid& grid, const GridState& state);

} // namespace tetdiff
