#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tetdiff/trimesh.hpp"

namespace tetdiff {

// v <- v + lambda * (mean of 1-ring neighbors - v), `steps` Jacobi sweeps.
TriMesh laplacian_smooth(const TriMesh& mesh, double lambda, int steps);

// Drops connected components (faces linked through shared vertices) whose
// face count is below min_face_fraction of the total.
TriMesh remove_small_components(const TriMesh& mesh, double min_face_fraction = 0.05);

// Area-weighted face choice + uniform barycentric placement.
PointCloud sample_surface(const TriMesh& mesh, int n, std::uint64_t seed);

enum class Containment { Inside, Outside };

struct ContainmentVote {
    Containment result = Containment::Outside;
    int inside_votes = 0; // out of kInsideRays
    bool unanimous = true;
};

inline constexpr int kInsideRays = 5;

// Crossing-parity test along 5 fixed pseudo-random directions, majority vote.
ContainmentVote point_in_mesh_vote(const TriMesh& mesh, const Vec3& p);
Containment point_in_mesh(const TriMesh& mesh, const Vec3& p);

// Batch variant sharing one acceleration structure.
std::vector<ContainmentVote> points_in_mesh(const TriMesh& mesh, const std::vector<Vec3>& points);

struct CameraSpec {
    Vec3 position;
    Vec3 look_at;
    double focal = 0.0; // pixels
    int width = 0, height = 0;
};

DepthView raycast_depth(const TriMesh& mesh, const CameraSpec& camera);

// Depth blob: magic "DPTH", u32 version, camera (pos, look_at as f32x3 each,
// focal f32), u32 width, u32 height, row-major f32 depths with miss = -1.
void save_depth(const DepthView& view, const std::string& path);
DepthView load_depth(const std::string& path);

} // namespace tetdiff
