#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "tetdiff/vec3.hpp"

namespace tetdiff {

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;
    std::vector<Vec3> normals; // optional, per vertex

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }
    bool empty() const { return faces.empty(); }
};

struct PointCloud {
    std::vector<Vec3> points;
    std::uint64_t seed = 0; // sampling seed record, when applicable

    int size() const { return static_cast<int>(points.size()); }
};

// Pinhole depth view. `depth` holds the ray-hit distance per pixel, row
// major; misses carry +infinity and hit_mask 0.
struct DepthView {
    Vec3 camera_pos;
    Vec3 look_at;
    double focal = 0.0; // pixels
    int width = 0, height = 0;
    std::vector<double> depth;
    std::vector<std::uint8_t> hit_mask;

    static constexpr double kMiss = std::numeric_limits<double>::infinity();

    double at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
    bool hit(int row, int col) const { return hit_mask[static_cast<std::size_t>(row) * width + col] != 0; }
    int hit_count() const;

    // Orthonormal camera frame; forward points from camera_pos to look_at.
    void frame(Vec3& forward, Vec3& right, Vec3& up) const;
    // Unit direction of the ray through pixel (row, col).
    Vec3 pixel_ray(int row, int col) const;
};

struct TopologyReport {
    bool watertight = false;
    int euler = 0; // V - E + F over referenced vertices
    int component_count = 0;
};

TopologyReport topology_check(const TriMesh& mesh);

// OBJ subset: `v x y z`, `f i j k ...` (1-based, fan-triangulated), comments.
TriMesh load_obj(const std::string& path);
void save_obj(const TriMesh& mesh, const std::string& path);

} // namespace tetdiff
