#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "tetdiff/trimesh.hpp"
#include "tetdiff/vec3.hpp"

namespace tetdiff {

// Median-split kd-tree over 3D points; nearest() returns the index of the
// closest point and its squared distance, ties resolved toward the lower
// original index.
class KdTree3 {
public:
    KdTree3() = default;
    explicit KdTree3(const std::vector<Vec3>& points);

    bool empty() const { return points_.empty(); }
    std::pair<int, double> nearest(const Vec3& query) const;

private:
    struct Node {
        int left = -1, right = -1;
        int begin = 0, end = 0; // leaf range into order_
        int axis = 0;
        double split = 0.0;
    };

    int build(int begin, int end, int depth);
    void search(int node, const Vec3& q, int& best, double& best_d2) const;

    std::vector<Vec3> points_;
    std::vector<int> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

struct RayHit {
    int face = -1;
    double t = 0.0;
};

// Möller-Trumbore; returns t > t_min along o + t*d, or a miss.
bool ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c,
                  double& t_out, double t_min = 1e-12);

// Uniform-grid triangle index for ray queries on a fixed mesh.
class TriGrid {
public:
    TriGrid() = default;
    explicit TriGrid(const TriMesh& mesh, int resolution = 0);

    // Nearest intersection with t > t_min; face -1 when the ray misses.
    RayHit first_hit(const Vec3& origin, const Vec3& dir, double t_min = 1e-12) const;
    // Number of distinct faces intersected with t > t_min (for parity tests).
    int count_hits(const Vec3& origin, const Vec3& dir, double t_min = 1e-12) const;

    const TriMesh& mesh() const { return *mesh_; }

private:
    void collect_candidates(const Vec3& origin, const Vec3& dir, std::vector<int>& out) const;
    std::size_t cell_index(int x, int y, int z) const {
        return (static_cast<std::size_t>(x) * res_ + y) * res_ + z;
    }

    const TriMesh* mesh_ = nullptr;
    Vec3 lo_{}, cell_size_{};
    int res_ = 1;
    std::vector<std::vector<std::int32_t>> cells_;
};

} // namespace tetdiff
