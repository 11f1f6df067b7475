#include "tetdiff/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tetdiff {

KdTree3::KdTree3(const std::vector<Vec3>& points) : points_(points) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()), 0);
}

int KdTree3::build(int begin, int end, int depth) {
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= 8) {
        nodes_.push_back(node);
        return static_cast<int>(nodes_.size()) - 1;
    }
    int axis = depth % 3;
    int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](int a, int b) {
                         if (points_[a][axis] != points_[b][axis])
                             return points_[a][axis] < points_[b][axis];
                         return a < b;
                     });
    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    int left = build(begin, mid, depth + 1);
    int right = build(mid, end, depth + 1);
    nodes_[self].left = left;
    nodes_[self].right = right;
    return self;
}

void KdTree3::search(int ni, const Vec3& q, int& best, double& best_d2) const {
    const Node& n = nodes_[ni];
    if (n.left < 0) {
        for (int i = n.begin; i < n.end; ++i) {
            int p = order_[i];
            double d2 = norm2(points_[p] - q);
            if (d2 < best_d2 || (d2 == best_d2 && p < best)) {
                best_d2 = d2;
                best = p;
            }
        }
        return;
    }
    double delta = q[n.axis] - n.split;
    int near = delta < 0.0 ? n.left : n.right;
    int far = delta < 0.0 ? n.right : n.left;
    search(near, q, best, best_d2);
    if (delta * delta <= best_d2) search(far, q, best, best_d2);
}

std::pair<int, double> KdTree3::nearest(const Vec3& q) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    if (root_ >= 0) search(root_, q, best, best_d2);
    return {best, best_d2};
}

bool ray_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b, const Vec3& c,
                  double& t_out, double t_min) {
    Vec3 e1 = b - a, e2 = c - a;
    Vec3 p = cross(d, e2);
    double det = dot(e1, p);
    if (std::fabs(det) < 1e-14) return false;
    double inv = 1.0 / det;
    Vec3 s = o - a;
    double u = dot(s, p) * inv;
    if (u < 0.0 || u > 1.0) return false;
    Vec3 q = cross(s, e1);
    double v = dot(d, q) * inv;
    if (v < 0.0 || u + v > 1.0) return false;
    double t = dot(e2, q) * inv;
    if (t <= t_min) return false;
    t_out = t;
    return true;
}

TriGrid::TriGrid(const TriMesh& mesh, int resolution) : mesh_(&mesh) {
    Aabb box;
    for (const Vec3& v : mesh.vertices) box.absorb(v);
    if (box.empty()) box.absorb({0, 0, 0});
    // pad so boundary triangles land strictly inside
    Vec3 pad = box.extent() * 0.01 + Vec3{1e-9, 1e-9, 1e-9};
    box.lo -= pad;
    box.hi += pad;
    lo_ = box.lo;

    res_ = resolution > 0
               ? resolution
               : std::clamp(static_cast<int>(std::cbrt(static_cast<double>(mesh.face_count()))), 4, 64);
    Vec3 ext = box.extent();
    cell_size_ = {ext.x / res_, ext.y / res_, ext.z / res_};
    cells_.assign(static_cast<std::size_t>(res_) * res_ * res_, {});

    for (int f = 0; f < mesh.face_count(); ++f) {
        Aabb fb;
        for (int c = 0; c < 3; ++c) fb.absorb(mesh.vertices[mesh.faces[f][c]]);
        int x0 = std::clamp(static_cast<int>((fb.lo.x - lo_.x) / cell_size_.x), 0, res_ - 1);
        int y0 = std::clamp(static_cast<int>((fb.lo.y - lo_.y) / cell_size_.y), 0, res_ - 1);
        int z0 = std::clamp(static_cast<int>((fb.lo.z - lo_.z) / cell_size_.z), 0, res_ - 1);
        int x1 = std::clamp(static_cast<int>((fb.hi.x - lo_.x) / cell_size_.x), 0, res_ - 1);
        int y1 = std::clamp(static_cast<int>((fb.hi.y - lo_.y) / cell_size_.y), 0, res_ - 1);
        int z1 = std::clamp(static_cast<int>((fb.hi.z - lo_.z) / cell_size_.z), 0, res_ - 1);
        for (int x = x0; x <= x1; ++x)
            for (int y = y0; y <= y1; ++y)
                for (int z = z0; z <= z1; ++z) cells_[cell_index(x, y, z)].push_back(f);
    }
}

void TriGrid::collect_candidates(const Vec3& origin, const Vec3& dir, std::vector<int>& out) const {
    out.clear();
    // clip ray to the grid box
    Vec3 hi = lo_ + Vec3{cell_size_.x * res_, cell_size_.y * res_, cell_size_.z * res_};
    double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (std::fabs(dir[a]) < 1e-300) {
            if (origin[a] < lo_[a] || origin[a] > hi[a]) return;
            continue;
        }
        double ta = (lo_[a] - origin[a]) / dir[a];
        double tb = (hi[a] - origin[a]) / dir[a];
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1) return;

    // 3D-DDA walk
    Vec3 entry = origin + dir * (t0 + 1e-12);
    int cx = std::clamp(static_cast<int>((entry.x - lo_.x) / cell_size_.x), 0, res_ - 1);
    int cy = std::clamp(static_cast<int>((entry.y - lo_.y) / cell_size_.y), 0, res_ - 1);
    int cz = std::clamp(static_cast<int>((entry.z - lo_.z) / cell_size_.z), 0, res_ - 1);
    int step[3], cell[3] = {cx, cy, cz};
    double t_next[3], t_delta[3];
    const Vec3 cs = cell_size_;
    for (int a = 0; a < 3; ++a) {
        if (dir[a] > 1e-300) {
            step[a] = 1;
            t_next[a] = ((lo_[a] + (cell[a] + 1) * cs[a]) - origin[a]) / dir[a];
            t_delta[a] = cs[a] / dir[a];
        } else if (dir[a] < -1e-300) {
            step[a] = -1;
            t_next[a] = ((lo_[a] + cell[a] * cs[a]) - origin[a]) / dir[a];
            t_delta[a] = -cs[a] / dir[a];
        } else {
            step[a] = 0;
            t_next[a] = std::numeric_limits<double>::infinity();
            t_delta[a] = std::numeric_limits<double>::infinity();
        }
    }
    while (true) {
        const auto& bucket = cells_[cell_index(cell[0], cell[1], cell[2])];
        out.insert(out.end(), bucket.begin(), bucket.end());
        int a = 0;
        if (t_next[1] < t_next[a]) a = 1;
        if (t_next[2] < t_next[a]) a = 2;
        if (t_next[a] > t1) break;
        cell[a] += step[a];
        if (cell[a] < 0 || cell[a] >= res_) break;
        t_next[a] += t_delta[a];
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
}

RayHit TriGrid::first_hit(const Vec3& origin, const Vec3& dir, double t_min) const {
    std::vector<int> candidates;
    collect_candidates(origin, dir, candidates);
    RayHit best;
    best.t = std::numeric_limits<double>::infinity();
    for (int f : candidates) {
        const auto& face = mesh_->faces[f];
        double t;
        if (ray_triangle(origin, dir, mesh_->vertices[face[0]], mesh_->vertices[face[1]],
                         mesh_->vertices[face[2]], t, t_min) &&
            t < best.t) {
            best.t = t;
            best.face = f;
        }
    }
    return best;
}

int TriGrid::count_hits(const Vec3& origin, const Vec3& dir, double t_min) const {
    std::vector<int> candidates;
    collect_candidates(origin, dir, candidates);
    int hits = 0;
    for (int f : candidates) {
        const auto& face = mesh_->faces[f];
        double t;
        if (ray_triangle(origin, dir, mesh_->vertices[face[0]], mesh_->vertices[face[1]],
                         mesh_->vertices[face[2]], t, t_min))
            ++hits;
    }
    return hits;
}

} // namespace tetdiff
