#include "tetdiff/marching.hpp"

#include <cmath>
#include <unordered_map>

#include "tetdiff/errors.hpp"

namespace tetdiff {

namespace {

int edge_index(int a, int b) {
    for (int e = 0; e < 6; ++e)
        if ((kTetEdges[e][0] == a && kTetEdges[e][1] == b) ||
            (kTetEdges[e][0] == b && kTetEdges[e][1] == a))
            return e;
    return -1;
}

// The table is combinatorial, so it can be derived once on a canonical
// positively oriented tet: form the candidate triangles from crossing-edge
// midpoints and keep the winding whose normal points from the negative
// vertex cluster toward the positive one.
std::array<SignConfig, 16> build_table() {
    const std::array<Vec3, 4> v = {Vec3{0, 0, 0}, Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

    std::array<SignConfig, 16> table{};
    for (int code = 0; code < 16; ++code) {
        SignConfig cfg;
        auto positive = [&](int i) { return (code >> i) & 1; };
        int pos_count = positive(0) + positive(1) + positive(2) + positive(3);

        Vec3 centroid_pos{}, centroid_neg{};
        for (int i = 0; i < 4; ++i) (positive(i) ? centroid_pos : centroid_neg) += v[i];
        if (pos_count > 0) centroid_pos *= 1.0 / pos_count;
        if (pos_count < 4) centroid_neg *= 1.0 / (4 - pos_count);
        Vec3 outward = centroid_pos - centroid_neg; // negative -> positive

        auto midpoint = [&](int e) { return (v[kTetEdges[e][0]] + v[kTetEdges[e][1]]) * 0.5; };
        auto oriented = [&](std::array<int, 3> tri) {
            Vec3 n = cross(midpoint(tri[1]) - midpoint(tri[0]), midpoint(tri[2]) - midpoint(tri[0]));
            if (dot(n, outward) < 0.0) std::swap(tri[1], tri[2]);
            return tri;
        };

        if (pos_count == 0 || pos_count == 4) {
            cfg.kind = SignCase::Empty;
        } else if (pos_count == 1 || pos_count == 3) {
            cfg.kind = SignCase::OneVsThree;
            int lone = -1;
            for (int i = 0; i < 4; ++i)
                if (positive(i) == (pos_count == 1)) lone = i;
            std::array<int, 3> tri;
            int t = 0;
            for (int i = 0; i < 4; ++i)
                if (i != lone) tri[t++] = edge_index(lone, i);
            cfg.triangles[0] = oriented(tri);
            cfg.triangle_count = 1;
        } else {
            cfg.kind = SignCase::TwoVsTwo;
            int a = -1, b = -1, c = -1, d = -1; // {a,b} positive, {c,d} negative
            for (int i = 0; i < 4; ++i)
                (positive(i) ? (a < 0 ? a : b) : (c < 0 ? c : d)) = i;
            // quad perimeter: consecutive crossings share a tet vertex
            int ac = edge_index(a, c), ad = edge_index(a, d);
            int bd = edge_index(b, d), bc = edge_index(b, c);
            cfg.triangles[0] = oriented({ac, ad, bd});
            cfg.triangles[1] = oriented({ac, bd, bc});
            cfg.triangle_count = 2;
        }
        table[code] = cfg;
    }
    return table;
}

} // namespace

const std::array<SignConfig, 16>& sign_config_table() {
    static const std::array<SignConfig, 16> table = build_table();
    return table;
}

double interpolate_sdf(const std::array<Vec3, 4>&, const std::array<double, 4>& sdf,
                       const std::array<double, 4>& weights) {
    double sum = weights[0] + weights[1] + weights[2] + weights[3];
    if (std::fabs(sum - 1.0) > 1e-9)
        throw std::domain_error("interpolate_sdf: barycentric weights must sum to 1");
    return weights[0] * sdf[0] + weights[1] * sdf[1] + weights[2] * sdf[2] + weights[3] * sdf[3];
}

Vec3 edge_zero_crossing(const Vec3& a, double s_a, const Vec3& b, double s_b) {
    if (s_a == 0.0 || s_b == 0.0 || (s_a > 0.0) == (s_b > 0.0))
        throw GeometryError("edge_zero_crossing: endpoint SDFs must straddle zero");
    return (a * s_b - b * s_a) / (s_b - s_a);
}

Vec3 vertex_noise_delta(const Vec3& a, const Vec3& b, double s_a, double s_b, double eps) {
    if (s_a == s_b) throw GeometryError("vertex_noise_delta: s_a == s_b");
    return (a - b) * (eps / (s_b - s_a));
}

ExtractedMesh extract_mesh_detail(const TetGrid& grid, const GridState& state) {
    if (state.vertex_count() != grid.vertex_count())
        throw DimensionError("extract_mesh: state does not match grid");

    // exact zeros are pushed to the negative side before sign classification
    std::vector<double> sdf = state.sdf;
    for (double& s : sdf)
        if (s == 0.0) s = -1e-8;

    std::vector<Vec3> deformed(grid.vertex_count());
    for (int v = 0; v < grid.vertex_count(); ++v)
        deformed[v] = grid.vertex_positions[v] + state.deformation[v];

    ExtractedMesh out;
    const auto& table = sign_config_table();

    auto key = [](int a, int b) {
        if (a > b) std::swap(a, b);
        return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
    };
    std::unordered_map<std::uint64_t, int> crossing;
    crossing.reserve(grid.tet_count());

    auto crossing_vertex = [&](int a, int b) {
        auto [it, fresh] = crossing.try_emplace(key(a, b), out.mesh.vertex_count());
        if (fresh) {
            int lo = std::min(a, b), hi = std::max(a, b);
            out.mesh.vertices.push_back(edge_zero_crossing(deformed[lo], sdf[lo], deformed[hi], sdf[hi]));
            out.vertex_edges.push_back({lo, hi});
        }
        return it->second;
    };

    for (int t = 0; t < grid.tet_count(); ++t) {
        const auto& tet = grid.tets[t];
        int code = 0;
        for (int i = 0; i < 4; ++i)
            if (sdf[tet[i]] > 0.0) code |= 1 << i;
        const SignConfig& cfg = table[code];
        for (int k = 0; k < cfg.triangle_count; ++k) {
            std::array<int, 3> tri;
            for (int c = 0; c < 3; ++c) {
                const auto& e = kTetEdges[cfg.triangles[k][c]];
                tri[c] = crossing_vertex(tet[e[0]], tet[e[1]]);
            }
            const auto& vs = out.mesh.vertices;
            Vec3 n = cross(vs[tri[1]] - vs[tri[0]], vs[tri[2]] - vs[tri[0]]);
            if (norm2(n) <= 1e-28) continue; // degenerate sliver
            out.mesh.faces.push_back(tri);
            out.face_tets.push_back(t);
        }
    }
    return out;
}

TriMesh extract_mesh(const TetGrid& grid, const GridState& state) {
    return extract_mesh_detail(grid, state).mesh;
}

} // namespace tetdiff
